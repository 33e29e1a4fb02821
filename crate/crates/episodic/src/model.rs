use metalab_colorspace::{rgb_to_llab, NormMode, RgbBatch};
use metalab_labgnn::{run_generations, DualGraphState, GnnConfig};
use metalab_labnet::{encode, LabNetConfig};
use metalab_tensor::{BoundParams, Graph, ParamStore, Real, Var};
use rand::Rng;

use crate::{EpisodicError, Result};

/// Encoder, graph and input-transform settings of one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaLabConfig {
    pub labnet: LabNetConfig,
    pub generations: usize,
    pub norm_mode: NormMode,
}

impl MetaLabConfig {
    pub fn gnn(&self) -> GnnConfig {
        GnnConfig { embed_dim: self.labnet.embed_dim, bn_eps: self.labnet.bn_eps }
    }

    pub fn validate(&self) -> Result<()> {
        self.labnet.validate()?;
        self.gnn().validate()?;
        if self.generations == 0 {
            return Err(EpisodicError::Config("generations must be at least 1".into()));
        }
        Ok(())
    }

    /// Every trainable parameter of encoder and graph, freshly initialized.
    pub fn init_params<F: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParamStore<F>> {
        self.validate()?;
        let mut store = self.labnet.init_params::<F, R>(rng)?;
        for (name, value) in self.gnn().init_params::<F, R>(rng)?.iter() {
            store.insert(name, value.clone())?;
        }
        Ok(store)
    }

    /// Names and shapes a checkpoint must have to fit this configuration.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes = self.labnet.param_shapes();
        shapes.extend(self.gnn().param_shapes());
        shapes.sort();
        shapes
    }

    pub fn check_params<F: Real>(&self, params: &ParamStore<F>) -> Result<()> {
        let expected = self.param_shapes();
        let mut got: Vec<(String, Vec<usize>)> =
            params.iter().map(|(n, v)| (n.to_string(), v.shape().to_vec())).collect();
        got.sort();
        if got != expected {
            let missing = expected.iter().find(|e| !got.contains(e)).or_else(|| got.iter().find(|g| !expected.contains(g)));
            return Err(EpisodicError::Config(format!(
                "parameters do not match the model configuration (first difference: {missing:?})"
            )));
        }
        Ok(())
    }
}

/// Γ: RGB episodes to the `(L, L, a, b)` input tensor.
pub fn episode_input<F: Real>(images: &RgbBatch, norm_mode: NormMode) -> Result<ndarray::ArrayD<F>> {
    Ok(rgb_to_llab::<F>(images, norm_mode)?.into_inner().into_dyn())
}

/// LabNet followed by `generations` LabGNN cycles.
pub fn forward<'g, F: Real>(
    x_llab: Var<'g, F>,
    params: &BoundParams<'g, F>,
    cfg: &MetaLabConfig,
) -> Result<Vec<DualGraphState<'g, F>>> {
    let emb = encode(x_llab, params, &cfg.labnet)?;
    Ok(run_generations(&emb, cfg.generations, params, &cfg.gnn())?)
}

/// Final light edges of a frozen forward pass.
pub fn infer_edges<F: Real>(images: &RgbBatch, params: &ParamStore<F>, cfg: &MetaLabConfig) -> Result<ndarray::ArrayD<F>> {
    let graph = Graph::new();
    let x = graph.constant(episode_input::<F>(images, cfg.norm_mode)?);
    let history = forward(x, &params.bind_frozen(&graph), cfg)?;
    Ok(history.last().expect("at least one generation").e_light.value().as_ref().clone())
}
