use metalab_tensor::{ParamStore, Real};
use ndarray::{ArrayD, IxDyn};
use rand::Rng;

use crate::{GnnError, Result};

/// Which subgraph a similarity network or edge matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Light,
    Color,
}

impl Branch {
    pub(crate) fn similarity_prefix(self) -> &'static str {
        match self {
            Branch::Light => "labgnn.sim_light",
            Branch::Color => "labgnn.sim_color",
        }
    }
}

pub(crate) const COLOR_LAYERING: &str = "labgnn.cl";
pub(crate) const LIGHT_GRADIENT: &str = "labgnn.lg";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnnConfig {
    /// Node feature width `d`; equals the encoder's embedding dimension.
    pub embed_dim: usize,
    pub bn_eps: f64,
}

impl GnnConfig {
    pub fn new(embed_dim: usize) -> Self {
        GnnConfig { embed_dim, bn_eps: 1e-5 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(GnnError::Config("embed_dim must be positive".into()));
        }
        if self.bn_eps.is_nan() || self.bn_eps <= 0.0 {
            return Err(GnnError::Config("bn_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.embed_dim;
        let mut out = Vec::new();
        for branch in [Branch::Light, Branch::Color] {
            let p = branch.similarity_prefix();
            out.push((format!("{p}.fc1.w"), vec![d, d]));
            out.push((format!("{p}.bn.gamma"), vec![d]));
            out.push((format!("{p}.bn.beta"), vec![d]));
            out.push((format!("{p}.fc2.w"), vec![1, d]));
            out.push((format!("{p}.fc2.b"), vec![1]));
        }
        for p in [COLOR_LAYERING, LIGHT_GRADIENT] {
            out.push((format!("{p}.fc1.w"), vec![d, 2 * d]));
            out.push((format!("{p}.fc1.b"), vec![d]));
            out.push((format!("{p}.fc2.w"), vec![d, d]));
            out.push((format!("{p}.fc2.b"), vec![d]));
        }
        out
    }

    /// `U(±1/√fan_in)` for affine maps, unit/zero batch-norm affine. The
    /// similarity output layers start at zero, so an untrained model scores
    /// every pair at 0.5 and prefers no class.
    pub fn init_params<F: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParamStore<F>> {
        self.validate()?;
        let mut store = ParamStore::new();
        for (name, shape) in self.param_shapes() {
            let value = if name.ends_with(".gamma") {
                ArrayD::from_elem(IxDyn(&shape), F::one())
            } else if name.ends_with(".beta") || (name.starts_with("labgnn.sim_") && name.contains(".fc2.")) {
                ArrayD::zeros(IxDyn(&shape))
            } else {
                let fan_in = if name.ends_with(".w") {
                    shape[1]
                } else if name.starts_with(COLOR_LAYERING) || name.starts_with(LIGHT_GRADIENT) {
                    if name.contains("fc1") { 2 * self.embed_dim } else { self.embed_dim }
                } else {
                    self.embed_dim
                };
                let bound = 1.0 / (fan_in as f64).sqrt();
                ArrayD::from_shape_simple_fn(IxDyn(&shape), || F::of(rng.random_range(-bound..=bound)))
            };
            store.insert(name, value)?;
        }
        Ok(store)
    }
}
