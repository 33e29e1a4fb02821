use std::path::PathBuf;

use metalab_tensor::{checkpoint, Adam, AdamConfig, Graph, ParamStore, Real};

use crate::model::{episode_input, forward};
use crate::{total_loss, EpisodeBatch, EpisodicError, LossBreakdown, LossWeights, MetaLabConfig, Result};

/// Forward, backward and one Adam update on `batch`.
///
/// Parameters are left untouched when the loss or any gradient is not
/// finite.
pub fn meta_train_step<F: Real>(
    batch: &EpisodeBatch,
    params: &mut ParamStore<F>,
    model: &MetaLabConfig,
    weights: &LossWeights,
    optimizer: &mut Adam<F>,
) -> Result<LossBreakdown> {
    weights.validate(model.generations)?;
    let step = optimizer.step_count() + 1;
    let x = episode_input::<F>(&batch.images, model.norm_mode)?;
    let (breakdown, grads) = {
        let graph = Graph::new();
        let bound = params.bind(&graph);
        let history = forward(graph.constant(x), &bound, model)?;
        let (total, breakdown) = total_loss(&history, &batch.labels, &batch.spec, weights)?;
        if !breakdown.total.is_finite() {
            return Err(EpisodicError::NonFinite { what: format!("loss {}", breakdown.total), step, dump: None });
        }
        let mut grads = graph.backward(total)?;
        (breakdown, bound.take_gradients(&mut grads))
    };
    if let Some((name, _)) = grads.iter().find(|(_, g)| g.iter().any(|v| !v.is_finite())) {
        return Err(EpisodicError::NonFinite { what: format!("gradient of {name}"), step, dump: None });
    }
    optimizer.step(params, &grads)?;
    Ok(breakdown)
}

/// Parameters, optimizer state and loss settings of one training run.
#[derive(Debug, Clone)]
pub struct Trainer<F: Real> {
    pub model: MetaLabConfig,
    pub weights: LossWeights,
    pub params: ParamStore<F>,
    pub optimizer: Adam<F>,
    /// Where parameters are written when a step goes non-finite.
    pub dump_dir: Option<PathBuf>,
}

impl<F: Real> Trainer<F> {
    pub fn new(model: MetaLabConfig, weights: LossWeights, params: ParamStore<F>, adam: AdamConfig) -> Result<Self> {
        model.validate()?;
        model.check_params(&params)?;
        weights.validate(model.generations)?;
        Ok(Trainer { model, weights, params, optimizer: Adam::new(adam), dump_dir: None })
    }

    pub fn step(&mut self, batch: &EpisodeBatch) -> Result<LossBreakdown> {
        let step = self.optimizer.step_count() + 1;
        match meta_train_step(batch, &mut self.params, &self.model, &self.weights, &mut self.optimizer) {
            Err(err) if err.is_numeric() => {
                let what = match err {
                    EpisodicError::NonFinite { what, .. } => what,
                    other => other.to_string(),
                };
                let dump = match &self.dump_dir {
                    Some(dir) => {
                        std::fs::create_dir_all(dir)?;
                        let path = dir.join(format!("nonfinite_step{step}.ckpt"));
                        checkpoint::save(&self.params, &path)?;
                        Some(path)
                    }
                    None => None,
                };
                Err(EpisodicError::NonFinite { what, step, dump })
            }
            other => other,
        }
    }
}
