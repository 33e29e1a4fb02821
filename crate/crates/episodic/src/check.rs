use metalab_colorspace::{NormMode, RgbBatch};
use metalab_labnet::LabNetConfig;
use metalab_tensor::gradcheck::{check_gradients_opts, Coverage, GradCheckOptions, GradCheckReport};
use metalab_tensor::{BoundParams, ParamStore};
use ndarray::{Array2, Array5};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{episode_input, forward};
use crate::{total_loss, EpisodeSpec, LossWeights, MetaLabConfig, Result};

/// Size of the end-to-end gradient check problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndToEndCheck {
    pub spec: EpisodeSpec,
    pub model: MetaLabConfig,
    pub weights: LossWeights,
}

impl Default for EndToEndCheck {
    fn default() -> Self {
        EndToEndCheck {
            spec: EpisodeSpec { k: 2, n: 1, q: 1, b: 1 },
            model: MetaLabConfig {
                labnet: LabNetConfig { hidden_h: 2, embed_dim: 8, input_size: 16, bn_eps: 1e-5 },
                generations: 2,
                norm_mode: NormMode::Normalized,
            },
            weights: LossWeights { gate: 2, ..LossWeights::default() },
        }
    }
}

/// Step ladder and relative-error floor for the end-to-end check. Below a
/// magnitude of 1e-6 a gradient entry of this loss cannot be told apart
/// from zero by double-precision central differences.
pub fn end_to_end_options(coverage: Coverage) -> GradCheckOptions {
    GradCheckOptions { steps: vec![1e-5, 1e-4, 1e-3, 1e-6, 1e-7], tolerance: 1e-5, floor: 1e-6, richardson: true, coverage }
}

/// Central-difference check of `L_total` with respect to every parameter
/// of encoder and graph, on random images and randomly perturbed
/// parameters drawn from `seed`.
pub fn check_total_loss(problem: &EndToEndCheck, seed: u64, coverage: Coverage) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params: ParamStore<f64> = problem.model.init_params(&mut rng)?;
    for (_, value) in params.iter_mut() {
        value.mapv_inplace(|v| v + rng.random_range(-0.3..0.3));
    }
    let spec = problem.spec;
    let s = problem.model.labnet.input_size;
    let images = RgbBatch::new(Array5::from_shape_fn((spec.b, spec.t(), 3, s, s), |_| rng.random_range(0.0..1.0)))?;
    let x = episode_input::<f64>(&images, problem.model.norm_mode)?;
    let labels = Array2::from_shape_fn((spec.b, spec.t()), |(_, j)| {
        if j < spec.support_len() {
            j / spec.n
        } else {
            (j - spec.support_len()) / spec.q
        }
    });
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let inputs: Vec<_> = params.iter().map(|(_, v)| v.clone()).collect();
    let model = problem.model;
    let weights = problem.weights;
    let report = check_gradients_opts(
        |graph, vars| {
            let bound: BoundParams<'_, f64> = names.iter().cloned().zip(vars.iter().copied()).collect();
            let history = forward(graph.constant(x.clone()), &bound, &model)
                .map_err(|e| metalab_tensor::TensorError::NonFinite(e.to_string()))?;
            let (loss, _) = total_loss(&history, &labels, &spec, &weights)
                .map_err(|e| metalab_tensor::TensorError::NonFinite(e.to_string()))?;
            Ok(loss)
        },
        &inputs,
        &end_to_end_options(coverage),
    )?;
    Ok(report)
}
