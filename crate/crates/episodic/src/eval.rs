use metalab_labgnn::predict;
use metalab_tensor::{ParamStore, Real};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::infer_edges;
use crate::{sample_episode, EpisodeSpec, EpisodicError, MetaLabConfig, Result, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub episodes: usize,
    pub seed: u64,
    /// Worker threads; the report does not depend on this.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mean: f64,
    pub ci95: f64,
    /// Query accuracy of every episode, in episode order.
    pub accuracies: Vec<f64>,
}

/// Mean and `1.96 · s / √n` with the sample standard deviation `s`.
pub fn accuracy_stats(accuracies: &[f64]) -> Result<(f64, f64)> {
    let n = accuracies.len();
    if n < 2 {
        return Err(EpisodicError::Config(format!("a confidence interval needs at least 2 episodes, got {n}")));
    }
    let mean = accuracies.iter().sum::<f64>() / n as f64;
    let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, 1.96 * var.sqrt() / (n as f64).sqrt()))
}

fn episode_accuracy<F: Real>(
    split: &Split,
    params: &ParamStore<F>,
    model: &MetaLabConfig,
    spec: EpisodeSpec,
    seed: u64,
    index: usize,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let batch = sample_episode(split, spec, &mut rng)?;
    let edges = infer_edges(&batch.images, params, model)?;
    let pred = predict(&edges, &batch.support_labels(), spec.k)?;
    let truth = batch.query_labels();
    let correct = pred.labels.iter().zip(truth.iter()).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Meta-test over `opts.episodes` independent single episodes. Episode `i`
/// draws from its own random stream, so results are identical for any
/// worker count.
pub fn evaluate<F: Real>(
    split: &Split,
    params: &ParamStore<F>,
    model: &MetaLabConfig,
    spec: EpisodeSpec,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let spec = EpisodeSpec { b: 1, ..spec };
    spec.validate()?;
    model.check_params(params)?;
    if opts.episodes < 2 {
        return Err(EpisodicError::Config(format!("evaluation needs at least 2 episodes, got {}", opts.episodes)));
    }
    let workers = opts.workers.clamp(1, opts.episodes);
    let mut slots: Vec<Option<Result<f64>>> = (0..opts.episodes).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..opts.episodes)
                        .step_by(workers)
                        .map(|i| (i, episode_accuracy(split, params, model, spec, opts.seed, i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for handle in handles {
            for (i, r) in handle.join().expect("evaluation worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    let accuracies = slots.into_iter().map(|s| s.expect("every episode evaluated")).collect::<Result<Vec<_>>>()?;
    let (mean, ci95) = accuracy_stats(&accuracies)?;
    Ok(EvalReport { mean, ci95, accuracies })
}
