use std::io::Write;
use std::path::Path;
use std::time::Instant;

use metalab_colorspace::{rgb_to_llab, NormMode, RgbBatch};
use metalab_episodic::{
    check_total_loss, episode_input, evaluate, forward, make_synthetic_dataset, sample_episode, Dataset,
    EndToEndCheck, EvalOptions, Trainer,
};
use metalab_labgnn::write_trace;
use metalab_tensor::gradcheck::suite::primitive_suite;
use metalab_tensor::gradcheck::Coverage;
use metalab_tensor::{checkpoint, Graph, ParamStore};
use ndarray::{Array5, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::metrics::write_json_line;
use crate::{AblationRecord, CliError, MetricsLine, RunConfig};

const VAL_STREAM: u64 = 0x7661_6c00;
const TEST_STREAM: u64 = 0x7465_7374;

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let data = if cfg.dataset == "synthetic" {
        make_synthetic_dataset(cfg.synth_classes, cfg.synth_per_class, cfg.image_size, cfg.synth_seed)?
    } else {
        Dataset::load(&cfg.dataset)?
    };
    if data.size != cfg.image_size {
        return Err(CliError::Config(format!(
            "dataset images are {0}×{0} but image_size is {1}",
            data.size, cfg.image_size
        )));
    }
    Ok(data)
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn init_params(cfg: &RunConfig) -> Result<ParamStore<f32>, CliError> {
    Ok(cfg.model().init_params(&mut rng(cfg.seed, 0))?)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation accuracy, or the final ones when
    /// validation is off.
    pub params: ParamStore<f32>,
    pub iterations: usize,
    /// `(iteration, accuracy, ci95)` of the best validation.
    pub best_val: Option<(usize, f64, f64)>,
    pub last: MetricsLine,
    pub stopped_early: bool,
}

/// Meta-training with periodic validation; one metrics line per iteration.
pub fn train(cfg: &RunConfig, data: &Dataset, metrics: &mut dyn Write) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    if cfg.train_iters == 0 {
        return Err(CliError::Config("train_iters must be at least 1".into()));
    }
    let spec = cfg.episode_spec()?;
    let model = cfg.model();
    let mut trainer = Trainer::new(model, cfg.loss_weights(), init_params(cfg)?, cfg.adam())?;
    trainer.dump_dir = cfg.checkpoint.parent().map(|p| p.join("nonfinite"));
    let mut sampler = rng(cfg.seed, 1);
    let val_opts = EvalOptions { episodes: cfg.val_episodes, seed: cfg.seed ^ VAL_STREAM, workers: cfg.workers };
    let start = Instant::now();
    let mut best: Option<(usize, f64, f64)> = None;
    let mut best_params = None;
    let mut last = None;
    let mut stopped_early = false;
    let mut iterations = 0;
    for iter in 1..=cfg.train_iters {
        let batch = sample_episode(&data.train, spec, &mut sampler)?;
        let loss = trainer.step(&batch)?;
        iterations = iter;
        let validate = cfg.val_every > 0 && (iter % cfg.val_every == 0 || iter == cfg.train_iters);
        let val = if validate {
            let r = evaluate(&data.val, &trainer.params, &model, spec, &val_opts)?;
            if best.is_none_or(|(_, acc, _)| r.mean > acc) {
                best = Some((iter, r.mean, r.ci95));
                best_params = Some(trainer.params.clone());
            }
            Some((r.mean, r.ci95))
        } else {
            None
        };
        let line = MetricsLine {
            iter,
            loss_total: loss.total,
            loss_light_edge: loss.light_edge(),
            loss_color_edge: loss.color_edge(),
            loss_node: loss.node(),
            val_acc: val.map(|v| v.0),
            ci95: val.map(|v| v.1),
            wall_ms: start.elapsed().as_millis() as u64,
        };
        write_json_line(metrics, &line)?;
        last = Some(line);
        if let (Some(t), Some((acc, _))) = (cfg.early_stop, val) {
            if acc >= t {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best_params.unwrap_or(trainer.params),
        iterations,
        best_val: best,
        last: last.expect("at least one iteration"),
        stopped_early,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub k: usize,
    pub mean_acc: f64,
    pub ci95: f64,
    pub episodes: usize,
}

impl std::fmt::Display for EvalRow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "K={:<3} mean_acc {:.4} ± {:.4} ({} episodes)", self.k, self.mean_acc, self.ci95, self.episodes)
    }
}

/// Meta-test on the test split, once per way count in `ways`.
pub fn evaluate_params(
    cfg: &RunConfig,
    data: &Dataset,
    params: &ParamStore<f32>,
    ways: &[usize],
) -> Result<Vec<EvalRow>, CliError> {
    let opts = EvalOptions { episodes: cfg.eval_episodes, seed: cfg.seed ^ TEST_STREAM, workers: cfg.workers };
    ways.iter()
        .map(|&k| {
            let spec = metalab_episodic::EpisodeSpec::new(k, cfg.n_shot, cfg.q_query, 1)?;
            let r = evaluate(&data.test, params, &cfg.model(), spec, &opts)?;
            Ok(EvalRow { k, mean_acc: r.mean, ci95: r.ci95, episodes: r.accuracies.len() })
        })
        .collect()
}

pub fn load_checkpoint(cfg: &RunConfig) -> Result<ParamStore<f32>, CliError> {
    let params = checkpoint::load(&cfg.checkpoint)
        .map_err(|e| CliError::Config(format!("cannot load checkpoint {}: {e}", cfg.checkpoint.display())))?;
    cfg.model().check_params(&params)?;
    Ok(params)
}

pub fn evaluate_checkpoint(cfg: &RunConfig, data: &Dataset, ways: &[usize]) -> Result<Vec<EvalRow>, CliError> {
    evaluate_params(cfg, data, &load_checkpoint(cfg)?, ways)
}

/// Edge matrices of every generation for the first test episode.
pub fn trace_episode(cfg: &RunConfig, data: &Dataset, params: &ParamStore<f32>, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = metalab_episodic::EpisodeSpec::new(cfg.k_way, cfg.n_shot, cfg.q_query, 1)?;
    let batch = sample_episode(&data.test, spec, &mut rng(cfg.seed ^ TEST_STREAM, 0))?;
    let graph = Graph::new();
    let x = graph.constant(episode_input::<f32>(&batch.images, cfg.norm_mode)?);
    let history = forward(x, &params.bind_frozen(&graph), &cfg.model())?;
    write_trace(&history, out).map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    HiddenH,
    EmbedDim,
    Generations,
}

impl std::str::FromStr for AblationAxis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "hidden_h" => Ok(AblationAxis::HiddenH),
            "embed_dim" => Ok(AblationAxis::EmbedDim),
            "generations" => Ok(AblationAxis::Generations),
            other => Err(CliError::Config(format!(
                "unknown ablation axis `{other}` (expected hidden_h, embed_dim or generations)"
            ))),
        }
    }
}

impl AblationAxis {
    pub fn key(self) -> &'static str {
        match self {
            AblationAxis::HiddenH => "hidden_h",
            AblationAxis::EmbedDim => "embed_dim",
            AblationAxis::Generations => "generations",
        }
    }
}

/// Trains and evaluates once per value; writes one record per value.
pub fn ablate(
    cfg: &RunConfig,
    data: &Dataset,
    axis: AblationAxis,
    values: &[usize],
    curve: &mut dyn Write,
) -> Result<Vec<AblationRecord>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("ablation needs at least one value".into()));
    }
    let mut records = Vec::with_capacity(values.len());
    for &value in values {
        let mut run = cfg.clone();
        run.set(axis.key(), &value.to_string())?;
        run.validate()?;
        let start = Instant::now();
        let outcome = train(&run, data, &mut std::io::sink())?;
        let row = evaluate_params(&run, data, &outcome.params, &[run.k_way])?.remove(0);
        let record = AblationRecord {
            axis: axis.key().into(),
            value,
            mean_acc: row.mean_acc,
            ci95: row.ci95,
            iterations: outcome.iterations,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        write_json_line(curve, &record)?;
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckSummary {
    /// `(primitive, worst relative error)`.
    pub primitives: Vec<(&'static str, f64)>,
    pub end_to_end_worst: f64,
    pub trials: usize,
    pub tolerance: f64,
}

impl GradcheckSummary {
    pub fn passed(&self) -> bool {
        self.primitives.iter().all(|p| p.1 < self.tolerance) && self.end_to_end_worst < self.tolerance
    }
}

/// Finite-difference checks of every primitive and of the full loss.
pub fn gradcheck(trials: usize, seed: u64) -> Result<GradcheckSummary, CliError> {
    let primitives = primitive_suite(trials, seed, 1e-5)?
        .into_iter()
        .map(|p| (p.name, p.worst.max_rel_err))
        .collect();
    let problem = EndToEndCheck::default();
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let coverage = Coverage::Strided { stride: 7, offset: t };
        worst = worst.max(check_total_loss(&problem, seed.wrapping_add(t as u64), coverage)?.max_rel_err);
    }
    Ok(GradcheckSummary { primitives, end_to_end_worst: worst, trials, tolerance: 1e-5 })
}

pub fn synth_data(cfg: &RunConfig, out: &Path) -> Result<usize, CliError> {
    let data = make_synthetic_dataset(cfg.synth_classes, cfg.synth_per_class, cfg.image_size, cfg.synth_seed)?;
    data.save(out)?;
    Ok(data.num_images())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelStats {
    pub channel: &'static str,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// Writes `L.png`, `a.png`, `b.png` for one RGB image and returns per-channel
/// statistics of the raw Lab values.
pub fn dump_lab(image: &Path, out_dir: &Path) -> Result<Vec<ChannelStats>, CliError> {
    let img = image::open(image)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", image.display())))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let mut rgb = Array5::<f64>::zeros((1, 1, 3, h as usize, w as usize));
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            rgb[[0, 0, c, y as usize, x as usize]] = f64::from(px[c]) / 255.0;
        }
    }
    let batch = RgbBatch::new(rgb).map_err(|e| CliError::Config(e.to_string()))?;
    let llab = rgb_to_llab::<f64>(&batch, NormMode::Raw).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::create_dir_all(out_dir)?;
    let mut stats = Vec::new();
    for (name, channel, to_byte) in [
        ("L", 1usize, (|v: f64| v * 2.55) as fn(f64) -> f64),
        ("a", 2, |v| v + 128.0),
        ("b", 3, |v| v + 128.0),
    ] {
        let plane = llab.data().index_axis(Axis(2), channel).index_axis(Axis(1), 0).index_axis(Axis(0), 0).to_owned();
        let gray = image::GrayImage::from_fn(w, h, |x, y| {
            image::Luma([to_byte(plane[[y as usize, x as usize]]).round().clamp(0.0, 255.0) as u8])
        });
        gray.save(out_dir.join(format!("{name}.png"))).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
        stats.push(ChannelStats {
            channel: name,
            min: plane.iter().copied().fold(f64::INFINITY, f64::min),
            max: plane.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: plane.mean().unwrap_or(0.0),
        });
    }
    Ok(stats)
}
