//! Run configuration: defaults, a flat `key = value` file, the
//! `METALAB_SEED` environment variable and command-line flags, applied in
//! that order so later sources win.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use metalab_colorspace::NormMode;
use metalab_episodic::{EpisodeSpec, GammaMode, LossWeights, MetaLabConfig};
use metalab_labnet::LabNetConfig;
use metalab_tensor::AdamConfig;

use crate::CliError;

pub const SEED_ENV: &str = "METALAB_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub k_way: usize,
    pub n_shot: usize,
    pub q_query: usize,
    pub batch_episodes: usize,
    pub hidden_h: usize,
    pub embed_dim: usize,
    pub image_size: usize,
    /// `g`; derived from `q_query` when unset.
    pub generations: Option<usize>,
    /// `g̃`; `min(3, g)` when unset.
    pub loss_gens: Option<usize>,
    pub lambda: f64,
    pub beta: f64,
    pub gamma: f64,
    pub gamma_mode: GammaMode,
    pub lr: f64,
    pub train_iters: usize,
    /// Validate every this many iterations; 0 disables validation.
    pub val_every: usize,
    pub val_episodes: usize,
    /// Stop once validation accuracy reaches this value.
    pub early_stop: Option<f64>,
    pub eval_episodes: usize,
    pub workers: usize,
    pub seed: u64,
    /// `synthetic` or a directory with `train/`, `val/`, `test/`.
    pub dataset: String,
    pub synth_classes: usize,
    pub synth_per_class: usize,
    pub synth_seed: u64,
    pub norm_mode: NormMode,
    pub checkpoint: PathBuf,
    /// Metrics destination; standard output when unset.
    pub metrics: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k_way: 5,
            n_shot: 1,
            q_query: 1,
            batch_episodes: 2,
            hidden_h: 96,
            embed_dim: 128,
            image_size: 84,
            generations: None,
            loss_gens: None,
            lambda: 0.1,
            beta: 0.1,
            gamma: 1.0,
            gamma_mode: GammaMode::Constant,
            lr: 1e-3,
            train_iters: 500,
            val_every: 50,
            val_episodes: 50,
            early_stop: None,
            eval_episodes: 500,
            workers: 1,
            seed: 0,
            dataset: "synthetic".into(),
            synth_classes: 20,
            synth_per_class: 50,
            synth_seed: 1,
            norm_mode: NormMode::Normalized,
            checkpoint: PathBuf::from("metalab.ckpt"),
            metrics: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("invalid value `{value}` for `{key}`: {e}")))
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    match value {
        "" | "auto" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "k_way", "n_shot", "q_query", "batch_episodes", "hidden_h", "embed_dim", "image_size", "generations",
        "loss_gens", "lambda", "beta", "gamma", "gamma_mode", "lr", "train_iters", "val_every", "val_episodes",
        "early_stop", "eval_episodes", "workers", "seed", "dataset", "synth_classes", "synth_per_class",
        "synth_seed", "norm_mode", "checkpoint", "metrics",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key.trim() {
            "k_way" | "k" => self.k_way = parse(key, v)?,
            "n_shot" | "n" => self.n_shot = parse(key, v)?,
            "q_query" | "q" => self.q_query = parse(key, v)?,
            "batch_episodes" | "b" => self.batch_episodes = parse(key, v)?,
            "hidden_h" => self.hidden_h = parse(key, v)?,
            "embed_dim" => self.embed_dim = parse(key, v)?,
            "image_size" => self.image_size = parse(key, v)?,
            "generations" => self.generations = optional(key, v)?,
            "loss_gens" => self.loss_gens = optional(key, v)?,
            "lambda" => self.lambda = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "gamma_mode" => self.gamma_mode = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "train_iters" | "iters" => self.train_iters = parse(key, v)?,
            "val_every" => self.val_every = parse(key, v)?,
            "val_episodes" => self.val_episodes = parse(key, v)?,
            "early_stop" => self.early_stop = optional(key, v)?,
            "eval_episodes" => self.eval_episodes = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "dataset" => self.dataset = v.to_string(),
            "synth_classes" => self.synth_classes = parse(key, v)?,
            "synth_per_class" => self.synth_per_class = parse(key, v)?,
            "synth_seed" => self.synth_seed = parse(key, v)?,
            "norm_mode" => self.norm_mode = parse(key, v)?,
            "checkpoint" => self.checkpoint = PathBuf::from(v),
            "metrics" => self.metrics = optional::<String>(key, v)?.map(PathBuf::from),
            other => return Err(CliError::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected `key = value`, got `{line}`", no + 1)))?;
            self.set(key, value)
                .map_err(|e| CliError::Config(format!("{origin}:{}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn apply_env(&mut self, seed: Option<&str>) -> Result<(), CliError> {
        if let Some(s) = seed {
            self.seed = parse(SEED_ENV, s)?;
        }
        Ok(())
    }

    /// Defaults, then `file`, then the seed variable, then `overrides`.
    pub fn resolve(file: Option<&Path>, env_seed: Option<&str>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        cfg.apply_env(env_seed)?;
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// `g`: explicit, or 5 / 10 / 15 for `Q` up to 1 / 10 / beyond.
    pub fn generations(&self) -> usize {
        self.generations.unwrap_or(match self.q_query {
            0..=1 => 5,
            2..=10 => 10,
            _ => 15,
        })
    }

    /// `g̃`: explicit, or `min(3, g)`.
    pub fn loss_gens(&self) -> usize {
        self.loss_gens.unwrap_or(3.min(self.generations()))
    }

    pub fn episode_spec(&self) -> Result<EpisodeSpec, CliError> {
        Ok(EpisodeSpec::new(self.k_way, self.n_shot, self.q_query, self.batch_episodes)?)
    }

    pub fn model(&self) -> MetaLabConfig {
        MetaLabConfig {
            labnet: LabNetConfig {
                hidden_h: self.hidden_h,
                embed_dim: self.embed_dim,
                input_size: self.image_size,
                ..LabNetConfig::default()
            },
            generations: self.generations(),
            norm_mode: self.norm_mode,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda: self.lambda,
            beta: self.beta,
            gamma: self.gamma,
            gate: self.loss_gens(),
            gamma_mode: self.gamma_mode,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, ..AdamConfig::default() }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.episode_spec()?;
        self.model().validate()?;
        self.loss_weights().validate(self.generations())?;
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(CliError::Config(format!("lr must be finite and non-negative, got {}", self.lr)));
        }
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if self.val_every > 0 && self.val_episodes < 2 {
            return Err(CliError::Config("val_episodes must be at least 2 when validating".into()));
        }
        if self.eval_episodes < 2 {
            return Err(CliError::Config("eval_episodes must be at least 2".into()));
        }
        if let Some(t) = self.early_stop {
            if !(0.0..=1.0).contains(&t) {
                return Err(CliError::Config(format!("early_stop must lie in [0, 1], got {t}")));
            }
        }
        Ok(())
    }

    /// The configuration as a file that [`RunConfig::apply_text`] reads back.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
        let pairs: Vec<(&str, String)> = vec![
            ("k_way", self.k_way.to_string()),
            ("n_shot", self.n_shot.to_string()),
            ("q_query", self.q_query.to_string()),
            ("batch_episodes", self.batch_episodes.to_string()),
            ("hidden_h", self.hidden_h.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("image_size", self.image_size.to_string()),
            ("generations", opt(self.generations.map(|g| g.to_string()))),
            ("loss_gens", opt(self.loss_gens.map(|g| g.to_string()))),
            ("lambda", self.lambda.to_string()),
            ("beta", self.beta.to_string()),
            ("gamma", self.gamma.to_string()),
            ("gamma_mode", self.gamma_mode.to_string()),
            ("lr", self.lr.to_string()),
            ("train_iters", self.train_iters.to_string()),
            ("val_every", self.val_every.to_string()),
            ("val_episodes", self.val_episodes.to_string()),
            ("early_stop", opt(self.early_stop.map(|t| t.to_string()))),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("workers", self.workers.to_string()),
            ("seed", self.seed.to_string()),
            ("dataset", self.dataset.clone()),
            ("synth_classes", self.synth_classes.to_string()),
            ("synth_per_class", self.synth_per_class.to_string()),
            ("synth_seed", self.synth_seed.to_string()),
            ("norm_mode", self.norm_mode.to_string()),
            ("checkpoint", self.checkpoint.display().to_string()),
            ("metrics", opt(self.metrics.as_ref().map(|p| p.display().to_string()))),
        ];
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
