//! Library side of the `metalab` command: configuration, the training and
//! evaluation drivers, ablation sweeps and metrics records.

pub mod commands;
pub mod config;
pub mod metrics;

pub use commands::{
    ablate, dump_lab, evaluate_checkpoint, evaluate_params, gradcheck, init_params, load_checkpoint, load_dataset,
    synth_data, trace_episode, train, AblationAxis, ChannelStats, EvalRow, GradcheckSummary, TrainOutcome,
};
pub use config::{RunConfig, SEED_ENV};
pub use metrics::{AblationRecord, MetricsLine};

use metalab_episodic::EpisodicError;
use metalab_tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for numeric failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<EpisodicError> for CliError {
    fn from(e: EpisodicError) -> Self {
        if e.is_numeric() {
            return CliError::Numeric(e.to_string());
        }
        match e {
            EpisodicError::Io(io) => CliError::Io(io),
            EpisodicError::Config(m) => CliError::Config(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::NonFinite(m) => CliError::Numeric(m),
            other => CliError::Config(other.to_string()),
        }
    }
}
