//! Episodic meta-learning around LabNet and LabGNN: datasets, the K-way
//! N-shot sampler, the per-generation losses, one Adam meta-training step
//! and the meta-test loop with a 95% confidence interval.

mod check;
mod dataset;
mod eval;
mod loss;
mod model;
mod sampler;
mod synthetic;
mod train;

pub use check::{check_total_loss, end_to_end_options, EndToEndCheck};
pub use dataset::{ClassImages, Dataset, Split, SplitKind};
pub use eval::{accuracy_stats, evaluate, EvalOptions, EvalReport};
pub use loss::{edge_loss, node_loss, total_loss, GammaMode, GenerationLoss, LossBreakdown, LossWeights};
pub use model::{episode_input, forward, infer_edges, MetaLabConfig};
pub use sampler::{sample_episode, EpisodeBatch, EpisodeSpec};
pub use synthetic::{
    class_signature, make_synthetic_dataset, make_synthetic_dataset_with, ClassSignature, Shape, SyntheticOptions, HUE_BINS,
    LIGHTNESS_BANDS,
};
pub use train::{meta_train_step, Trainer};

use metalab_colorspace::ColorError;
use metalab_labgnn::GnnError;
use metalab_labnet::LabNetError;
use metalab_tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum EpisodicError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite {what} at step {step}{}", dump.as_ref().map(|p| format!(" (state written to {})", p.display())).unwrap_or_default())]
    NonFinite {
        what: String,
        step: u64,
        dump: Option<std::path::PathBuf>,
    },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    LabNet(#[from] LabNetError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Color(#[from] ColorError),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EpisodicError {
    /// Errors caused by the numbers rather than by the configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            EpisodicError::NonFinite { .. } | EpisodicError::Gnn(GnnError::NonFinite(_)) | EpisodicError::Tensor(TensorError::NonFinite(_))
        )
    }
}

pub type Result<T, E = EpisodicError> = std::result::Result<T, E>;
