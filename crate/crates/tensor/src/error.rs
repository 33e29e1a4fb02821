use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: in_channels {in_channels} is not divisible by groups {groups}")]
    GroupDivisibility {
        op: &'static str,
        in_channels: usize,
        groups: usize,
    },

    #[error(
        "batch norm needs at least 2 samples along the batch axis, got {0}; \
         flatten the episode axes (B·T) into one batch axis before normalizing"
    )]
    BatchTooSmall(usize),

    #[error("pooling window {window} larger than input extent {extent}")]
    WindowTooLarge { window: usize, extent: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("parameter `{0}` registered twice")]
    DuplicateParam(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::Shape {
            op,
            detail: detail.into(),
        }
    }
}
