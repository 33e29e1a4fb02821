//! LabGNN: two coupled graphs over the images of an episode.
//!
//! The light graph starts from the lightness embeddings and the color graph
//! from the color embeddings. Each generation runs
//! `E^L → V^C → E^C → V^L`: light edges are refreshed from the light nodes,
//! color nodes aggregate along light edges (color layering), color edges are
//! refreshed from the new color nodes, and light nodes aggregate along color
//! edges (light gradient). Parameters are shared across generations.

mod graph;
mod params;
pub mod reference;
mod trace;

pub use graph::{
    class_scores, color_layering, init_edges, init_nodes, light_gradient, predict, run_generations, similarity,
    support_onehot,
    update_color_edges, update_light_edges, DualGraphState, Prediction,
};
pub use params::{Branch, GnnConfig};
pub use trace::write_trace;

use metalab_tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum GnnError {
    #[error("invalid graph configuration: {0}")]
    Config(String),
    #[error("edge trace is limited to {limit} nodes per episode, got {got}")]
    TraceTooLarge { limit: usize, got: usize },
    #[error("non-finite aggregation weights in generation {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("trace output failed: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = GnnError> = std::result::Result<T, E>;
