//! Reverse-mode tensor engine for the MetaLab encoder and graph classifier.
//!
//! The engine records every operation on a [`Graph`] tape. Values are dense
//! `ndarray` arrays, gradients are obtained with [`Graph::backward`], and every
//! primitive in [`ops`] has a hand-written vector-Jacobian product that the
//! test suite checks against central finite differences ([`gradcheck`]).
//!
//! Training runs in `f32`; gradient checks run the same code in `f64`.

mod adam;
pub mod checkpoint;
mod error;
pub mod gradcheck;
mod graph;
pub mod ops;
mod params;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub use adam::{Adam, AdamConfig};
pub use error::TensorError;
pub use graph::{Gradients, Graph, Var};
pub use params::{BoundParams, ParamStore};

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Floating point element type usable by the engine (`f32` or `f64`).
pub trait Real:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Default
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for constants.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}
