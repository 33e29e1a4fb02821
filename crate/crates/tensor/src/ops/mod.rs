//! Differentiable primitives.
//!
//! Every function records one node on the graph of its inputs and returns a
//! new [`Var`]. Shapes are checked eagerly and reported as
//! [`TensorError::Shape`].

mod conv;
mod elementwise;
mod linalg;
mod loss;
mod norm;
mod pairwise;
mod pool;
mod shape;

use std::rc::Rc;

use ndarray::{ArrayD, Axis};

pub use conv::{conv2d_output_size, grouped_conv2d, Conv2dSpec};
pub use elementwise::{
    add, add_scalar, div, exp, mul, neg, relu, scale, sigmoid, square, sub,
};
pub use linalg::{bmm, linear, matmul};
pub use loss::{one_hot, softmax_cross_entropy};
pub use norm::{batchnorm1d, batchnorm2d};
pub use pool::{global_max_pool2d, maxpool2d};
pub use pairwise::{pairwise_abs_diff, pairwise_l1};
pub use shape::{concat, mean, reshape, set_diagonal, slice_axis, sum, sum_axis};

use crate::{Real, Result, TensorError, Var};

/// Numpy-style broadcast of two shapes.
pub(crate) fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
        let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(TensorError::shape(
                    op,
                    format!("cannot broadcast {a:?} with {b:?}"),
                ))
            }
        };
    }
    Ok(out)
}

/// Sums a broadcast gradient back down to `shape`.
pub(crate) fn reduce_to_shape<F: Real>(mut grad: ArrayD<F>, shape: &[usize]) -> ArrayD<F> {
    while grad.ndim() > shape.len() {
        grad = grad.sum_axis(Axis(0));
    }
    for (ax, &d) in shape.iter().enumerate() {
        if d == 1 && grad.shape()[ax] != 1 {
            grad = grad.sum_axis(Axis(ax)).insert_axis(Axis(ax));
        }
    }
    grad
}

/// The value itself when already row-major, otherwise a row-major copy.
pub(crate) fn standard<F: Real>(v: Rc<ArrayD<F>>) -> Rc<ArrayD<F>> {
    if v.is_standard_layout() {
        v
    } else {
        Rc::new(v.as_standard_layout().into_owned())
    }
}

pub(crate) fn expect_rank<F: Real>(op: &'static str, x: Var<'_, F>, rank: usize) -> Result<Vec<usize>> {
    let shape = x.shape();
    if shape.len() != rank {
        return Err(TensorError::shape(
            op,
            format!("expected rank {rank}, got shape {shape:?}"),
        ));
    }
    Ok(shape)
}
