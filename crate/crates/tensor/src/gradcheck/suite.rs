//! Randomized finite-difference suite over every primitive in [`crate::ops`].
//!
//! Each case draws a random shape and random inputs, composes the primitive
//! with a random weighted sum (so the upstream gradient is not uniform), and
//! runs [`check_gradients`]. Inputs that feed kinked primitives (ReLU, max,
//! absolute value) are drawn well separated so that the central difference
//! never straddles a kink.

use ndarray::{ArrayD, IxDyn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_gradients, GradCheckReport};
use crate::ops::{self, Conv2dSpec};
use crate::{Graph, Result, Var};

type CaseOp = Box<dyn for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Result<Var<'g, f64>>>;

/// Worst result of one primitive over all trials.
#[derive(Debug, Clone)]
pub struct PrimitiveCheck {
    pub name: &'static str,
    pub trials: usize,
    pub worst: GradCheckReport,
}

pub const PRIMITIVES: &[&str] = &[
    "add",
    "sub",
    "mul",
    "div",
    "scale",
    "add_scalar",
    "relu",
    "sigmoid",
    "exp",
    "square",
    "matmul",
    "bmm",
    "linear",
    "concat",
    "slice_axis",
    "reshape",
    "set_diagonal",
    "sum_axis",
    "mean",
    "pairwise_l1",
    "pairwise_abs_diff",
    "softmax_cross_entropy",
    "grouped_conv2d",
    "batchnorm2d",
    "batchnorm1d",
    "maxpool2d",
    "global_max_pool2d",
];

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> ArrayD<f64> {
    ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(lo..hi))
}

/// Pairwise-distinct entries in `[-1, 1)`, at least `1/len` apart and at
/// least `0.5/len` away from zero.
pub fn separated(rng: &mut ChaCha8Rng, shape: &[usize]) -> ArrayD<f64> {
    let len: usize = shape.iter().product();
    let step = 2.0 / len.max(1) as f64;
    let mut vals: Vec<f64> = (0..len)
        .map(|i| -1.0 + (i as f64 + 0.25 + 0.5 * rng.random::<f64>()) * step)
        .collect();
    vals.shuffle(rng);
    ArrayD::from_shape_vec(IxDyn(shape), vals).expect("sized")
}

fn weighted<'g>(y: Var<'g, f64>, w: &ArrayD<f64>) -> Result<Var<'g, f64>> {
    let w = y.graph().constant(w.clone());
    Ok(ops::sum(ops::mul(y, w)?))
}

fn dims(rng: &mut ChaCha8Rng, rank: usize, max: usize) -> Vec<usize> {
    (0..rank).map(|_| rng.random_range(1..=max)).collect()
}

/// Builds one random instance of `name`: inputs and the scalar-valued op.
pub fn random_case(name: &str, rng: &mut ChaCha8Rng) -> (Vec<ArrayD<f64>>, CaseOp) {
    macro_rules! out_weights {
        ($shape:expr) => {
            uniform(rng, &$shape, -1.0, 1.0)
        };
    }
    match name {
        "add" | "sub" | "mul" | "div" => {
            let a_shape = dims(rng, 3, 4);
            // second operand broadcasts along a random subset of axes
            let b_shape: Vec<usize> = a_shape
                .iter()
                .map(|&d| if rng.random_bool(0.3) { 1 } else { d })
                .collect();
            let a = uniform(rng, &a_shape, -1.0, 1.0);
            let b = if name == "div" {
                uniform(rng, &b_shape, 0.5, 2.0).mapv(|v| if rng.random_bool(0.5) { v } else { -v })
            } else {
                uniform(rng, &b_shape, -1.0, 1.0)
            };
            let w = out_weights!(a_shape);
            let kind = name.to_string();
            let op: CaseOp = Box::new(move |_, v| {
                let y = match kind.as_str() {
                    "add" => ops::add(v[0], v[1])?,
                    "sub" => ops::sub(v[0], v[1])?,
                    "mul" => ops::mul(v[0], v[1])?,
                    _ => ops::div(v[0], v[1])?,
                };
                weighted(y, &w)
            });
            (vec![a, b], op)
        }
        "scale" | "add_scalar" | "sigmoid" | "exp" | "square" => {
            let shape = dims(rng, 2, 5);
            let x = uniform(rng, &shape, -2.0, 2.0);
            let w = out_weights!(shape);
            let c: f64 = rng.random_range(-3.0..3.0);
            let op: CaseOp = match name {
                "scale" => Box::new(move |_, v| weighted(ops::scale(v[0], c), &w)),
                "add_scalar" => Box::new(move |_, v| weighted(ops::square(ops::add_scalar(v[0], c)), &w)),
                "sigmoid" => Box::new(move |_, v| weighted(ops::sigmoid(v[0]), &w)),
                "exp" => Box::new(move |_, v| weighted(ops::exp(v[0]), &w)),
                _ => Box::new(move |_, v| weighted(ops::square(v[0]), &w)),
            };
            (vec![x], op)
        }
        "relu" => {
            let shape = dims(rng, 3, 4);
            let x = separated(rng, &shape);
            let w = out_weights!(shape);
            (vec![x], Box::new(move |_, v| weighted(ops::relu(v[0]), &w)))
        }
        "matmul" => {
            let (m, k, n) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(1..6));
            let a = uniform(rng, &[m, k], -1.0, 1.0);
            let b = uniform(rng, &[k, n], -1.0, 1.0);
            let w = out_weights!([m, n]);
            (vec![a, b], Box::new(move |_, v| weighted(ops::matmul(v[0], v[1])?, &w)))
        }
        "bmm" => {
            let bt = rng.random_range(1..4);
            let (m, k, n) = (rng.random_range(1..5), rng.random_range(1..5), rng.random_range(1..5));
            let a = uniform(rng, &[bt, m, k], -1.0, 1.0);
            let b = uniform(rng, &[bt, k, n], -1.0, 1.0);
            let w = out_weights!([bt, m, n]);
            (vec![a, b], Box::new(move |_, v| weighted(ops::bmm(v[0], v[1])?, &w)))
        }
        "linear" => {
            let (n, i, o) = (rng.random_range(1..6), rng.random_range(1..8), rng.random_range(1..6));
            let x = uniform(rng, &[n, i], -1.0, 1.0);
            let wt = uniform(rng, &[o, i], -1.0, 1.0);
            let w = out_weights!([n, o]);
            if rng.random_bool(0.5) {
                let b = uniform(rng, &[o], -1.0, 1.0);
                (vec![x, wt, b], Box::new(move |_, v| weighted(ops::linear(v[0], v[1], Some(v[2]))?, &w)))
            } else {
                (vec![x, wt], Box::new(move |_, v| weighted(ops::linear(v[0], v[1], None)?, &w)))
            }
        }
        "concat" => {
            let rank = rng.random_range(1..4);
            let axis = rng.random_range(0..rank);
            let base = dims(rng, rank, 4);
            let parts = rng.random_range(1..4);
            let mut inputs = Vec::new();
            let mut total = 0;
            for _ in 0..parts {
                let mut s = base.clone();
                s[axis] = rng.random_range(1..4);
                total += s[axis];
                inputs.push(uniform(rng, &s, -1.0, 1.0));
            }
            let mut out = base.clone();
            out[axis] = total;
            let w = out_weights!(out);
            (inputs, Box::new(move |_, v| weighted(ops::concat(v, axis)?, &w)))
        }
        "slice_axis" => {
            let shape = dims(rng, 3, 5);
            let axis = rng.random_range(0..3);
            let start = rng.random_range(0..shape[axis]);
            let end = rng.random_range(start + 1..=shape[axis]);
            let mut out = shape.clone();
            out[axis] = end - start;
            let x = uniform(rng, &shape, -1.0, 1.0);
            let w = out_weights!(out);
            (vec![x], Box::new(move |_, v| weighted(ops::slice_axis(v[0], axis, start..end)?, &w)))
        }
        "reshape" => {
            let (a, b, c) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..4));
            let x = uniform(rng, &[a, b, c], -1.0, 1.0);
            let w = out_weights!([a * b, c]);
            (vec![x], Box::new(move |_, v| weighted(ops::reshape(v[0], &[a * b, c])?, &w)))
        }
        "set_diagonal" => {
            let (b, n) = (rng.random_range(1..3), rng.random_range(1..5));
            let x = uniform(rng, &[b, n, n], -1.0, 1.0);
            let w = out_weights!([b, n, n]);
            (vec![x], Box::new(move |_, v| weighted(ops::square(ops::set_diagonal(v[0], 1.0)?), &w)))
        }
        "sum_axis" => {
            let shape = dims(rng, 3, 4);
            let axis = rng.random_range(0..3);
            let keep = rng.random_bool(0.5);
            let mut out = shape.clone();
            if keep {
                out[axis] = 1;
            } else {
                out.remove(axis);
            }
            let x = uniform(rng, &shape, -1.0, 1.0);
            let w = out_weights!(out);
            (vec![x], Box::new(move |_, v| weighted(ops::sum_axis(v[0], axis, keep)?, &w)))
        }
        "mean" => {
            let shape = dims(rng, 2, 5);
            let x = uniform(rng, &shape, -1.0, 1.0);
            (vec![x], Box::new(|_, v| Ok(ops::square(ops::mean(v[0])))))
        }
        "pairwise_l1" | "pairwise_abs_diff" => {
            let batched = rng.random_bool(0.5);
            let (b, n, d) = (rng.random_range(1..3), rng.random_range(1..6), rng.random_range(1..5));
            let shape = if batched { vec![b, n, d] } else { vec![n, d] };
            let x = separated(rng, &shape);
            let mut out = shape[..shape.len() - 1].to_vec();
            out.push(n);
            if name == "pairwise_abs_diff" {
                out.push(d);
            }
            let w = out_weights!(out);
            let op: CaseOp = if name == "pairwise_l1" {
                Box::new(move |_, v| weighted(ops::pairwise_l1(v[0])?, &w))
            } else {
                Box::new(move |_, v| weighted(ops::pairwise_abs_diff(v[0])?, &w))
            };
            (vec![x], op)
        }
        "softmax_cross_entropy" => {
            let (n, k) = (rng.random_range(1..6), rng.random_range(2..6));
            let x = uniform(rng, &[n, k], -3.0, 3.0);
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            (vec![x], Box::new(move |_, v| ops::softmax_cross_entropy(v[0], &labels)))
        }
        "grouped_conv2d" => {
            let groups = rng.random_range(1..4);
            let (cig, cog) = (rng.random_range(1..3), rng.random_range(1..3));
            let k = rng.random_range(1..4);
            let stride = rng.random_range(1..3);
            let padding = rng.random_range(0..2);
            let h = rng.random_range(k..k + 4);
            let n = rng.random_range(1..3);
            let x = uniform(rng, &[n, groups * cig, h, h], -1.0, 1.0);
            let wt = uniform(rng, &[groups * cog, cig, k, k], -1.0, 1.0);
            let b = uniform(rng, &[groups * cog], -1.0, 1.0);
            let o = (h + 2 * padding - k) / stride + 1;
            let w = out_weights!([n, groups * cog, o, o]);
            let spec = Conv2dSpec { groups, stride, padding };
            (
                vec![x, wt, b],
                Box::new(move |_, v| weighted(ops::grouped_conv2d(v[0], v[1], Some(v[2]), spec)?, &w)),
            )
        }
        "batchnorm2d" => {
            let (n, c, h) = (rng.random_range(2..4), rng.random_range(1..4), rng.random_range(1..4));
            let x = uniform(rng, &[n, c, h, h], -1.0, 1.0);
            let gamma = uniform(rng, &[c], 0.5, 1.5);
            let beta = uniform(rng, &[c], -1.0, 1.0);
            let w = out_weights!([n, c, h, h]);
            (
                vec![x, gamma, beta],
                Box::new(move |_, v| weighted(ops::batchnorm2d(v[0], v[1], v[2], 1e-5)?, &w)),
            )
        }
        "batchnorm1d" => {
            let (n, c) = (rng.random_range(2..7), rng.random_range(1..5));
            let x = uniform(rng, &[n, c], -1.0, 1.0);
            let gamma = uniform(rng, &[c], 0.5, 1.5);
            let beta = uniform(rng, &[c], -1.0, 1.0);
            let w = out_weights!([n, c]);
            (
                vec![x, gamma, beta],
                Box::new(move |_, v| weighted(ops::batchnorm1d(v[0], v[1], v[2], 1e-5)?, &w)),
            )
        }
        "maxpool2d" => {
            let k = rng.random_range(1..4);
            let stride = rng.random_range(1..3);
            let h = rng.random_range(k..k + 5);
            let (n, c) = (rng.random_range(1..3), rng.random_range(1..3));
            let x = separated(rng, &[n, c, h, h]);
            let o = (h - k) / stride + 1;
            let w = out_weights!([n, c, o, o]);
            (vec![x], Box::new(move |_, v| weighted(ops::maxpool2d(v[0], k, stride)?, &w)))
        }
        "global_max_pool2d" => {
            let (n, c, h) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..5));
            let x = separated(rng, &[n, c, h, h + 1]);
            let w = out_weights!([n, c]);
            (vec![x], Box::new(move |_, v| weighted(ops::global_max_pool2d(v[0])?, &w)))
        }
        other => panic!("no gradient case for primitive `{other}`"),
    }
}

/// Runs `trials` random instances of every primitive.
pub fn primitive_suite(trials: usize, seed: u64, h: f64) -> Result<Vec<PrimitiveCheck>> {
    PRIMITIVES
        .iter()
        .enumerate()
        .map(|(i, &name)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000 * i as u64));
            let mut worst: Option<GradCheckReport> = None;
            for _ in 0..trials {
                let (inputs, op) = random_case(name, &mut rng);
                let report = check_gradients(op, &inputs, h)?;
                if worst.as_ref().is_none_or(|w| report.max_rel_err > w.max_rel_err) {
                    worst = Some(report);
                }
            }
            Ok(PrimitiveCheck {
                name,
                trials,
                worst: worst.expect("at least one trial"),
            })
        })
        .collect()
}
