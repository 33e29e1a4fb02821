//! Batch normalization with current-batch statistics only (no running averages).

use ndarray::{ArrayD, IxDyn};

use super::standard;
use crate::{Real, Result, TensorError, Var};

/// `x: [N × C × H × W]`; statistics per channel over `N·H·W`.
pub fn batchnorm2d<'g, F: Real>(x: Var<'g, F>, gamma: Var<'g, F>, beta: Var<'g, F>, eps: F) -> Result<Var<'g, F>> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(TensorError::shape("batchnorm2d", format!("expected [N × C × H × W], got {s:?}")));
    }
    batch_norm("batchnorm2d", x, gamma, beta, eps, s[0], s[1], s[2] * s[3])
}

/// `x: [N × C]`; statistics per feature over `N`.
pub fn batchnorm1d<'g, F: Real>(x: Var<'g, F>, gamma: Var<'g, F>, beta: Var<'g, F>, eps: F) -> Result<Var<'g, F>> {
    let s = x.shape();
    if s.len() != 2 {
        return Err(TensorError::shape("batchnorm1d", format!("expected [N × C], got {s:?}")));
    }
    batch_norm("batchnorm1d", x, gamma, beta, eps, s[0], s[1], 1)
}

#[allow(clippy::too_many_arguments)]
fn batch_norm<'g, F: Real>(
    op: &'static str,
    x: Var<'g, F>,
    gamma: Var<'g, F>,
    beta: Var<'g, F>,
    eps: F,
    n: usize,
    c: usize,
    spatial: usize,
) -> Result<Var<'g, F>> {
    if n < 2 {
        return Err(TensorError::BatchTooSmall(n));
    }
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(TensorError::shape(
            op,
            format!("gamma {:?} / beta {:?} for {c} channels", gamma.shape(), beta.shape()),
        ));
    }
    let xv = standard(x.value());
    let xs = xv.as_slice().expect("standard layout");
    let gv: Vec<F> = gamma.value().iter().copied().collect();
    let bv: Vec<F> = beta.value().iter().copied().collect();
    let m = F::of((n * spatial) as f64);
    let planes = move |ch: usize| (0..n).map(move |i| (i * c + ch) * spatial..(i * c + ch + 1) * spatial);

    let mut means = vec![F::zero(); c];
    let mut inv_std = vec![F::zero(); c];
    let mut out = vec![F::zero(); xs.len()];
    for ch in 0..c {
        let mut mean = F::zero();
        for r in planes(ch) {
            mean += lane_sum(&xs[r]);
        }
        mean /= m;
        let mut var = F::zero();
        for r in planes(ch) {
            var += lane_sum_sq_dev(&xs[r], mean);
        }
        var /= m;
        let is = F::one() / (var + eps).sqrt();
        means[ch] = mean;
        inv_std[ch] = is;
        let (scale, shift) = (gv[ch] * is, bv[ch] - gv[ch] * is * mean);
        for r in planes(ch) {
            for (o, &v) in out[r.clone()].iter_mut().zip(&xs[r]) {
                *o = scale * v + shift;
            }
        }
    }
    let dim = xv.raw_dim();
    let out = ArrayD::from_shape_vec(dim.clone(), out).expect("sized");
    Ok(x.graph().push_op(
        out,
        &[x, gamma, beta],
        Box::new(move |g, need| {
            let g = g.as_standard_layout();
            let gs = g.as_slice().expect("standard layout");
            let mut dgamma = vec![F::zero(); c];
            let mut dbeta = vec![F::zero(); c];
            let xs = xv.as_slice().expect("standard layout");
            for ch in 0..c {
                let mut gx = F::zero();
                for r in planes(ch) {
                    dbeta[ch] += lane_sum(&gs[r.clone()]);
                    gx += lane_dot(&gs[r.clone()], &xs[r]);
                }
                // Σ dy·x̂ = inv_std·(Σ dy·x − mean·Σ dy)
                dgamma[ch] = inv_std[ch] * (gx - means[ch] * dbeta[ch]);
            }
            let dx = need[0].then(|| {
                // dx = γ·inv_std/M · (M·dy − Σdy − x̂·Σ(dy·x̂))
                let mut dx = vec![F::zero(); gs.len()];
                for ch in 0..c {
                    let scale = gv[ch] * inv_std[ch] / m;
                    let (db, dg, mu, is) = (dbeta[ch], dgamma[ch], means[ch], inv_std[ch]);
                    for r in planes(ch) {
                        for ((d, &gy), &v) in dx[r.clone()].iter_mut().zip(&gs[r.clone()]).zip(&xs[r]) {
                            *d = scale * (m * gy - db - (v - mu) * is * dg);
                        }
                    }
                }
                ArrayD::from_shape_vec(dim.clone(), dx).expect("sized")
            });
            vec![
                dx,
                need[1].then(|| ArrayD::from_shape_vec(IxDyn(&[c]), dgamma.clone()).expect("sized")),
                need[2].then(|| ArrayD::from_shape_vec(IxDyn(&[c]), dbeta.clone()).expect("sized")),
            ]
        }),
    ))
}

// Eight independent accumulators so the loops vectorize.
fn lane_sum<F: Real>(xs: &[F]) -> F {
    lane_fold(xs, |v| v)
}

fn lane_sum_sq_dev<F: Real>(xs: &[F], mean: F) -> F {
    lane_fold(xs, |v| (v - mean) * (v - mean))
}

fn lane_fold<F: Real>(xs: &[F], f: impl Fn(F) -> F) -> F {
    let mut acc = [F::zero(); 8];
    let chunks = xs.chunks_exact(8);
    let tail = chunks.remainder();
    for ch in chunks {
        for (a, &v) in acc.iter_mut().zip(ch) {
            *a += f(v);
        }
    }
    let mut total = acc.iter().copied().sum::<F>();
    for &v in tail {
        total += f(v);
    }
    total
}

fn lane_dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut acc = [F::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().copied().sum::<F>() + ta.iter().zip(tb).map(|(&x, &y)| x * y).sum::<F>()
}
