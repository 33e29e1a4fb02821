use ndarray::{ArrayD, IxDyn};

use crate::{Real, Result, TensorError, Var};

/// Returns (batch, n, d) for a `[n × d]` or `[B × n × d]` input.
fn dims(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [n, d] if n >= 1 => Ok((1, n, d)),
        [b, n, d] if n >= 1 => Ok((b, n, d)),
        _ => Err(TensorError::shape(
            op,
            format!("expected [n × d] or [B × n × d] with n ≥ 1, got {shape:?}"),
        )),
    }
}

fn sign<F: Real>(x: F) -> F {
    if x > F::zero() {
        F::one()
    } else if x < F::zero() {
        -F::one()
    } else {
        F::zero()
    }
}

/// `D[i][j] = Σ_k |V[i][k] − V[j][k]|`, batched over a leading axis if present.
pub fn pairwise_l1<'g, F: Real>(v: Var<'g, F>) -> Result<Var<'g, F>> {
    let shape = v.shape();
    let (b, n, d) = dims("pairwise_l1", &shape)?;
    let vv = v.value();
    let src = vv.as_standard_layout().into_owned();
    let x = src.as_slice().expect("standard layout");
    let mut out = vec![F::zero(); b * n * n];
    for e in 0..b {
        let base = e * n * d;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut acc = F::zero();
                for k in 0..d {
                    acc += (x[base + i * d + k] - x[base + j * d + k]).abs();
                }
                out[e * n * n + i * n + j] = acc;
                out[e * n * n + j * n + i] = acc;
            }
        }
    }
    let mut out_shape = shape[..shape.len() - 1].to_vec();
    out_shape.push(n);
    let out = ArrayD::from_shape_vec(IxDyn(&out_shape), out).expect("sized");
    Ok(v.graph().push_op(
        out,
        &[v],
        Box::new(move |g, _| {
            let g = g.as_standard_layout();
            let gs = g.as_slice().expect("standard layout");
            let x = src.as_slice().expect("standard layout");
            let mut gv = vec![F::zero(); b * n * d];
            for e in 0..b {
                let base = e * n * d;
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        // D[i][j] and D[j][i] both depend on V[i]
                        let w = gs[e * n * n + i * n + j] + gs[e * n * n + j * n + i];
                        if w == F::zero() {
                            continue;
                        }
                        for k in 0..d {
                            let s = sign(x[base + i * d + k] - x[base + j * d + k]);
                            gv[base + i * d + k] += w * s;
                        }
                    }
                }
            }
            vec![Some(ArrayD::from_shape_vec(src.raw_dim(), gv).expect("sized"))]
        }),
    ))
}

/// `A[i][j][k] = |V[i][k] − V[j][k]|`: `[n × d] → [n × n × d]`, batched over a
/// leading axis if present.
pub fn pairwise_abs_diff<'g, F: Real>(v: Var<'g, F>) -> Result<Var<'g, F>> {
    let shape = v.shape();
    let (b, n, d) = dims("pairwise_abs_diff", &shape)?;
    let src = v.value().as_standard_layout().into_owned();
    let x = src.as_slice().expect("standard layout");
    let mut out = vec![F::zero(); b * n * n * d];
    for e in 0..b {
        let base = e * n * d;
        for i in 0..n {
            for j in 0..n {
                let o = ((e * n + i) * n + j) * d;
                for k in 0..d {
                    out[o + k] = (x[base + i * d + k] - x[base + j * d + k]).abs();
                }
            }
        }
    }
    let mut out_shape = shape[..shape.len() - 1].to_vec();
    out_shape.extend([n, d]);
    let out = ArrayD::from_shape_vec(IxDyn(&out_shape), out).expect("sized");
    Ok(v.graph().push_op(
        out,
        &[v],
        Box::new(move |g, _| {
            let g = g.as_standard_layout();
            let gs = g.as_slice().expect("standard layout");
            let x = src.as_slice().expect("standard layout");
            let mut gv = vec![F::zero(); b * n * d];
            for e in 0..b {
                let base = e * n * d;
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        let o = ((e * n + i) * n + j) * d;
                        for k in 0..d {
                            let s = sign(x[base + i * d + k] - x[base + j * d + k]) * gs[o + k];
                            gv[base + i * d + k] += s;
                            gv[base + j * d + k] -= s;
                        }
                    }
                }
            }
            vec![Some(ArrayD::from_shape_vec(src.raw_dim(), gv).expect("sized"))]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Graph;
    use ndarray::array;

    #[test]
    fn hand_computed_distances() {
        let g = Graph::<f64>::new();
        let v = g.constant(array![[0.0], [1.0], [3.0]].into_dyn());
        let d = pairwise_l1(v).unwrap();
        assert_eq!(
            *d.value(),
            array![[0.0, 1.0, 3.0], [1.0, 0.0, 2.0], [3.0, 2.0, 0.0]].into_dyn()
        );
    }

    #[test]
    fn abs_diff_sums_to_l1() {
        let g = Graph::<f64>::new();
        let v = g.constant(array![[[0.5, -1.0], [2.0, 0.0], [1.0, 1.0]]].into_dyn());
        let a = pairwise_abs_diff(v).unwrap().value();
        let d = pairwise_l1(v).unwrap().value();
        assert_eq!(a.shape(), &[1, 3, 3, 2]);
        let summed = a.sum_axis(ndarray::Axis(3));
        assert_eq!(summed, *d);
    }

    #[test]
    fn rejects_empty_or_wrong_rank() {
        let g = Graph::<f64>::new();
        let v = g.constant(ArrayD::zeros(IxDyn(&[0, 3])));
        assert!(pairwise_l1(v).is_err());
        let v = g.constant(ArrayD::zeros(IxDyn(&[4])));
        assert!(pairwise_l1(v).is_err());
    }
}
