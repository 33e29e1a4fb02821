use std::ops::Range;

use ndarray::{ArrayD, Axis, IxDyn, Slice};

use crate::{Real, Result, TensorError, Var};

pub fn reshape<'g, F: Real>(x: Var<'g, F>, shape: &[usize]) -> Result<Var<'g, F>> {
    let xv = x.value();
    let numel: usize = shape.iter().product();
    if numel != xv.len() {
        return Err(TensorError::shape(
            "reshape",
            format!("cannot reshape {:?} into {shape:?}", xv.shape()),
        ));
    }
    let out = xv
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order(IxDyn(shape))
        .expect("element count checked");
    let from = xv.shape().to_vec();
    Ok(x.graph().push_op(
        out,
        &[x],
        Box::new(move |g, _| {
            let g = g
                .as_standard_layout()
                .into_owned()
                .into_shape_with_order(IxDyn(&from))
                .expect("element count checked");
            vec![Some(g)]
        }),
    ))
}

/// Concatenation along `axis`; all other extents must agree.
pub fn concat<'g, F: Real>(parts: &[Var<'g, F>], axis: usize) -> Result<Var<'g, F>> {
    let first = parts
        .first()
        .ok_or_else(|| TensorError::shape("concat", "no inputs"))?;
    let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
    let rank = values[0].ndim();
    if axis >= rank {
        return Err(TensorError::shape("concat", format!("axis {axis} out of range for rank {rank}")));
    }
    for v in &values[1..] {
        let ok = v.ndim() == rank
            && (0..rank).all(|a| a == axis || v.shape()[a] == values[0].shape()[a]);
        if !ok {
            return Err(TensorError::shape(
                "concat",
                format!("{:?} vs {:?} along axis {axis}", values[0].shape(), v.shape()),
            ));
        }
    }
    let views: Vec<_> = values.iter().map(|v| v.view()).collect();
    let out = ndarray::concatenate(Axis(axis), &views).expect("shapes checked");
    let sizes: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
    Ok(first.graph().push_op(
        out,
        parts,
        Box::new(move |g, need| {
            let mut start = 0;
            sizes
                .iter()
                .zip(need)
                .map(|(&len, &n)| {
                    let part = n.then(|| {
                        g.slice_axis(Axis(axis), Slice::from(start..start + len))
                            .to_owned()
                    });
                    start += len;
                    part
                })
                .collect()
        }),
    ))
}

/// Sub-range `range` of `axis`.
pub fn slice_axis<'g, F: Real>(x: Var<'g, F>, axis: usize, range: Range<usize>) -> Result<Var<'g, F>> {
    let xv = x.value();
    if axis >= xv.ndim() || range.end > xv.shape()[axis] || range.start > range.end {
        return Err(TensorError::shape(
            "slice_axis",
            format!("range {range:?} on axis {axis} of {:?}", xv.shape()),
        ));
    }
    let out = xv
        .slice_axis(Axis(axis), Slice::from(range.clone()))
        .to_owned();
    Ok(x.graph().push_op(
        out,
        &[x],
        Box::new(move |g, _| {
            let mut full = ArrayD::zeros(xv.raw_dim());
            full.slice_axis_mut(Axis(axis), Slice::from(range.clone()))
                .assign(g);
            vec![Some(full)]
        }),
    ))
}

/// Overwrites the diagonal of the trailing square matrices with `value`.
/// The diagonal receives no gradient.
pub fn set_diagonal<'g, F: Real>(x: Var<'g, F>, value: F) -> Result<Var<'g, F>> {
    let xv = x.value();
    let shape = xv.shape().to_vec();
    let r = shape.len();
    if r < 2 || shape[r - 1] != shape[r - 2] {
        return Err(TensorError::shape(
            "set_diagonal",
            format!("trailing axes must be square, got {shape:?}"),
        ));
    }
    let n = shape[r - 1];
    let mut out = xv.as_standard_layout().into_owned();
    for m in out.as_slice_mut().expect("standard layout").chunks_mut(n * n) {
        for i in 0..n {
            m[i * n + i] = value;
        }
    }
    Ok(x.graph().push_op(
        out,
        &[x],
        Box::new(move |g, _| {
            let mut g = g.as_standard_layout().into_owned();
            for m in g.as_slice_mut().expect("standard layout").chunks_mut(n * n) {
                for i in 0..n {
                    m[i * n + i] = F::zero();
                }
            }
            vec![Some(g)]
        }),
    ))
}

/// Sum of all entries, as a zero-dimensional tensor.
pub fn sum<'g, F: Real>(x: Var<'g, F>) -> Var<'g, F> {
    let xv = x.value();
    let out = ArrayD::from_elem(IxDyn(&[]), xv.sum());
    let dim = xv.raw_dim();
    x.graph().push_op(
        out,
        &[x],
        Box::new(move |g, _| {
            let s = g.iter().next().copied().unwrap_or_else(F::zero);
            vec![Some(ArrayD::from_elem(dim.clone(), s))]
        }),
    )
}

/// Mean of all entries.
pub fn mean<'g, F: Real>(x: Var<'g, F>) -> Var<'g, F> {
    let n = x.value().len().max(1);
    super::scale(sum(x), F::one() / F::of(n as f64))
}

/// Sum along one axis, optionally keeping it with extent 1.
pub fn sum_axis<'g, F: Real>(x: Var<'g, F>, axis: usize, keepdim: bool) -> Result<Var<'g, F>> {
    let xv = x.value();
    if axis >= xv.ndim() {
        return Err(TensorError::shape(
            "sum_axis",
            format!("axis {axis} out of range for {:?}", xv.shape()),
        ));
    }
    let mut out = xv.sum_axis(Axis(axis));
    if keepdim {
        out = out.insert_axis(Axis(axis));
    }
    let dim = xv.raw_dim();
    Ok(x.graph().push_op(
        out,
        &[x],
        Box::new(move |g, _| {
            let g = if keepdim {
                g.view()
            } else {
                g.view().insert_axis(Axis(axis))
            };
            vec![Some(g.broadcast(dim.clone()).expect("broadcastable").to_owned())]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Graph;
    use ndarray::array;

    #[test]
    fn set_diagonal_blocks_gradient() {
        let g = Graph::<f64>::new();
        let x = g.leaf(array![[0.2, 0.3], [0.4, 0.5]].into_dyn());
        let y = set_diagonal(x, 1.0).unwrap();
        assert_eq!(*y.value(), array![[1.0, 0.3], [0.4, 1.0]].into_dyn());
        let grads = g.backward(sum(y)).unwrap();
        assert_eq!(grads.wrt(x), array![[0.0, 1.0], [1.0, 0.0]].into_dyn());
    }

    #[test]
    fn concat_splits_gradient() {
        let g = Graph::<f64>::new();
        let a = g.leaf(array![[1.0], [2.0]].into_dyn());
        let b = g.leaf(array![[3.0, 4.0], [5.0, 6.0]].into_dyn());
        let c = concat(&[a, b], 1).unwrap();
        assert_eq!(c.shape(), vec![2, 3]);
        let w = g.constant(array![[1.0, 2.0, 3.0]].into_dyn());
        let grads = g.backward(sum(crate::ops::mul(c, w).unwrap())).unwrap();
        assert_eq!(grads.wrt(a), array![[1.0], [1.0]].into_dyn());
        assert_eq!(grads.wrt(b), array![[2.0, 3.0], [2.0, 3.0]].into_dyn());
    }

    #[test]
    fn slice_and_reshape_shapes() {
        let g = Graph::<f64>::new();
        let x = g.leaf(ArrayD::from_shape_fn(IxDyn(&[2, 3, 4]), |i| i[2] as f64));
        let s = slice_axis(x, 1, 1..3).unwrap();
        assert_eq!(s.shape(), vec![2, 2, 4]);
        let r = reshape(s, &[4, 4]).unwrap();
        assert_eq!(r.shape(), vec![4, 4]);
        assert!(reshape(s, &[3, 3]).is_err());
        assert!(slice_axis(x, 1, 2..5).is_err());
    }
}
