use ndarray::{linalg::general_mat_mul, Array2, Array3, ArrayD, Axis, Ix2, Ix3};

use super::expect_rank;
use crate::{Real, Result, TensorError, Var};

fn as2<F: Real>(a: &ArrayD<F>) -> ndarray::ArrayView2<'_, F> {
    a.view().into_dimensionality::<Ix2>().expect("rank checked")
}

fn as3<F: Real>(a: &ArrayD<F>) -> ndarray::ArrayView3<'_, F> {
    a.view().into_dimensionality::<Ix3>().expect("rank checked")
}

/// `[m × k] · [k × n]`.
pub fn matmul<'g, F: Real>(a: Var<'g, F>, b: Var<'g, F>) -> Result<Var<'g, F>> {
    let sa = expect_rank("matmul", a, 2)?;
    let sb = expect_rank("matmul", b, 2)?;
    if sa[1] != sb[0] {
        return Err(TensorError::shape("matmul", format!("{sa:?} · {sb:?}")));
    }
    let (av, bv) = (a.value(), b.value());
    let out = as2(&av).dot(&as2(&bv)).into_dyn();
    Ok(a.graph().push_op(
        out,
        &[a, b],
        Box::new(move |g, need| {
            let g = as2(g);
            vec![
                need[0].then(|| g.dot(&as2(&bv).t()).into_dyn()),
                need[1].then(|| as2(&av).t().dot(&g).into_dyn()),
            ]
        }),
    ))
}

/// Batched matrix product `[B × m × k] · [B × k × n]`.
pub fn bmm<'g, F: Real>(a: Var<'g, F>, b: Var<'g, F>) -> Result<Var<'g, F>> {
    let sa = expect_rank("bmm", a, 3)?;
    let sb = expect_rank("bmm", b, 3)?;
    if sa[0] != sb[0] || sa[2] != sb[1] {
        return Err(TensorError::shape("bmm", format!("{sa:?} · {sb:?}")));
    }
    let (av, bv) = (a.value(), b.value());
    let mut out = Array3::<F>::zeros((sa[0], sa[1], sb[2]));
    for (i, mut o) in out.axis_iter_mut(Axis(0)).enumerate() {
        o.assign(&as3(&av).index_axis(Axis(0), i).dot(&as3(&bv).index_axis(Axis(0), i)));
    }
    Ok(a.graph().push_op(
        out.into_dyn(),
        &[a, b],
        Box::new(move |g, need| {
            let g = as3(g);
            let (a3, b3) = (as3(&av), as3(&bv));
            let ga = need[0].then(|| {
                let mut ga = Array3::<F>::zeros(a3.raw_dim());
                for (i, mut o) in ga.axis_iter_mut(Axis(0)).enumerate() {
                    o.assign(&g.index_axis(Axis(0), i).dot(&b3.index_axis(Axis(0), i).t()));
                }
                ga.into_dyn()
            });
            let gb = need[1].then(|| {
                let mut gb = Array3::<F>::zeros(b3.raw_dim());
                for (i, mut o) in gb.axis_iter_mut(Axis(0)).enumerate() {
                    o.assign(&a3.index_axis(Axis(0), i).t().dot(&g.index_axis(Axis(0), i)));
                }
                gb.into_dyn()
            });
            vec![ga, gb]
        }),
    ))
}

/// Affine map `x · Wᵀ + b` with `x: [n × in]`, `W: [out × in]`, `b: [out]`.
pub fn linear<'g, F: Real>(x: Var<'g, F>, w: Var<'g, F>, b: Option<Var<'g, F>>) -> Result<Var<'g, F>> {
    let sx = expect_rank("linear", x, 2)?;
    let sw = expect_rank("linear", w, 2)?;
    let sb = b.map(|b| b.shape());
    if sx[1] != sw[1] || sb.as_ref().is_some_and(|sb| sb.as_slice() != [sw[0]]) {
        return Err(TensorError::shape(
            "linear",
            format!("x {sx:?}, weight {sw:?}, bias {sb:?}"),
        ));
    }
    let (xv, wv) = (x.value(), w.value());
    let mut out = Array2::<F>::zeros((sx[0], sw[0]));
    if let Some(b) = b {
        out += &b.value().view().into_dimensionality::<ndarray::Ix1>().expect("rank checked");
    }
    general_mat_mul(F::one(), &as2(&xv), &as2(&wv).t(), F::one(), &mut out);
    let mut parents = vec![x, w];
    parents.extend(b);
    Ok(x.graph().push_op(
        out.into_dyn(),
        &parents,
        Box::new(move |g, need| {
            let g = as2(g);
            let mut grads = vec![
                need[0].then(|| g.dot(&as2(&wv)).into_dyn()),
                need[1].then(|| g.t().dot(&as2(&xv)).into_dyn()),
            ];
            if need.len() == 3 {
                grads.push(need[2].then(|| g.sum_axis(Axis(0)).into_dyn()));
            }
            grads
        }),
    ))
}
