use std::rc::Rc;

use super::{broadcast_shape, reduce_to_shape};
use crate::{Real, Result, Var};

fn same_graph<F: Real>(a: Var<'_, F>, b: Var<'_, F>) {
    assert!(
        std::ptr::eq(a.graph(), b.graph()),
        "operands recorded on different graphs"
    );
}

pub fn add<'g, F: Real>(a: Var<'g, F>, b: Var<'g, F>) -> Result<Var<'g, F>> {
    same_graph(a, b);
    let (av, bv) = (a.value(), b.value());
    broadcast_shape("add", av.shape(), bv.shape())?;
    let out = &*av + &*bv;
    let (sa, sb) = (av.shape().to_vec(), bv.shape().to_vec());
    Ok(a.graph().push_op(
        out,
        &[a, b],
        Box::new(move |g, need| {
            vec![
                need[0].then(|| reduce_to_shape(g.clone(), &sa)),
                need[1].then(|| reduce_to_shape(g.clone(), &sb)),
            ]
        }),
    ))
}

pub fn sub<'g, F: Real>(a: Var<'g, F>, b: Var<'g, F>) -> Result<Var<'g, F>> {
    same_graph(a, b);
    let (av, bv) = (a.value(), b.value());
    broadcast_shape("sub", av.shape(), bv.shape())?;
    let out = &*av - &*bv;
    let (sa, sb) = (av.shape().to_vec(), bv.shape().to_vec());
    Ok(a.graph().push_op(
        out,
        &[a, b],
        Box::new(move |g, need| {
            vec![
                need[0].then(|| reduce_to_shape(g.clone(), &sa)),
                need[1].then(|| reduce_to_shape(g.mapv(|x| -x), &sb)),
            ]
        }),
    ))
}

pub fn mul<'g, F: Real>(a: Var<'g, F>, b: Var<'g, F>) -> Result<Var<'g, F>> {
    same_graph(a, b);
    let (av, bv) = (a.value(), b.value());
    broadcast_shape("mul", av.shape(), bv.shape())?;
    let out = &*av * &*bv;
    Ok(a.graph().push_op(
        out,
        &[a, b],
        Box::new(move |g, need| {
            vec![
                need[0].then(|| reduce_to_shape(g * &*bv, av.shape())),
                need[1].then(|| reduce_to_shape(g * &*av, bv.shape())),
            ]
        }),
    ))
}

pub fn div<'g, F: Real>(a: Var<'g, F>, b: Var<'g, F>) -> Result<Var<'g, F>> {
    same_graph(a, b);
    let (av, bv) = (a.value(), b.value());
    broadcast_shape("div", av.shape(), bv.shape())?;
    let out = &*av / &*bv;
    let out_rc = Rc::new(out.clone());
    Ok(a.graph().push_op(
        out,
        &[a, b],
        Box::new(move |g, need| {
            vec![
                need[0].then(|| reduce_to_shape(g / &*bv, av.shape())),
                // d(a/b)/db = -(a/b)/b
                need[1].then(|| {
                    let t = (g * &*out_rc) / &*bv;
                    reduce_to_shape(t.mapv(|x| -x), bv.shape())
                }),
            ]
        }),
    ))
}

fn unary<'g, F: Real>(
    x: Var<'g, F>,
    forward: impl Fn(F) -> F,
    derivative: impl Fn(F) -> F + 'static,
) -> Var<'g, F> {
    let xv = x.value();
    let out = xv.mapv(forward);
    x.graph().push_op(
        out,
        &[x],
        Box::new(move |g, _| {
            let mut d = g.clone();
            ndarray::Zip::from(&mut d)
                .and(&*xv)
                .for_each(|d, &x| *d *= derivative(x));
            vec![Some(d)]
        }),
    )
}

pub fn neg<'g, F: Real>(x: Var<'g, F>) -> Var<'g, F> {
    scale(x, -F::one())
}

/// `c · x` for a constant `c`.
pub fn scale<'g, F: Real>(x: Var<'g, F>, c: F) -> Var<'g, F> {
    let out = x.value().mapv(|v| v * c);
    x.graph()
        .push_op(out, &[x], Box::new(move |g, _| vec![Some(g.mapv(|v| v * c))]))
}

/// `x + c` for a constant `c`.
pub fn add_scalar<'g, F: Real>(x: Var<'g, F>, c: F) -> Var<'g, F> {
    let out = x.value().mapv(|v| v + c);
    x.graph()
        .push_op(out, &[x], Box::new(|g, _| vec![Some(g.clone())]))
}

pub fn relu<'g, F: Real>(x: Var<'g, F>) -> Var<'g, F> {
    unary(
        x,
        |v| if v > F::zero() { v } else { F::zero() },
        |v| if v > F::zero() { F::one() } else { F::zero() },
    )
}

pub fn sigmoid<'g, F: Real>(x: Var<'g, F>) -> Var<'g, F> {
    unary(x, stable_sigmoid, |v| {
        let y = stable_sigmoid(v);
        y * (F::one() - y)
    })
}

pub fn exp<'g, F: Real>(x: Var<'g, F>) -> Var<'g, F> {
    unary(x, F::exp, F::exp)
}

pub fn square<'g, F: Real>(x: Var<'g, F>) -> Var<'g, F> {
    unary(x, |v| v * v, |v| v + v)
}

pub(crate) fn stable_sigmoid<F: Real>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}
