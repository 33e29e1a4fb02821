use ndarray::{ArrayD, IxDyn};

use super::{expect_rank, standard};
use crate::{Real, Result, TensorError, Var};

/// Windowed max over `[N × C × H × W]`. Ties resolve to the first index in
/// row-major window order; the gradient flows only there.
pub fn maxpool2d<'g, F: Real>(x: Var<'g, F>, k: usize, stride: usize) -> Result<Var<'g, F>> {
    let s = expect_rank("maxpool2d", x, 4)?;
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    if k == 0 || stride == 0 {
        return Err(TensorError::shape("maxpool2d", "window and stride must be positive"));
    }
    if k > h || k > w {
        return Err(TensorError::WindowTooLarge {
            window: k,
            extent: h.min(w),
        });
    }
    let (oh, ow) = ((h - k) / stride + 1, (w - k) / stride + 1);
    if x.value().len() > u32::MAX as usize {
        return Err(TensorError::shape("maxpool2d", "input too large for 32-bit argmax indices"));
    }
    let xv = standard(x.value());
    let xs = xv.as_slice().expect("standard layout");
    let mut out = vec![F::zero(); n * c * oh * ow];
    let mut argmax = vec![0u32; n * c * oh * ow];
    for plane in 0..n * c {
        let src = &xs[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
        let arg = &mut argmax[plane * oh * ow..(plane + 1) * oh * ow];
        if k == 2 && stride == 2 {
            pool_2x2(src, w, ow, plane * h * w, dst, arg);
            continue;
        }
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = oy * stride * w + ox * stride;
                let mut best_v = src[best];
                for ky in 0..k {
                    let row = (oy * stride + ky) * w + ox * stride;
                    for (idx, &v) in src[row..row + k].iter().enumerate() {
                        if v > best_v {
                            best_v = v;
                            best = row + idx;
                        }
                    }
                }
                dst[oy * ow + ox] = best_v;
                arg[oy * ow + ox] = (plane * h * w + best) as u32;
            }
        }
    }
    let out = ArrayD::from_shape_vec(IxDyn(&[n, c, oh, ow]), out).expect("sized");
    route_to_argmax(x, out, argmax, xv.raw_dim())
}

fn pool_2x2<F: Real>(src: &[F], w: usize, ow: usize, base: usize, dst: &mut [F], arg: &mut [u32]) {
    for (oy, (drow, arow)) in dst.chunks_exact_mut(ow).zip(arg.chunks_exact_mut(ow)).enumerate() {
        let top = &src[2 * oy * w..2 * oy * w + 2 * ow];
        let bottom = &src[(2 * oy + 1) * w..(2 * oy + 1) * w + 2 * ow];
        for (ox, (d, a)) in drow.iter_mut().zip(arow.iter_mut()).enumerate() {
            let cands = [
                (top[2 * ox], 2 * oy * w + 2 * ox),
                (top[2 * ox + 1], 2 * oy * w + 2 * ox + 1),
                (bottom[2 * ox], (2 * oy + 1) * w + 2 * ox),
                (bottom[2 * ox + 1], (2 * oy + 1) * w + 2 * ox + 1),
            ];
            let mut best = cands[0];
            for &cand in &cands[1..] {
                if cand.0 > best.0 {
                    best = cand;
                }
            }
            *d = best.0;
            *a = (base + best.1) as u32;
        }
    }
}

/// Max over the spatial axes: `[N × C × H × W] → [N × C]`.
pub fn global_max_pool2d<'g, F: Real>(x: Var<'g, F>) -> Result<Var<'g, F>> {
    let s = expect_rank("global_max_pool2d", x, 4)?;
    let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
    if hw == 0 {
        return Err(TensorError::shape("global_max_pool2d", "empty spatial extent"));
    }
    let xv = standard(x.value());
    let xs = xv.as_slice().expect("standard layout");
    let mut out = Vec::with_capacity(n * c);
    let mut argmax = Vec::with_capacity(n * c);
    for plane in 0..n * c {
        let base = plane * hw;
        let mut best = base;
        for idx in base..base + hw {
            if xs[idx] > xs[best] {
                best = idx;
            }
        }
        out.push(xs[best]);
        argmax.push(best as u32);
    }
    let out = ArrayD::from_shape_vec(IxDyn(&[n, c]), out).expect("sized");
    route_to_argmax(x, out, argmax, xv.raw_dim())
}

fn route_to_argmax<'g, F: Real>(x: Var<'g, F>, out: ArrayD<F>, argmax: Vec<u32>, dim: IxDyn) -> Result<Var<'g, F>> {
    Ok(x.graph().push_op(
        out,
        &[x],
        Box::new(move |g, _| {
            let mut dx = ArrayD::<F>::zeros(dim.clone());
            let d = dx.as_slice_mut().expect("fresh array");
            for (gv, &idx) in g.iter().zip(&argmax) {
                d[idx as usize] += *gv;
            }
            vec![Some(dx)]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{ops, Graph};

    #[test]
    fn two_by_two_max() {
        let g = Graph::<f64>::new();
        let x = g.constant(ArrayD::from_shape_vec(IxDyn(&[1, 1, 2, 2]), vec![1., 2., 3., 4.]).unwrap());
        let y = maxpool2d(x, 2, 2).unwrap();
        assert_eq!(y.shape(), vec![1, 1, 1, 1]);
        assert_eq!(y.scalar(), 4.0);
    }

    #[test]
    fn tie_routes_gradient_to_first_index() {
        let g = Graph::<f64>::new();
        let x = g.leaf(ArrayD::from_elem(IxDyn(&[1, 1, 2, 2]), 5.0));
        let y = maxpool2d(x, 2, 2).unwrap();
        let grads = g.backward(ops::sum(y)).unwrap();
        assert_eq!(grads.wrt(x).as_slice().unwrap(), &[1.0, 0.0, 0.0, 0.0]);

        let gp = global_max_pool2d(x).unwrap();
        let grads = g.backward(ops::sum(gp)).unwrap();
        assert_eq!(grads.wrt(x).as_slice().unwrap(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn window_larger_than_input() {
        let g = Graph::<f64>::new();
        let x = g.constant(ArrayD::zeros(IxDyn(&[1, 1, 2, 2])));
        assert!(matches!(maxpool2d(x, 3, 1), Err(TensorError::WindowTooLarge { window: 3, extent: 2 })));
    }
}
