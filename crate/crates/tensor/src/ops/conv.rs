//! Grouped 2-D cross-correlation via per-group im2col + GEMM.

use ndarray::{linalg::general_mat_mul, Array2, ArrayD, ArrayView2, ArrayViewMut2, IxDyn};

use super::{expect_rank, standard};
use crate::{Real, Result, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub groups: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Conv2dSpec {
            groups: 1,
            stride: 1,
            padding: 0,
        }
    }
}

pub fn conv2d_output_size(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    (padded >= kernel && stride > 0).then(|| (padded - kernel) / stride + 1)
}

#[derive(Clone, Copy)]
struct Geometry {
    c_in_g: usize,
    c_out_g: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.c_in_g * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Unfolds the `c_in_g` input planes in `x` into `cols`.
    fn im2col<F: Real>(&self, x: &[F], cols: &mut [F]) {
        let (h, w, oh, ow) = (self.h, self.w, self.oh, self.ow);
        let ncol = oh * ow;
        for c in 0..self.c_in_g {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let dst = &mut cols[row * ncol..(row + 1) * ncol];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let out = &mut dst[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= h as isize {
                            out.fill(F::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, o) in out.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            *o = if ix < 0 || ix >= w as isize {
                                F::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Folds `cols` back, accumulating into the `c_in_g` planes of `dx`.
    fn col2im<F: Real>(&self, cols: &[F], dx: &mut [F]) {
        let (h, w, oh, ow) = (self.h, self.w, self.oh, self.ow);
        let ncol = oh * ow;
        for c in 0..self.c_in_g {
            let plane = &mut dx[c * h * w..(c + 1) * h * w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let src = &cols[row * ncol..(row + 1) * ncol];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, &v) in src[oy * ow..(oy + 1) * ow].iter().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && (ix as usize) < w {
                                dst[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Grouped convolution. `x: [N × C_in × H × W]`, `weight: [C_out × C_in/groups × kh × kw]`,
/// `bias: [C_out]`. Output channel block `g` reads only input channel block `g`.
pub fn grouped_conv2d<'g, F: Real>(
    x: Var<'g, F>,
    weight: Var<'g, F>,
    bias: Option<Var<'g, F>>,
    spec: Conv2dSpec,
) -> Result<Var<'g, F>> {
    let sx = expect_rank("grouped_conv2d", x, 4)?;
    let sw = expect_rank("grouped_conv2d", weight, 4)?;
    let (n, c_in, h, w) = (sx[0], sx[1], sx[2], sx[3]);
    let (c_out, c_in_g, kh, kw) = (sw[0], sw[1], sw[2], sw[3]);
    let groups = spec.groups;
    if groups == 0 || c_in % groups != 0 {
        return Err(TensorError::GroupDivisibility {
            op: "grouped_conv2d",
            in_channels: c_in,
            groups,
        });
    }
    if c_out % groups != 0 {
        return Err(TensorError::GroupDivisibility {
            op: "grouped_conv2d",
            in_channels: c_out,
            groups,
        });
    }
    if c_in_g != c_in / groups {
        return Err(TensorError::shape(
            "grouped_conv2d",
            format!("weight {sw:?} expects {c_in_g} channels per group, input has {}", c_in / groups),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(TensorError::shape(
                "grouped_conv2d",
                format!("bias {:?} for {c_out} output channels", b.shape()),
            ));
        }
    }
    let (Some(oh), Some(ow)) = (
        conv2d_output_size(h, kh, spec.stride, spec.padding),
        conv2d_output_size(w, kw, spec.stride, spec.padding),
    ) else {
        return Err(TensorError::shape(
            "grouped_conv2d",
            format!("kernel {kh}×{kw} does not fit input {h}×{w} with padding {}", spec.padding),
        ));
    };
    let geo = Geometry {
        c_in_g,
        c_out_g: c_out / groups,
        h,
        w,
        kh,
        kw,
        oh,
        ow,
        stride: spec.stride,
        pad: spec.padding,
    };

    let xv = standard(x.value());
    let wv = standard(weight.value());
    let wmat = wv
        .view()
        .into_shape_with_order((c_out, geo.col_rows()))
        .expect("contiguous weight");
    let bv = bias.map(|b| b.value().iter().copied().collect::<Vec<F>>());

    let xs = xv.as_slice().expect("standard layout");
    let in_plane = c_in_g * h * w;
    let out_plane = geo.c_out_g * oh * ow;
    let mut out = vec![F::zero(); n * c_out * oh * ow];
    let mut cols = vec![F::zero(); geo.col_rows() * geo.col_cols()];
    for img in 0..n {
        for gi in 0..groups {
            let xoff = (img * groups + gi) * in_plane;
            geo.im2col(&xs[xoff..xoff + in_plane], &mut cols);
            let cview = ArrayView2::from_shape((geo.col_rows(), geo.col_cols()), &cols).expect("sized");
            let ooff = (img * groups + gi) * out_plane;
            let mut oview =
                ArrayViewMut2::from_shape((geo.c_out_g, oh * ow), &mut out[ooff..ooff + out_plane])
                    .expect("sized");
            if let Some(bv) = &bv {
                for (r, mut row) in oview.rows_mut().into_iter().enumerate() {
                    row.fill(bv[gi * geo.c_out_g + r]);
                }
            }
            let wg = wmat.slice(ndarray::s![gi * geo.c_out_g..(gi + 1) * geo.c_out_g, ..]);
            general_mat_mul(F::one(), &wg, &cview, F::one(), &mut oview);
        }
    }
    let out = ArrayD::from_shape_vec(IxDyn(&[n, c_out, oh, ow]), out).expect("sized");

    let mut parents = vec![x, weight];
    parents.extend(bias);
    let has_bias = bias.is_some();
    Ok(x.graph().push_op(
        out,
        &parents,
        Box::new(move |g, need| {
            let g = g.as_standard_layout();
            let gs = g.as_slice().expect("standard layout");
            let xs = xv.as_slice().expect("standard layout");
            let wmat = wv
                .view()
                .into_shape_with_order((c_out, geo.col_rows()))
                .expect("contiguous weight");
            let mut dx = need[0].then(|| vec![F::zero(); xs.len()]);
            let mut dw = need[1].then(|| Array2::<F>::zeros((c_out, geo.col_rows())));
            let mut cols = vec![F::zero(); geo.col_rows() * geo.col_cols()];
            let mut dcols = Array2::<F>::zeros((geo.col_rows(), geo.col_cols()));
            for img in 0..n {
                for gi in 0..groups {
                    let ooff = (img * groups + gi) * out_plane;
                    let gview = ArrayView2::from_shape((geo.c_out_g, oh * ow), &gs[ooff..ooff + out_plane])
                        .expect("sized");
                    let rows = gi * geo.c_out_g..(gi + 1) * geo.c_out_g;
                    let xoff = (img * groups + gi) * in_plane;
                    if let Some(dw) = dw.as_mut() {
                        geo.im2col(&xs[xoff..xoff + in_plane], &mut cols);
                        let cview = ArrayView2::from_shape((geo.col_rows(), geo.col_cols()), &cols)
                            .expect("sized");
                        let mut dwg = dw.slice_mut(ndarray::s![rows.clone(), ..]);
                        general_mat_mul(F::one(), &gview, &cview.t(), F::one(), &mut dwg);
                    }
                    if let Some(dx) = dx.as_mut() {
                        let wg = wmat.slice(ndarray::s![rows, ..]);
                        general_mat_mul(F::one(), &wg.t(), &gview, F::zero(), &mut dcols);
                        geo.col2im(
                            dcols.as_slice().expect("standard layout"),
                            &mut dx[xoff..xoff + in_plane],
                        );
                    }
                }
            }
            let mut grads = vec![
                dx.map(|d| ArrayD::from_shape_vec(xv.raw_dim(), d).expect("sized")),
                dw.map(|d| d.into_shape_with_order(wv.raw_dim()).expect("sized")),
            ];
            if has_bias {
                grads.push(need[2].then(|| {
                    let mut db = vec![F::zero(); c_out];
                    for img in 0..n {
                        for (c, acc) in db.iter_mut().enumerate() {
                            let off = (img * c_out + c) * oh * ow;
                            *acc += gs[off..off + oh * ow].iter().copied().sum::<F>();
                        }
                    }
                    ArrayD::from_shape_vec(IxDyn(&[c_out]), db).expect("sized")
                }));
            }
            grads
        }),
    ))
}
