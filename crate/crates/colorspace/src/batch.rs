use ndarray::{Array5, ArrayView5, Axis, Zip};
use num_traits::Float;

use crate::pixel::{linear_rgb_to_xyz, srgb_to_linear, xyz_to_lab_pixel, xyz_to_linear_rgb, lab_to_xyz, linear_to_srgb};
use crate::{ColorError, Index5, Result};

const GAMUT_SLACK: f64 = 1e-4;

/// How the LLAB channels are scaled before they reach the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormMode {
    /// `L / 100` in `[0, 1]`, `a / 128` and `b / 128` in `[-1, 1)`.
    #[default]
    Normalized,
    /// `L` in `[0, 100]`, `a`, `b` in roughly `[-128, 127]`.
    Raw,
}

impl std::str::FromStr for NormMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "normalized" | "norm" => Ok(NormMode::Normalized),
            "raw" => Ok(NormMode::Raw),
            other => Err(format!("unknown norm mode {other:?} (expected \"normalized\" or \"raw\")")),
        }
    }
}

impl std::fmt::Display for NormMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormMode::Normalized => "normalized",
            NormMode::Raw => "raw",
        })
    }
}

/// sRGB-encoded images `[B × T × 3 × H × W]` with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbBatch {
    data: Array5<f64>,
}

impl RgbBatch {
    pub fn new(data: Array5<f64>) -> Result<Self> {
        if data.shape()[2] != 3 {
            return Err(ColorError::Shape(format!(
                "RGB batch needs 3 channels on axis 2, got shape {:?}",
                data.shape()
            )));
        }
        if let Some((index, &value)) = data.indexed_iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(ColorError::OutOfRange {
                index: index.into(),
                value,
            });
        }
        Ok(RgbBatch { data })
    }

    pub fn episodes(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn images_per_episode(&self) -> usize {
        self.data.shape()[1]
    }

    /// `(height, width)` in pixels.
    pub fn size(&self) -> (usize, usize) {
        (self.data.shape()[3], self.data.shape()[4])
    }

    pub fn view(&self) -> ArrayView5<'_, f64> {
        self.data.view()
    }

    pub fn into_inner(self) -> Array5<f64> {
        self.data
    }
}

/// Channels `(L, L, a, b)` after the color transform; channel 0 is a bitwise
/// copy of channel 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LlabBatch<F = f32> {
    data: Array5<F>,
    norm_mode: NormMode,
}

impl<F: Float> LlabBatch<F> {
    pub fn data(&self) -> &Array5<F> {
        &self.data
    }

    pub fn into_inner(self) -> Array5<F> {
        self.data
    }

    pub fn norm_mode(&self) -> NormMode {
        self.norm_mode
    }

    pub fn shape(&self) -> [usize; 5] {
        let s = self.data.shape();
        [s[0], s[1], s[2], s[3], s[4]]
    }
}

fn pixelwise(src: ArrayView5<'_, f64>, mut f: impl FnMut(Index5, [f64; 3]) -> Result<[f64; 3]>) -> Result<Array5<f64>> {
    let (b, t, c, h, w) = src.dim();
    if c != 3 {
        return Err(ColorError::Shape(format!("expected 3 channels on axis 2, got {c}")));
    }
    let mut out = Array5::<f64>::zeros((b, t, 3, h, w));
    for bi in 0..b {
        for ti in 0..t {
            for y in 0..h {
                for x in 0..w {
                    let px = [src[[bi, ti, 0, y, x]], src[[bi, ti, 1, y, x]], src[[bi, ti, 2, y, x]]];
                    let v = f([bi, ti, 0, y, x], px)?;
                    for ch in 0..3 {
                        out[[bi, ti, ch, y, x]] = v[ch];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse companding followed by the sRGB → XYZ matrix, per pixel.
pub fn srgb_to_xyz(rgb: &RgbBatch) -> Array5<f64> {
    pixelwise(rgb.view(), |_, px| Ok(linear_rgb_to_xyz(px.map(srgb_to_linear))))
        .expect("RgbBatch has three channels")
}

/// CIELab (D65) from nonnegative XYZ; channel order `(L, a, b)`.
pub fn xyz_to_lab(xyz: ArrayView5<'_, f64>) -> Result<Array5<f64>> {
    pixelwise(xyz, |index, px| {
        if let Some(ch) = (0..3).find(|&ch| px[ch] < 0.0 || px[ch].is_nan()) {
            let mut index = index;
            index[2] = ch;
            return Err(ColorError::NegativeXyz { index, value: px[ch] });
        }
        Ok(xyz_to_lab_pixel(px))
    })
}

/// The full color transform: RGB → XYZ → Lab → `(L, L, a, b)`, optionally
/// rescaled, then cast to `F`.
pub fn rgb_to_llab<F: Float>(rgb: &RgbBatch, norm_mode: NormMode) -> Result<LlabBatch<F>> {
    let lab = xyz_to_lab(srgb_to_xyz(rgb).view())?;
    let (b, t, _, h, w) = lab.dim();
    let (l_scale, ab_scale) = match norm_mode {
        NormMode::Normalized => (1.0 / 100.0, 1.0 / 128.0),
        NormMode::Raw => (1.0, 1.0),
    };
    let cast = |v: f64| F::from(v).expect("finite Lab value fits the float type");
    let mut data = Array5::<F>::zeros((b, t, 4, h, w));
    Zip::from(data.index_axis_mut(Axis(2), 0))
        .and(lab.index_axis(Axis(2), 0))
        .for_each(|o, &l| *o = cast(l * l_scale));
    let l_channel = data.index_axis(Axis(2), 0).to_owned();
    data.index_axis_mut(Axis(2), 1).assign(&l_channel);
    for ch in 1..3 {
        Zip::from(data.index_axis_mut(Axis(2), ch + 1))
            .and(lab.index_axis(Axis(2), ch))
            .for_each(|o, &v| *o = cast(v * ab_scale));
    }
    Ok(LlabBatch { data, norm_mode })
}

/// Exact inverse of the RGB → Lab map on `(L, a, b)` channels; rejects
/// results outside `[-1e-4, 1 + 1e-4]` and clamps the rest into `[0, 1]`.
pub fn lab_to_rgb(lab: ArrayView5<'_, f64>) -> Result<Array5<f64>> {
    pixelwise(lab, |index, px| {
        let rgb = xyz_to_linear_rgb(lab_to_xyz(px)).map(linear_to_srgb);
        for (ch, &v) in rgb.iter().enumerate() {
            if !(-GAMUT_SLACK..=1.0 + GAMUT_SLACK).contains(&v) {
                let mut index = index;
                index[2] = ch;
                return Err(ColorError::OutOfGamut { index, value: v });
            }
        }
        Ok(rgb.map(|v| v.clamp(0.0, 1.0)))
    })
}
