//! Exact, invertible sRGB → XYZ → CIELab conversion and the four-channel
//! LLAB tensor fed to the encoder.
//!
//! The sRGB primaries and the D65 white point are fixed. The white point is
//! defined as the image of `(1, 1, 1)` under the forward matrix, so white maps
//! to `L = 100, a = b = 0` exactly. All arithmetic runs in `f64`; the LLAB
//! tensor is cast to the requested float type only at the very end.

mod batch;
mod pixel;

pub use batch::{lab_to_rgb, rgb_to_llab, srgb_to_xyz, xyz_to_lab, LlabBatch, NormMode, RgbBatch};
pub use pixel::{
    lab_to_linear_rgb, lab_to_srgb, lab_to_xyz, lch_to_lab, linear_rgb_to_xyz, linear_to_srgb, srgb_to_lab,
    srgb_to_linear, xyz_to_lab_pixel, xyz_to_linear_rgb, D65_WHITE, SRGB_TO_XYZ, XYZ_TO_SRGB,
};

/// Index `[b, t, c, y, x]` into a five-dimensional image batch.
pub type Index5 = [usize; 5];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ColorError {
    #[error("sRGB value {value} at index {index:?} lies outside [0, 1]")]
    OutOfRange { index: Index5, value: f64 },
    #[error("negative XYZ component {value} at index {index:?}; the upstream conversion is broken")]
    NegativeXyz { index: Index5, value: f64 },
    #[error("Lab value at index {index:?} maps to RGB component {value} outside the sRGB gamut")]
    OutOfGamut { index: Index5, value: f64 },
    #[error("shape error: {0}")]
    Shape(String),
}

pub type Result<T, E = ColorError> = std::result::Result<T, E>;
