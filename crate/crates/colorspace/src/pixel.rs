/// Linear sRGB → XYZ (D65), IEC 61966-2-1.
pub const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

/// Exact inverse of [`SRGB_TO_XYZ`], evaluated at compile time.
pub const XYZ_TO_SRGB: [[f64; 3]; 3] = invert(SRGB_TO_XYZ);

/// Reference white: row sums of [`SRGB_TO_XYZ`] (≈ 0.9505, 1.0000, 1.0888).
pub const D65_WHITE: [f64; 3] = [
    SRGB_TO_XYZ[0][0] + SRGB_TO_XYZ[0][1] + SRGB_TO_XYZ[0][2],
    SRGB_TO_XYZ[1][0] + SRGB_TO_XYZ[1][1] + SRGB_TO_XYZ[1][2],
    SRGB_TO_XYZ[2][0] + SRGB_TO_XYZ[2][1] + SRGB_TO_XYZ[2][2],
];

const DELTA: f64 = 6.0 / 29.0;

const fn invert(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    [
        [
            c00 / det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det,
        ],
        [
            c01 / det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det,
        ],
        [
            c02 / det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det,
        ],
    ]
}

fn apply(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// sRGB inverse companding.
pub fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// sRGB companding; negative inputs are mirrored so the map stays odd.
pub fn linear_to_srgb(c: f64) -> f64 {
    if c.abs() <= 0.04045 / 12.92 {
        c * 12.92
    } else {
        c.signum() * (1.055 * c.abs().powf(1.0 / 2.4) - 0.055)
    }
}

pub fn linear_rgb_to_xyz(rgb: [f64; 3]) -> [f64; 3] {
    apply(&SRGB_TO_XYZ, rgb)
}

pub fn xyz_to_linear_rgb(xyz: [f64; 3]) -> [f64; 3] {
    apply(&XYZ_TO_SRGB, xyz)
}

fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(u: f64) -> f64 {
    if u > DELTA {
        u * u * u
    } else {
        3.0 * DELTA * DELTA * (u - 4.0 / 29.0)
    }
}

pub fn xyz_to_lab_pixel(xyz: [f64; 3]) -> [f64; 3] {
    let fx = lab_f(xyz[0] / D65_WHITE[0]);
    let fy = lab_f(xyz[1] / D65_WHITE[1]);
    let fz = lab_f(xyz[2] / D65_WHITE[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn lab_to_xyz(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    [
        D65_WHITE[0] * lab_f_inv(fx),
        D65_WHITE[1] * lab_f_inv(fy),
        D65_WHITE[2] * lab_f_inv(fz),
    ]
}

pub fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    xyz_to_lab_pixel(linear_rgb_to_xyz(rgb.map(srgb_to_linear)))
}

pub fn lab_to_linear_rgb(lab: [f64; 3]) -> [f64; 3] {
    xyz_to_linear_rgb(lab_to_xyz(lab))
}

/// Lab → sRGB without any gamut check; components may leave `[0, 1]`.
pub fn lab_to_srgb(lab: [f64; 3]) -> [f64; 3] {
    lab_to_linear_rgb(lab).map(linear_to_srgb)
}

/// Cylindrical LCh (hue in degrees) → Lab.
pub fn lch_to_lab(l: f64, chroma: f64, hue_deg: f64) -> [f64; 3] {
    let h = hue_deg.to_radians();
    [l, chroma * h.cos(), chroma * h.sin()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_matrix_is_exact_enough() {
        for (i, row) in SRGB_TO_XYZ.iter().enumerate() {
            for j in 0..3 {
                let v: f64 = row.iter().zip(&XYZ_TO_SRGB).map(|(r, inv)| r * inv[j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-14, "({i},{j}) = {v}");
            }
        }
    }

    #[test]
    fn companding_branches_invert_each_other() {
        // The published constants leave a jump of order 1e-8 at the threshold.
        let below = srgb_to_linear(0.04045);
        let above = srgb_to_linear(0.040_450_000_001);
        assert!((below - above).abs() < 1e-7);
        for c in [0.0, 0.01, 0.04045, 0.0405, 0.3, 0.99, 1.0] {
            assert!((linear_to_srgb(srgb_to_linear(c)) - c).abs() < 1e-14, "{c}");
        }
    }

    #[test]
    fn lab_f_branches_agree_at_delta_cubed() {
        let t = DELTA * DELTA * DELTA;
        let linear = t / (3.0 * DELTA * DELTA) + 4.0 / 29.0;
        assert!((t.cbrt() - linear).abs() < 1e-15);
    }
}
