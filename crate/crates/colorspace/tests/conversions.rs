use metalab_colorspace::*;
use ndarray::Array5;
use proptest::prelude::*;

fn one_pixel(rgb: [f64; 3]) -> RgbBatch {
    RgbBatch::new(Array5::from_shape_fn((1, 1, 3, 1, 1), |(_, _, c, _, _)| rgb[c])).unwrap()
}

fn lab_of(rgb: [f64; 3]) -> [f64; 3] {
    let llab = rgb_to_llab::<f64>(&one_pixel(rgb), NormMode::Raw).unwrap();
    let d = llab.data();
    [d[[0, 0, 1, 0, 0]], d[[0, 0, 2, 0, 0]], d[[0, 0, 3, 0, 0]]]
}

#[test]
fn xyz_reference_points() {
    let black = srgb_to_xyz(&one_pixel([0.0; 3]));
    assert!(black.iter().all(|&v| v == 0.0));

    let white = srgb_to_xyz(&one_pixel([1.0; 3]));
    let want = [0.9505, 1.0000, 1.0890];
    for c in 0..3 {
        assert!((white[[0, 0, c, 0, 0]] - want[c]).abs() < 2e-4, "channel {c}");
    }

    let gray = srgb_to_xyz(&one_pixel([0.5; 3]));
    let y = gray[[0, 0, 1, 0, 0]];
    assert!((y - 0.2140).abs() < 1e-4, "Y = {y}");
    for c in 0..3 {
        assert!((gray[[0, 0, c, 0, 0]] / y - D65_WHITE[c] / D65_WHITE[1]).abs() < 1e-12);
    }
}

#[test]
fn lab_reference_points() {
    let white = xyz_to_lab_pixel(D65_WHITE);
    assert!((white[0] - 100.0).abs() < 1e-9 && white[1].abs() < 1e-9 && white[2].abs() < 1e-9);
    assert_eq!(xyz_to_lab_pixel([0.0; 3]), [0.0, 0.0, 0.0]);

    let mid = xyz_to_lab_pixel(D65_WHITE.map(|w| 0.18 * w));
    assert!((mid[0] - 49.50).abs() < 5e-3, "L = {}", mid[0]);
    assert!(mid[1].abs() < 1e-12 && mid[2].abs() < 1e-12);

    let red = lab_of([1.0, 0.0, 0.0]);
    assert!((red[0] - 53.24).abs() < 0.01);
    assert!((red[1] - 80.09).abs() < 0.01);
    assert!((red[2] - 67.20).abs() < 0.01);
}

#[test]
fn inverse_reference_points() {
    let lab = |v: [f64; 3]| Array5::from_shape_fn((1, 1, 3, 1, 1), |(_, _, c, _, _)| v[c]);
    let white = lab_to_rgb(lab([100.0, 0.0, 0.0]).view()).unwrap();
    assert!(white.iter().all(|&v| (v - 1.0).abs() < 1e-5));
    let black = lab_to_rgb(lab([0.0; 3]).view()).unwrap();
    assert!(black.iter().all(|&v| v.abs() < 1e-12));
}

#[test]
fn grid_round_trip() {
    let n = 16;
    let data = Array5::from_shape_fn((1, n * n, 3, 1, n), |(_, t, c, _, x)| {
        let idx = [t / n, t % n, x];
        idx[c] as f64 / (n - 1) as f64
    });
    let rgb = RgbBatch::new(data.clone()).unwrap();
    let lab = xyz_to_lab(srgb_to_xyz(&rgb).view()).unwrap();
    let back = lab_to_rgb(lab.view()).unwrap();
    let err = data.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-5, "max round-trip error {err}");
}

#[test]
fn gray_levels_are_achromatic_and_monotone() {
    let mut prev = -1.0;
    for i in 0..=255 {
        let v = i as f64 / 255.0;
        let [l, a, b] = lab_of([v; 3]);
        assert!(a.abs() + b.abs() < 1e-6, "gray {i}: a={a} b={b}");
        assert!(l > prev, "L not increasing at {i}");
        prev = l;
    }
}

#[test]
fn llab_shape_for_an_episode_batch() {
    let rgb = RgbBatch::new(Array5::from_elem((2, 10, 3, 84, 84), 0.25)).unwrap();
    let llab = rgb_to_llab::<f32>(&rgb, NormMode::Normalized).unwrap();
    assert_eq!(llab.shape(), [2, 10, 4, 84, 84]);
    for ((_, _, ch, _, _), &v) in llab.data().indexed_iter() {
        if ch >= 2 {
            assert!(v.abs() < 1e-6);
        }
    }
}

proptest! {
    #[test]
    fn random_pixels_round_trip(r in 0.0..=1.0f64, g in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let back = lab_to_srgb(srgb_to_lab([r, g, b]));
        for (x, y) in [r, g, b].iter().zip(back) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn llab_channel_zero_is_a_bitwise_clone(r in 0.0..=1.0f64, g in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let llab = rgb_to_llab::<f32>(&one_pixel([r, g, b]), NormMode::Normalized).unwrap();
        let d = llab.data();
        prop_assert_eq!(d[[0, 0, 0, 0, 0]].to_bits(), d[[0, 0, 1, 0, 0]].to_bits());
    }
}
