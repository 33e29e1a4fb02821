use metalab_colorspace::srgb_to_lab;
use metalab_episodic::{
    class_signature, make_synthetic_dataset, sample_episode, Dataset, EpisodeSpec, EpisodicError, SplitKind,
    SyntheticOptions,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

fn small() -> Dataset {
    make_synthetic_dataset(20, 8, 16, 3).unwrap()
}

#[test]
fn episode_sizes_follow_k_n_q() {
    let data = small();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let b = sample_episode(&data.train, EpisodeSpec::new(5, 1, 1, 1).unwrap(), &mut rng).unwrap();
    assert_eq!(b.images.images_per_episode(), 10);
    let spec = EpisodeSpec::new(5, 1, 15, 1).unwrap();
    assert_eq!(spec.t(), 80);
}

#[test]
fn same_seed_gives_identical_batches() {
    let data = small();
    let spec = EpisodeSpec::new(3, 2, 2, 2).unwrap();
    let a = sample_episode(&data.train, spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = sample_episode(&data.train, spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.class_map, b.class_map);
    assert_eq!(a.images.view(), b.images.view());
    let c = sample_episode(&data.train, spec, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    assert_ne!(a.images.view(), c.images.view());
}

#[test]
fn labels_partition_support_and_query() {
    let data = small();
    let spec = EpisodeSpec::new(4, 2, 3, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let batch = sample_episode(&data.train, spec, &mut rng).unwrap();
        for b in 0..spec.b {
            let classes: BTreeSet<_> = batch.class_map.row(b).iter().copied().collect();
            assert_eq!(classes.len(), spec.k);
            for c in 0..spec.k {
                let support = batch.support_labels().row(b).iter().filter(|&&l| l == c).count();
                let query = batch.query_labels().row(b).iter().filter(|&&l| l == c).count();
                assert_eq!((support, query), (spec.n, spec.q));
            }
        }
    }
}

#[test]
fn too_few_classes_or_items_is_a_config_error() {
    let data = small();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let err = sample_episode(&data.test, EpisodeSpec::new(6, 1, 1, 1).unwrap(), &mut rng).unwrap_err();
    assert!(matches!(err, EpisodicError::Config(_)));
    let err = sample_episode(&data.test, EpisodeSpec::new(2, 4, 5, 1).unwrap(), &mut rng).unwrap_err();
    assert!(matches!(err, EpisodicError::Config(_)));
    assert!(EpisodeSpec::new(1, 1, 1, 1).is_err());
    assert!(EpisodeSpec::new(2, 0, 1, 1).is_err());
}

#[test]
fn synthetic_counts_and_disjoint_splits() {
    let data = make_synthetic_dataset(20, 50, 84, 5).unwrap();
    assert_eq!(data.num_images(), 1000);
    let names: Vec<BTreeSet<String>> = SplitKind::ALL
        .iter()
        .map(|&k| data.split(k).classes.iter().map(|c| c.name.clone()).collect())
        .collect();
    assert_eq!(names.iter().map(BTreeSet::len).sum::<usize>(), 20);
    assert!(names[0].is_disjoint(&names[1]) && names[0].is_disjoint(&names[2]) && names[1].is_disjoint(&names[2]));
    assert_eq!(names[2].len(), 5);
    let imgs = &data.test.classes[0].images;
    assert_ne!(imgs[0], imgs[1]);
    assert!(make_synthetic_dataset(9, 5, 16, 0).is_err());
}

/// Mean hue and lightness of the foreground pixels of one image.
fn foreground_stats(img: &image::RgbImage, background_l: f64) -> (f64, f64) {
    let (mut l, mut a, mut b, mut n) = (0.0, 0.0, 0.0, 0.0);
    for px in img.pixels() {
        let lab = srgb_to_lab(px.0.map(|c| f64::from(c) / 255.0));
        if (lab[0] - background_l).abs() > 8.0 && lab[1].hypot(lab[2]) > 12.0 {
            l += lab[0];
            a += lab[1];
            b += lab[2];
            n += 1.0;
        }
    }
    assert!(n > 20.0);
    (b.atan2(a).to_degrees().rem_euclid(360.0), l / n)
}

fn hue_gap(x: f64, y: f64) -> f64 {
    let d = (x - y).rem_euclid(360.0);
    d.min(360.0 - d)
}

#[test]
fn class_centroids_are_separated_by_twice_the_jitter() {
    let opts = SyntheticOptions::default();
    let data = make_synthetic_dataset(20, 30, 48, 11).unwrap();
    let mut centroids = Vec::new();
    for kind in SplitKind::ALL {
        for class in &data.split(kind).classes {
            let index: usize = class.name.trim_start_matches("class_").parse().unwrap();
            let stats: Vec<_> = class.images.iter().map(|i| foreground_stats(i, opts.background_l)).collect();
            let sig = class_signature(index);
            let max_hue_dev = stats.iter().map(|s| hue_gap(s.0, sig.hue_deg)).fold(0.0, f64::max);
            let max_l_dev = stats.iter().map(|s| (s.1 - sig.lightness).abs()).fold(0.0, f64::max);
            assert!(max_hue_dev <= opts.hue_jitter_deg + 3.0, "class {index}: hue deviation {max_hue_dev}");
            assert!(max_l_dev <= opts.lightness_jitter * sig.lightness + 2.0, "class {index}: L deviation {max_l_dev}");
            let hx = stats.iter().map(|s| s.0.to_radians().cos()).sum::<f64>();
            let hy = stats.iter().map(|s| s.0.to_radians().sin()).sum::<f64>();
            let l = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
            centroids.push((index, hy.atan2(hx).to_degrees(), l));
        }
    }
    let hue_radius = opts.hue_jitter_deg;
    let l_radius = opts.lightness_jitter * 72.0;
    for (i, a) in centroids.iter().enumerate() {
        for b in &centroids[i + 1..] {
            let separated = hue_gap(a.1, b.1) >= 2.0 * hue_radius || (a.2 - b.2).abs() >= 2.0 * l_radius;
            assert!(separated, "classes {} and {} overlap: {a:?} {b:?}", a.0, b.0);
        }
    }
}

#[test]
fn png_layout_round_trips() {
    let data = make_synthetic_dataset(12, 3, 16, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    data.save(dir.path()).unwrap();
    assert!(dir.path().join("test/class_003/0002.png").exists());
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back.size, 16);
    for kind in SplitKind::ALL {
        let (a, b) = (data.split(kind), back.split(kind));
        assert_eq!(a.classes.len(), b.classes.len());
        for (x, y) in a.classes.iter().zip(&b.classes) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.images, y.images);
        }
    }
    assert!(Dataset::load(dir.path().join("missing")).is_err());
}
