//! Reverse-mode gradients of every primitive against central differences.

use metalab_tensor::gradcheck::suite::{primitive_suite, random_case, PRIMITIVES};
use metalab_tensor::gradcheck::check_gradients;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-5;

#[test]
fn every_primitive_passes_100_random_trials() {
    let results = primitive_suite(100, 2024, 1e-5).unwrap();
    assert_eq!(results.len(), PRIMITIVES.len());
    let mut failed = Vec::new();
    for r in &results {
        println!("{:<24} worst rel err {:.3e} ({} trials)", r.name, r.worst.max_rel_err, r.trials);
        if r.worst.max_rel_err >= TOL {
            failed.push(format!("{}: {:?}", r.name, r.worst));
        }
    }
    assert!(failed.is_empty(), "{failed:#?}");
}

#[test]
fn small_grouped_conv_is_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let (inputs, op) = random_case("grouped_conv2d", &mut rng);
        let r = check_gradients(op, &inputs, 1e-5).unwrap();
        assert!(r.max_rel_err < 1e-6, "{r:?}");
    }
}
