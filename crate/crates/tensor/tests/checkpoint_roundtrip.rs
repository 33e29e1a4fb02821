use metalab_tensor::{checkpoint, ParamStore};
use ndarray::{ArrayD, IxDyn};
use proptest::prelude::*;

fn store_strategy() -> impl Strategy<Value = Vec<(String, Vec<usize>, Vec<f32>)>> {
    prop::collection::btree_map("[a-z][a-z0-9_.]{0,20}", prop::collection::vec(1usize..5, 0..4), 0..6)
        .prop_flat_map(|entries| {
            let parts: Vec<_> = entries
                .into_iter()
                .map(|(name, shape)| {
                    let len = shape.iter().product::<usize>();
                    (Just(name), Just(shape), prop::collection::vec(any::<f32>(), len))
                })
                .collect();
            parts
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_then_load_is_bit_exact(entries in store_strategy()) {
        let mut store = ParamStore::<f32>::new();
        for (name, shape, data) in &entries {
            store.insert(name.clone(), ArrayD::from_shape_vec(IxDyn(shape), data.clone()).unwrap()).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.mlab");
        checkpoint::save(&store, &path).unwrap();
        let back = checkpoint::load(&path).unwrap();
        prop_assert_eq!(back.len(), store.len());
        for (name, value) in store.iter() {
            let other = back.get(name).unwrap();
            prop_assert_eq!(other.shape(), value.shape());
            for (a, b) in value.iter().zip(other.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(checkpoint::load(dir.path().join("absent.mlab")).is_err());
}
