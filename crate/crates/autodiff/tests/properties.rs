use proptest::prelude::*;
use slatelab_autodiff::gradcheck::primitive_suite;
use slatelab_autodiff::{Adam, Checkpoint, ParamStore, Tensor};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn primitives_match_finite_differences_for_any_seed(seed in any::<u64>()) {
        for (name, report) in primitive_suite(seed, 1e-4).unwrap() {
            prop_assert!(report.max_rel_err < 1e-4, "{name}: {report:?}");
        }
    }

    #[test]
    fn checkpoint_bytes_round_trip(
        params in prop::collection::vec((1usize..4, 1usize..5, prop::collection::vec(-1e6f64..1e6, 12)), 0..4),
        meta in prop::collection::btree_map("[a-z_]{1,8}", "[ -~]{0,12}", 0..4),
        with_optimizer in any::<bool>(),
    ) {
        let mut store = ParamStore::new();
        for (i, (r, c, values)) in params.iter().enumerate() {
            store.add(&format!("p{i}"), Tensor::new(vec![*r, *c], values[..r * c].to_vec()).unwrap());
        }
        let mut ckpt = Checkpoint::new(store);
        for (k, v) in &meta {
            ckpt = ckpt.with_meta(k.as_str(), v);
        }
        if with_optimizer {
            ckpt.optimizer = Some(Adam::new(0.01));
        }
        let bytes = ckpt.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        for (k, v) in &meta {
            prop_assert_eq!(back.meta_str(k).unwrap(), v.as_str());
        }
    }

    #[test]
    fn corrupted_checkpoints_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = Checkpoint::from_bytes(&bytes);
        let mut framed = b"SLATECKP\x01\0\0\0".to_vec();
        framed.extend(&bytes);
        let _ = Checkpoint::from_bytes(&framed);
    }
}
