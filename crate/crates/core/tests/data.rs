use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robustlab::data::{
    dataset_from_bytes, dataset_to_bytes, load_dataset, save_dataset, DatasetHandle, MixPolicy, MixStream, Role,
    SyntheticSpec,
};
use robustlab::nn::{checkpoint_to_bytes, MicroResNet};
use robustlab::transforms::AugmentPolicy;
use robustlab::LabError;

fn tiny(count: usize, seed: u64) -> DatasetHandle {
    SyntheticSpec::new(8, 3, count, seed).generate().unwrap()
}

#[test]
fn rdst_round_trip_is_lossless() {
    let ds = tiny(30, 1).with_provenance("fA=abc123;steps=200;seed=7");
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.rdst");
    save_dataset(&ds, &p).unwrap();
    let back = load_dataset(&p).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.provenance(), "fA=abc123;steps=200;seed=7");

    let relabelled = DatasetHandle::new(ds.shape(), 10, ds.all().0.into_data(), ds.labels().to_vec(), Role::NonRobust, "x").unwrap();
    assert_eq!(dataset_from_bytes(&dataset_to_bytes(&relabelled)).unwrap().role(), Role::NonRobust);
}

#[test]
fn rdst_rejects_foreign_and_damaged_files() {
    let model = MicroResNet::small([3, 8, 8], 10).build(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let err = dataset_from_bytes(&checkpoint_to_bytes(&model)).unwrap_err();
    assert!(matches!(err, LabError::Format { offset: 0, .. }), "{err}");

    let bytes = dataset_to_bytes(&tiny(5, 2));
    let mut wrong_version = bytes.clone();
    wrong_version[4] = 9;
    assert!(matches!(dataset_from_bytes(&wrong_version), Err(LabError::Format { offset: 4, .. })));
    assert!(matches!(dataset_from_bytes(&bytes[..bytes.len() - 3]), Err(LabError::Format { .. })));
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(dataset_from_bytes(&trailing).is_err());
}

#[test]
fn alpha_extremes_and_half() {
    let nat = tiny(200, 3);
    let rob = tiny(150, 4);
    for (alpha, b, expected) in [(0.0, 32, 0), (1.0, 32, 32), (0.5, 128, 64)] {
        let policy = MixPolicy::new(alpha, b, 200).unwrap();
        let mut s = MixStream::new(&nat, Some(&rob), policy, 9).unwrap();
        for _ in 0..6 {
            let batch = s.next_batch();
            assert_eq!(batch.robust_count(), expected);
            assert_eq!(batch.labels.len(), b);
        }
    }
}

#[test]
fn alpha_needs_a_robust_set() {
    let nat = tiny(20, 3);
    assert!(MixStream::new(&nat, None, MixPolicy::new(0.1, 10, 20).unwrap(), 0).is_err());
    // 0.04 * 10 rounds to zero robust images
    assert!(MixStream::new(&nat, None, MixPolicy::new(0.04, 10, 20).unwrap(), 0).is_ok());
    assert!(MixPolicy::new(1.5, 10, 20).is_err());
    assert!(MixPolicy::new(0.5, 0, 20).is_err());
}

#[test]
fn epoch_accounting_uses_ceiling() {
    let p = MixPolicy::new(0.0, 64, 50_000).unwrap();
    assert_eq!(p.steps_per_epoch(), 782);
    assert_eq!(MixPolicy::new(0.0, 128, 50_000).unwrap().steps_per_epoch(), 391);
    let nat = tiny(10, 5);
    let mut s = MixStream::new(&nat, None, MixPolicy::new(0.0, 4, 10).unwrap(), 0).unwrap();
    let epochs: Vec<u64> = (0..7).map(|_| s.next_batch().epoch).collect();
    assert_eq!(epochs, vec![0, 0, 0, 1, 1, 1, 2]);
}

#[test]
fn sampling_touches_every_image_each_pass() {
    let nat = tiny(30, 6);
    let mut s = MixStream::new(&nat, None, MixPolicy::new(0.0, 10, 30).unwrap(), 1).unwrap();
    // images are all distinct, so use them to identify draws
    let mut seen = Vec::new();
    for _ in 0..3 {
        let b = s.next_batch();
        for i in 0..10 {
            let row = b.images.row(i);
            seen.push((0..30).position(|j| nat.image(j) == row).unwrap());
        }
    }
    seen.sort_unstable();
    assert_eq!(seen, (0..30).collect::<Vec<_>>());
}

#[test]
fn streams_are_reproducible() {
    let nat = tiny(40, 7);
    let rob = tiny(40, 8);
    let policy = MixPolicy::new(0.3, 16, 40).unwrap();
    let run = |seed| {
        let s = MixStream::new(&nat, Some(&rob), policy, seed).unwrap().with_augment(AugmentPolicy::standard());
        s.take(5).map(|b| (b.images.into_data(), b.labels, b.robust)).collect::<Vec<_>>()
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}

#[test]
fn synthetic_images_are_learnable_shapes() {
    let ds = SyntheticSpec::new(16, 3, 100, 0).generate().unwrap();
    assert_eq!(ds.shape(), [3, 16, 16]);
    assert_eq!(ds.role(), Role::Natural);
    assert!(ds.provenance().starts_with("synthetic:"));
    let grey = SyntheticSpec::new(28, 1, 20, 0).generate().unwrap();
    assert_eq!(grey.shape(), [1, 28, 28]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn robust_share_is_exact(alpha in 0.0f64..=1.0, b in 1usize..70, seed in 0u64..1000) {
        let nat = tiny(25, 11);
        let rob = tiny(13, 12);
        let policy = MixPolicy::new(alpha, b, 100).unwrap();
        let expected = (alpha * b as f64 + 0.5).floor() as usize;
        let mut s = MixStream::new(&nat, Some(&rob), policy, seed).unwrap().with_augment(AugmentPolicy::standard_star());
        for _ in 0..3 {
            let batch = s.next_batch();
            prop_assert_eq!(batch.robust_count(), expected);
            prop_assert!(batch.images.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
