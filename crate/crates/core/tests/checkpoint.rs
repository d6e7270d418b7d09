use std::collections::BTreeMap;

use proptest::prelude::*;

use sparsae::checkpoint::{Checkpoint, NamedTensor, MAGIC};
use sparsae::Error;

fn tensor() -> impl Strategy<Value = NamedTensor> {
    ("[a-z][a-z0-9./_]{0,12}", prop::collection::vec(1usize..4, 0..3))
        .prop_flat_map(|(name, shape)| {
            let n = shape.iter().product::<usize>();
            (Just(name), Just(shape), prop::collection::vec(any::<f32>(), n))
        })
        .prop_map(|(name, shape, data)| NamedTensor { name, shape, data })
}

fn checkpoint() -> impl Strategy<Value = Checkpoint> {
    (
        prop::collection::btree_map("[a-z][a-z0-9._]{0,8}", "[ -~]{0,16}", 0..6),
        prop::collection::vec(tensor(), 0..5),
    )
        .prop_map(|(meta, tensors)| Checkpoint { meta, tensors })
}

/// Compares float payloads bitwise so NaNs round-trip too.
fn bits(c: &Checkpoint) -> Vec<(String, Vec<usize>, Vec<u32>)> {
    c.tensors.iter().map(|t| (t.name.clone(), t.shape.clone(), t.data.iter().map(|v| v.to_bits()).collect())).collect()
}

fn sample() -> Checkpoint {
    Checkpoint {
        meta: BTreeMap::from([("kind".to_string(), "autoencoder".to_string()), ("seed".into(), "7".into())]),
        tensors: vec![
            NamedTensor { name: "param/a.weight".into(), shape: vec![2, 3], data: vec![1.5, -2.0, 0.0, 3.25, 1e-7, -0.0] },
            NamedTensor { name: "optim/adam.m.a.weight".into(), shape: vec![1], data: vec![4.0] },
        ],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bytes_round_trip(c in checkpoint()) {
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back.meta, &c.meta);
        prop_assert_eq!(bits(&back), bits(&c));
        prop_assert_eq!(back.to_bytes(), bytes);
    }
}

#[test]
fn every_truncation_is_reported() {
    let bytes = sample().to_bytes();
    for cut in 0..bytes.len() {
        match Checkpoint::from_bytes(&bytes[..cut]) {
            Err(Error::Truncated(_)) => {}
            other => panic!("cut at {cut}: {other:?}"),
        }
    }
}

#[test]
fn bad_magic_and_version() {
    let mut bytes = sample().to_bytes();
    assert_eq!(&bytes[..4], MAGIC);
    bytes[5] = 9;
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::VersionUnsupported(_))));
    bytes[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::BadMagic)));
}

#[test]
fn save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.spae"), dir.path().join("b.spae"));
    sample().save(&a).unwrap();
    Checkpoint::load(&a).unwrap().save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(Checkpoint::load(&b).unwrap(), sample());
    let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 2, "temporary files left behind: {names:?}");
}

#[test]
fn failed_save_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("missing").join("x.spae");
    assert!(matches!(sample().save(&target), Err(Error::CheckpointIo { .. })));
    assert!(!target.exists());
    assert!(matches!(Checkpoint::load(&target), Err(Error::CheckpointIo { .. })));
}
