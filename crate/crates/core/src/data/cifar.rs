//! CIFAR-10 binary format: 3073-byte records of one label byte followed by
//! 1024 red, 1024 green and 1024 blue bytes.

use std::path::Path;

use super::{DatasetHandle, Role};
use crate::error::{LabError, Result};

pub const CIFAR_CLASSES: usize = 10;
pub const CIFAR_RECORD_LEN: usize = 3073;
const SHAPE: [usize; 3] = [3, 32, 32];

fn parse(bytes: &[u8], images: &mut Vec<f32>, labels: &mut Vec<usize>) -> Result<()> {
    if bytes.len() % CIFAR_RECORD_LEN != 0 {
        let offset = (bytes.len() / CIFAR_RECORD_LEN * CIFAR_RECORD_LEN) as u64;
        return Err(LabError::format(
            offset,
            format!(
                "truncated record: {} trailing bytes, records are {CIFAR_RECORD_LEN} bytes",
                bytes.len() % CIFAR_RECORD_LEN
            ),
        ));
    }
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        let label = rec[0] as usize;
        if label >= CIFAR_CLASSES {
            return Err(LabError::format(
                (i * CIFAR_RECORD_LEN) as u64,
                format!("label {label} out of range in record {i}"),
            ));
        }
        labels.push(label);
        images.extend(rec[1..].iter().map(|&b| b as f32 / 255.0));
    }
    Ok(())
}

/// Loads one CIFAR-10 binary batch file.
pub fn load_cifar_binary(path: impl AsRef<Path>) -> Result<DatasetHandle> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let (mut images, mut labels) = (Vec::new(), Vec::new());
    parse(&bytes, &mut images, &mut labels)?;
    DatasetHandle::new(SHAPE, CIFAR_CLASSES, images, labels, Role::Natural, format!("cifar10:{}", path.display()))
}

/// Loads `data_batch_1..5.bin` (train) or `test_batch.bin` from a directory.
pub fn load_cifar_dir(dir: impl AsRef<Path>, train: bool) -> Result<DatasetHandle> {
    let dir = dir.as_ref();
    let files: Vec<String> = if train {
        (1..=5).map(|i| format!("data_batch_{i}.bin")).collect()
    } else {
        vec!["test_batch.bin".to_string()]
    };
    let (mut images, mut labels) = (Vec::new(), Vec::new());
    for f in &files {
        let bytes = std::fs::read(dir.join(f))?;
        parse(&bytes, &mut images, &mut labels)?;
    }
    let split = if train { "train" } else { "test" };
    DatasetHandle::new(SHAPE, CIFAR_CLASSES, images, labels, Role::Natural, format!("cifar10-{split}:{}", dir.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: u8) -> Vec<u8> {
        let mut r = vec![fill; CIFAR_RECORD_LEN];
        r[0] = label;
        r
    }

    #[test]
    fn parses_labels_and_scales_pixels() {
        let mut bytes = record(6, 255);
        bytes.extend(record(0, 0));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.bin");
        std::fs::write(&p, &bytes).unwrap();
        let ds = load_cifar_binary(&p).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.label(0), 6);
        assert!(ds.image(0).iter().all(|&v| v == 1.0));
        assert!(ds.image(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn truncated_record_reports_offset() {
        let mut bytes = record(1, 3);
        bytes.extend(&record(2, 3)[..100]);
        let err = parse(&bytes, &mut Vec::new(), &mut Vec::new()).unwrap_err();
        assert!(matches!(err, LabError::Format { offset: 3073, .. }), "{err}");
    }

    #[test]
    fn label_out_of_range_rejected() {
        let mut bytes = record(1, 3);
        bytes.extend(record(10, 3));
        let err = parse(&bytes, &mut Vec::new(), &mut Vec::new()).unwrap_err();
        assert!(matches!(err, LabError::Format { offset: 3073, .. }), "{err}");
    }

    #[test]
    fn record_count_preserved() {
        let bytes: Vec<u8> = (0..10000u32).flat_map(|i| record((i % 10) as u8, 7)).collect();
        let (mut images, mut labels) = (Vec::new(), Vec::new());
        parse(&bytes, &mut images, &mut labels).unwrap();
        assert_eq!(labels.len(), 10000);
        assert_eq!(images.len(), 10000 * 3072);
    }
}
