//! `RDST` dataset files: role tag, provenance string, class count, image
//! shape, labels and raw `f32` pixels.

use std::path::Path;

use super::{DatasetHandle, Role};
use crate::container::{ByteReader, ByteWriter};
use crate::error::{LabError, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"RDST";
pub const DATASET_VERSION: u16 = 1;

pub fn dataset_to_bytes(ds: &DatasetHandle) -> Vec<u8> {
    let mut w = ByteWriter::new(DATASET_MAGIC, DATASET_VERSION);
    w.u8(ds.role().tag());
    w.str(ds.provenance());
    w.usize32(ds.class_count());
    for e in ds.shape() {
        w.usize32(e);
    }
    w.u64(ds.len() as u64);
    for &y in ds.labels() {
        w.usize32(y);
    }
    w.f32s(ds.raw_images());
    w.finish()
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<DatasetHandle> {
    let mut r = ByteReader::open(bytes, DATASET_MAGIC, DATASET_VERSION)?;
    let at = r.offset();
    let role = Role::from_tag(r.u8()?).ok_or_else(|| LabError::format(at, "unknown role tag"))?;
    let provenance = r.str()?;
    let classes = r.usize32()?;
    let shape = [r.usize32()?, r.usize32()?, r.usize32()?];
    let at = r.offset();
    let count = usize::try_from(r.u64()?).map_err(|_| LabError::format(at, "count overflow"))?;
    let per: usize = shape.iter().product();
    if count.checked_mul(per).and_then(|v| v.checked_mul(4)).is_none() || count > bytes.len() {
        return Err(LabError::format(at, format!("implausible example count {count}")));
    }
    let labels = (0..count).map(|_| r.usize32()).collect::<Result<Vec<_>>>()?;
    let images = r.f32s(count * per)?;
    r.finish()?;
    DatasetHandle::new(shape, classes, images, labels, role, provenance)
}

pub fn save_dataset(ds: &DatasetHandle, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, dataset_to_bytes(ds))?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<DatasetHandle> {
    dataset_from_bytes(&std::fs::read(path)?)
}
