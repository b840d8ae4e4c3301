//! `RLAB` checkpoint files: class count, input shape, layer table and raw
//! `f32` parameters, all little-endian.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::group::Group;
use super::layer::{ConvSpec, GroupConvSpec, LayerSpec};
use super::{ModelGraph, Param};
use crate::container::{ByteReader, ByteWriter};
use crate::error::{LabError, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RLAB";
pub const CHECKPOINT_VERSION: u16 = 1;

fn write_conv(w: &mut ByteWriter, c: &ConvSpec) {
    for v in [c.in_channels, c.out_channels, c.kernel, c.stride, c.padding] {
        w.usize32(v);
    }
}

fn read_conv(r: &mut ByteReader) -> Result<ConvSpec> {
    Ok(ConvSpec {
        in_channels: r.usize32()?,
        out_channels: r.usize32()?,
        kernel: r.usize32()?,
        stride: r.usize32()?,
        padding: r.usize32()?,
    })
}

fn write_layer(w: &mut ByteWriter, layer: &LayerSpec) {
    match layer {
        LayerSpec::Dense { inputs, outputs } => {
            w.u8(0);
            w.usize32(*inputs);
            w.usize32(*outputs);
        }
        LayerSpec::Conv2d(c) => {
            w.u8(1);
            write_conv(w, c);
        }
        LayerSpec::Relu => w.u8(2),
        LayerSpec::MaxPool { kernel, stride } => {
            w.u8(3);
            w.usize32(*kernel);
            w.usize32(*stride);
        }
        LayerSpec::AvgPool { kernel, stride } => {
            w.u8(4);
            w.usize32(*kernel);
            w.usize32(*stride);
        }
        LayerSpec::GlobalAvgPool => w.u8(5),
        LayerSpec::Flatten => w.u8(6),
        LayerSpec::Residual { body, shortcut } => {
            w.u8(7);
            w.usize32(body.len());
            for l in body {
                write_layer(w, l);
            }
            match shortcut {
                Some(s) => {
                    w.u8(1);
                    write_layer(w, s);
                }
                None => w.u8(0),
            }
        }
        LayerSpec::P4Conv(g) | LayerSpec::P4mConv(g) => {
            w.u8(if matches!(layer, LayerSpec::P4Conv(_)) { 8 } else { 9 });
            write_conv(w, &g.conv);
            w.u8(g.lifting as u8);
        }
        LayerSpec::GroupPool(g) => {
            w.u8(10);
            w.u8(matches!(g, Group::P4m) as u8);
        }
    }
}

fn read_layer(r: &mut ByteReader) -> Result<LayerSpec> {
    let at = r.offset();
    Ok(match r.u8()? {
        0 => LayerSpec::Dense {
            inputs: r.usize32()?,
            outputs: r.usize32()?,
        },
        1 => LayerSpec::Conv2d(read_conv(r)?),
        2 => LayerSpec::Relu,
        3 => LayerSpec::MaxPool {
            kernel: r.usize32()?,
            stride: r.usize32()?,
        },
        4 => LayerSpec::AvgPool {
            kernel: r.usize32()?,
            stride: r.usize32()?,
        },
        5 => LayerSpec::GlobalAvgPool,
        6 => LayerSpec::Flatten,
        7 => {
            let n = r.usize32()?;
            let body = (0..n).map(|_| read_layer(r)).collect::<Result<Vec<_>>>()?;
            let shortcut = match r.u8()? {
                0 => None,
                _ => Some(Box::new(read_layer(r)?)),
            };
            LayerSpec::Residual { body, shortcut }
        }
        tag @ (8 | 9) => {
            let conv = read_conv(r)?;
            let g = GroupConvSpec {
                conv,
                lifting: r.u8()? != 0,
            };
            if tag == 8 {
                LayerSpec::P4Conv(g)
            } else {
                LayerSpec::P4mConv(g)
            }
        }
        10 => LayerSpec::GroupPool(if r.u8()? == 0 { Group::P4 } else { Group::P4m }),
        tag => return Err(LabError::format(at, format!("unknown layer tag {tag}"))),
    })
}

pub fn checkpoint_to_bytes(model: &ModelGraph) -> Vec<u8> {
    let mut w = ByteWriter::new(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
    w.usize32(model.class_count());
    w.usize32(model.input_shape().len());
    for &e in model.input_shape() {
        w.usize32(e);
    }
    w.usize32(model.layers().len());
    for l in model.layers() {
        write_layer(&mut w, l);
    }
    w.usize32(model.params().len());
    for p in model.params() {
        w.str(&p.name);
        w.usize32(p.value.shape().len());
        for &e in p.value.shape() {
            w.usize32(e);
        }
        w.f32s(p.value.data());
    }
    w.finish()
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<ModelGraph> {
    let mut r = ByteReader::open(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let classes = r.usize32()?;
    let rank = r.usize32()?;
    let input_shape = (0..rank).map(|_| r.usize32()).collect::<Result<Vec<_>>>()?;
    let nl = r.usize32()?;
    let layers = (0..nl).map(|_| read_layer(&mut r)).collect::<Result<Vec<_>>>()?;
    let np = r.usize32()?;
    let mut params = Vec::with_capacity(np.min(4096));
    for _ in 0..np {
        let name = r.str()?;
        let rank = r.usize32()?;
        let shape = (0..rank).map(|_| r.usize32()).collect::<Result<Vec<_>>>()?;
        let at = r.offset();
        let n = shape
            .iter()
            .try_fold(1usize, |a, &e| a.checked_mul(e))
            .ok_or_else(|| LabError::format(at, "parameter size overflow"))?;
        let data = r.f32s(n)?;
        params.push(Param {
            name,
            value: Tensor::from_vec(&shape, data)?,
        });
    }
    r.finish()?;
    ModelGraph::from_parts(&input_shape, layers, classes, params)
}

pub fn save_checkpoint(model: &ModelGraph, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, checkpoint_to_bytes(model))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelGraph> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}

/// Hex SHA-256 of the serialized model; used as dataset provenance.
pub fn checkpoint_hash(model: &ModelGraph) -> String {
    Sha256::digest(checkpoint_to_bytes(model))
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
