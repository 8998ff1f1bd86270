//! The `SEATCKPT` container: magic, `u32` LE version, `u64` LE header length,
//! a UTF-8 JSON header, then raw little-endian blobs in header order.
//!
//! Parameter files carry `{config, step, provenance, tensors}` headers with
//! `f32` blobs. Mask files carry a `"section": "MASK"` header and one packed
//! bitset per tensor (LSB first, padded to a whole byte).

use std::fs;
use std::path::Path;

use seat_core::model::{ModelCheckpoint, ModelConfig, Provenance};
use seat_core::sparsity::{MaskStrategy, MaskTensor, SparseMask};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"SEATCKPT";
pub const VERSION: u32 = 1;
pub const MASK_SECTION: &str = "MASK";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    byte_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsHeader {
    config: ModelConfig,
    step: u64,
    provenance: Provenance,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskEntry {
    name: String,
    shape: Vec<usize>,
    maskable: bool,
    byte_offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskHeader {
    section: String,
    ratio: f64,
    strategy: MaskStrategy,
    seed: u64,
    tensors: Vec<MaskEntry>,
}

/// Decoding failure; the caller attaches the path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatError(pub String);

type Decoded<T> = std::result::Result<T, FormatError>;

fn bad<T>(msg: impl Into<String>) -> Decoded<T> {
    Err(FormatError(msg.into()))
}

fn frame(header: &[u8], data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + header.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header);
    out.extend_from_slice(data);
    out
}

/// Splits a container into its JSON header and data region.
fn unframe(bytes: &[u8]) -> Decoded<(serde_json::Value, &[u8])> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return bad("not a SEATCKPT container (bad magic)");
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return bad(format!("unsupported container version {version}"));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let end = usize::try_from(len)
        .ok()
        .and_then(|l| l.checked_add(20))
        .filter(|&e| e <= bytes.len());
    let Some(end) = end else {
        return bad(format!("header length {len} exceeds file size {}", bytes.len()));
    };
    let header = serde_json::from_slice(&bytes[20..end]).or_else(|e| bad(format!("header JSON: {e}")))?;
    Ok((header, &bytes[end..]))
}

fn section(header: &serde_json::Value) -> Option<&str> {
    header.get("section").and_then(|s| s.as_str())
}

pub fn encode_checkpoint(ckpt: &ModelCheckpoint) -> Vec<u8> {
    let mut tensors = Vec::new();
    let mut data = Vec::with_capacity(ckpt.params.len() * 4);
    for (spec, values) in ckpt.tensors() {
        tensors.push(TensorEntry {
            name: spec.name.clone(),
            shape: spec.shape.clone(),
            byte_offset: data.len() as u64,
        });
        for v in values {
            data.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = ParamsHeader {
        config: ckpt.config.clone(),
        step: ckpt.step,
        provenance: ckpt.provenance.clone(),
        tensors,
    };
    frame(&serde_json::to_vec(&header).expect("header serializes"), &data)
}

/// Byte ranges of consecutive entries must tile the data region exactly.
fn check_tiling(offsets: &[(String, u64, usize)], data_len: usize) -> Decoded<()> {
    let mut expected = 0u64;
    for (name, offset, len) in offsets {
        if *offset != expected {
            return bad(format!("tensor {name}: byte_offset {offset}, expected {expected}"));
        }
        expected += *len as u64;
    }
    if expected != data_len as u64 {
        return bad(format!("data region holds {data_len} bytes, header describes {expected}"));
    }
    Ok(())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Decoded<ModelCheckpoint> {
    let (header, data) = unframe(bytes)?;
    if let Some(s) = section(&header) {
        return bad(format!("expected a parameter container, found section {s:?}"));
    }
    let header: ParamsHeader =
        serde_json::from_value(header).or_else(|e| bad(format!("parameter header: {e}")))?;
    let spans: Vec<(String, u64, usize)> = header
        .tensors
        .iter()
        .map(|t| (t.name.clone(), t.byte_offset, t.shape.iter().product::<usize>() * 4))
        .collect();
    check_tiling(&spans, data.len())?;
    let tensors = header
        .tensors
        .into_iter()
        .zip(&spans)
        .map(|(t, (_, off, len))| {
            let blob = &data[*off as usize..*off as usize + len];
            let values = blob
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            (t.name, t.shape, values)
        })
        .collect();
    ModelCheckpoint::from_parts(header.config, tensors, header.step, header.provenance)
        .or_else(|e| bad(e.to_string()))
}

fn pack(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

pub fn encode_mask(mask: &SparseMask) -> Vec<u8> {
    let mut tensors = Vec::new();
    let mut data = Vec::new();
    for (t, bits) in mask.entries() {
        tensors.push(MaskEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            maskable: t.maskable,
            byte_offset: data.len() as u64,
        });
        data.extend(pack(bits));
    }
    let header = MaskHeader {
        section: MASK_SECTION.to_string(),
        ratio: mask.ratio,
        strategy: mask.strategy,
        seed: mask.seed,
        tensors,
    };
    frame(&serde_json::to_vec(&header).expect("header serializes"), &data)
}

pub fn decode_mask(bytes: &[u8]) -> Decoded<SparseMask> {
    let (header, data) = unframe(bytes)?;
    if section(&header) != Some(MASK_SECTION) {
        return bad("expected a MASK section");
    }
    let header: MaskHeader = serde_json::from_value(header).or_else(|e| bad(format!("mask header: {e}")))?;
    let spans: Vec<(String, u64, usize)> = header
        .tensors
        .iter()
        .map(|t| (t.name.clone(), t.byte_offset, t.shape.iter().product::<usize>().div_ceil(8)))
        .collect();
    check_tiling(&spans, data.len())?;
    let mut bits = Vec::new();
    let mut tensors = Vec::new();
    for (t, (_, off, len)) in header.tensors.into_iter().zip(&spans) {
        let n: usize = t.shape.iter().product();
        let blob = &data[*off as usize..*off as usize + len];
        bits.extend((0..n).map(|i| blob[i / 8] >> (i % 8) & 1 == 1));
        if !n.is_multiple_of(8) && blob[len - 1] >> (n % 8) != 0 {
            return bad(format!("tensor {}: padding bits set", t.name));
        }
        tensors.push(MaskTensor {
            name: t.name,
            shape: t.shape,
            maskable: t.maskable,
        });
    }
    Ok(SparseMask {
        tensors,
        bits,
        ratio: header.ratio,
        strategy: header.strategy,
        seed: header.seed,
    })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    decode_checkpoint(&read(path)?).map_err(|e| CliError::format(path, e.0))
}

pub fn load_mask(path: &Path) -> Result<SparseMask> {
    decode_mask(&read(path)?).map_err(|e| CliError::format(path, e.0))
}
