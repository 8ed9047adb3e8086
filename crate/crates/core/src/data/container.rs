//! The MNZD binary dataset container.
//!
//! Little-endian layout: magic `"MNZD"`, version u32 = 1, then n, C, H, W as
//! u32, then n label bytes, then n·C·H·W IEEE-754 f32 pixels. Pixels must
//! already be in `[0,1]` when written.

use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"MNZD";
const VERSION: u32 = 1;

/// Serialize a dataset to container bytes.
pub fn dataset_to_bytes(ds: &LabeledDataset) -> Vec<u8> {
    let shape = ds.images().shape();
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let mut out = Vec::with_capacity(24 + n + ds.images().len() * 4);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, n as u32, c as u32, h as u32, w as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(ds.labels());
    for px in ds.images().data() {
        out.extend_from_slice(&px.to_le_bytes());
    }
    out
}

/// Parse container bytes, validating magic, length, and pixel range.
pub fn dataset_from_bytes(bytes: &[u8], name: impl Into<String>) -> Result<LabeledDataset> {
    if bytes.len() < 24 {
        return Err(Error::Container(format!(
            "header truncated: expected at least 24 bytes, found {}",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Container(format!(
            "bad magic {:?}, expected {:?}",
            &bytes[0..4],
            MAGIC
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Container(format!("unsupported version {version}")));
    }
    let (n, c, h, w) = (
        u32_at(8) as usize,
        u32_at(12) as usize,
        u32_at(16) as usize,
        u32_at(20) as usize,
    );
    let pixel_count = n
        .checked_mul(c)
        .and_then(|v| v.checked_mul(h))
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| Error::Container("dimension overflow".into()))?;
    let expected = 24 + n + pixel_count * 4;
    if bytes.len() != expected {
        return Err(Error::Container(format!(
            "payload truncated: expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    let labels = bytes[24..24 + n].to_vec();
    let mut pixels = Vec::with_capacity(pixel_count);
    let base = 24 + n;
    for i in 0..pixel_count {
        let o = base + i * 4;
        let v = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Container(format!("pixel {i} = {v} outside [0,1]")));
        }
        pixels.push(v);
    }
    LabeledDataset::new(Tensor::new(vec![n, c, h, w], pixels)?, labels, name)
}

/// Load a dataset file; the file stem becomes the dataset name.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    dataset_from_bytes(&bytes, name)
}

/// Write a dataset file.
pub fn save_dataset(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, dataset_to_bytes(ds))?;
    Ok(())
}
