//! Reader for the big-endian IDX binary format used by the MNIST
//! distribution. Gzip-compressed files are detected by magic bytes and
//! decompressed transparently.

use crate::error::{Error, Result};
use flate2::read::GzDecoder;
use std::fs::File;
use std::io::Read;
use std::path::Path;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        return Ok(out);
    }
    Ok(raw)
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if end > bytes.len() {
        return Err(Error::DataFormat {
            offset: offset as u64,
            reason: "file truncated while reading a 32-bit header field".into(),
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Loads an IDX image file. Pixels are flattened row-major and scaled to
/// `[0, 1]` by dividing by 255.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let bytes = read_file(path.as_ref())?;
    let magic = read_u32(&bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::DataFormat {
            offset: 0,
            reason: format!("bad magic {magic:#010x}, expected {IMAGE_MAGIC:#010x} for images"),
        });
    }
    let count = read_u32(&bytes, 4)? as usize;
    let rows = read_u32(&bytes, 8)? as usize;
    let cols = read_u32(&bytes, 12)? as usize;
    let dim = rows * cols;
    let expected = 16 + count * dim;
    if bytes.len() != expected {
        return Err(Error::DataFormat {
            offset: bytes.len().min(expected) as u64,
            reason: format!(
                "payload size mismatch: header declares {count}x{rows}x{cols} ({} bytes), file has {}",
                expected,
                bytes.len()
            ),
        });
    }
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let start = 16 + i * dim;
        images.push(
            bytes[start..start + dim]
                .iter()
                .map(|&b| f64::from(b) / 255.0)
                .collect(),
        );
    }
    Ok(images)
}

/// Loads an IDX label file. Labels must be digits in `0..=9`.
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let bytes = read_file(path.as_ref())?;
    let magic = read_u32(&bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::DataFormat {
            offset: 0,
            reason: format!("bad magic {magic:#010x}, expected {LABEL_MAGIC:#010x} for labels"),
        });
    }
    let count = read_u32(&bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() != expected {
        return Err(Error::DataFormat {
            offset: bytes.len().min(expected) as u64,
            reason: format!(
                "payload size mismatch: header declares {count} labels, file has {} bytes of data",
                bytes.len() - 8.min(bytes.len())
            ),
        });
    }
    bytes[8..]
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            if b > 9 {
                Err(Error::DataFormat {
                    offset: (8 + i) as u64,
                    reason: format!("label {b} out of range 0..=9"),
                })
            } else {
                Ok(b as usize)
            }
        })
        .collect()
}
