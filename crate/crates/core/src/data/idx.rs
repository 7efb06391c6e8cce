//! Readers for the big-endian IDX format used by the classic digit
//! datasets: magic `0x00000803` for u8 image tensors, `0x00000801` for u8
//! label vectors.

use super::{DataError, Result};
use std::fs;
use std::path::Path;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn check_len(path: &Path, bytes: &[u8], expected: usize) -> Result<()> {
    if bytes.len() != expected {
        return Err(DataError::IdxTruncated {
            path: path.display().to_string(),
            expected: expected as u64,
            actual: bytes.len() as u64,
        });
    }
    Ok(())
}

/// Load an IDX image file. Pixels are scaled from `0..=255` to `[0, 1]`.
/// Returns `(pixels, count, height, width)` with pixels in row-major
/// `[count, height, width]` order.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<(Vec<f64>, usize, usize, usize)> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.len() < 16 {
        return Err(DataError::IdxTruncated {
            path: path.display().to_string(),
            expected: 16,
            actual: bytes.len() as u64,
        });
    }
    let magic = read_u32(&bytes, 0);
    if magic != IMAGE_MAGIC {
        return Err(DataError::IdxMagic {
            path: path.display().to_string(),
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let n = read_u32(&bytes, 4) as usize;
    let h = read_u32(&bytes, 8) as usize;
    let w = read_u32(&bytes, 12) as usize;
    check_len(path, &bytes, 16 + n * h * w)?;
    let pixels = bytes[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok((pixels, n, h, w))
}

/// Load an IDX label file. Every label must be a digit `0..=9`.
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.len() < 8 {
        return Err(DataError::IdxTruncated {
            path: path.display().to_string(),
            expected: 8,
            actual: bytes.len() as u64,
        });
    }
    let magic = read_u32(&bytes, 0);
    if magic != LABEL_MAGIC {
        return Err(DataError::IdxMagic {
            path: path.display().to_string(),
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let n = read_u32(&bytes, 4) as usize;
    check_len(path, &bytes, 8 + n)?;
    let labels = bytes[8..].to_vec();
    for (index, &value) in labels.iter().enumerate() {
        if value > 9 {
            return Err(DataError::LabelOutOfRange { index, value });
        }
    }
    Ok(labels)
}
