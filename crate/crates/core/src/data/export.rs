//! On-disk dataset snapshots: raw little-endian `f64` pixels plus a JSON
//! manifest describing the layout, so downstream tools can reload a split
//! byte-for-byte.

use super::{DataError, Dataset, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

const MANIFEST: &str = "manifest.json";
const IMAGES: &str = "images.bin";
const LABELS: &str = "labels.bin";

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    format_version: u32,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    num_labels: usize,
}

/// Write `images.bin` (f64 little-endian), `labels.bin` (u8) and
/// `manifest.json` into `dir`, creating it if needed.
pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let manifest = DatasetManifest {
        format_version: 1,
        n: ds.n,
        c: ds.c,
        h: ds.h,
        w: ds.w,
        num_labels: ds.labels.len(),
    };
    fs::write(
        dir.join(MANIFEST),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    let mut bytes = Vec::with_capacity(ds.images.len() * 8);
    for &v in &ds.images {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join(IMAGES), bytes)?;
    let labels: Vec<u8> = ds.labels.iter().map(|&l| l as u8).collect();
    fs::write(dir.join(LABELS), labels)?;
    Ok(())
}

/// Load a dataset previously written by [`save_dataset`], validating that
/// the binary payloads match the manifest's dimensions.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest: DatasetManifest =
        serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    if manifest.format_version != 1 {
        return Err(DataError::Manifest(format!(
            "unsupported dataset format_version {}",
            manifest.format_version
        )));
    }
    let image_bytes = fs::read(dir.join(IMAGES))?;
    let expected = manifest.n * manifest.c * manifest.h * manifest.w * 8;
    if image_bytes.len() != expected {
        return Err(DataError::Manifest(format!(
            "images.bin is {} bytes, manifest implies {expected}",
            image_bytes.len()
        )));
    }
    let label_bytes = fs::read(dir.join(LABELS))?;
    if label_bytes.len() != manifest.num_labels || manifest.num_labels != manifest.n {
        return Err(DataError::Manifest(format!(
            "labels.bin has {} entries, manifest implies {} for {} samples",
            label_bytes.len(),
            manifest.num_labels,
            manifest.n
        )));
    }
    let images = image_bytes
        .chunks_exact(8)
        .map(|chunk| f64::from_le_bytes(chunk.try_into().unwrap()))
        .collect();
    Ok(Dataset {
        n: manifest.n,
        c: manifest.c,
        h: manifest.h,
        w: manifest.w,
        images,
        labels: label_bytes.iter().map(|&b| b as usize).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn sample() -> Dataset {
        let mut rng = stream_rng(3, "export-test");
        Dataset {
            n: 5,
            c: 3,
            h: 4,
            w: 4,
            images: (0..5 * 3 * 16).map(|_| rng.random_range(0.0..1.0)).collect(),
            labels: vec![0, 1, 0, 1, 1],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn corrupted_payload_length_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&sample(), dir.path()).unwrap();
        let path = dir.path().join("images.bin");
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_dataset(dir.path()),
            Err(DataError::Manifest(_))
        ));
    }
}
