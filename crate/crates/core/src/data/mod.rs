//! Synthetic shortcut-feature data, IDX ingestion, and the corruption
//! suite. Everything is generated from named seed streams and is bit-
//! reproducible.

mod corrupt;
mod export;
pub mod glyphs;
mod idx;
mod shortcut;

pub use corrupt::{apply_corruption, CorruptionKind, CorruptionSpec};
pub use export::{load_dataset, save_dataset};
pub use idx::{load_idx_images, load_idx_labels};
pub use shortcut::{generate_shortcut_dataset, ShortcutData, ShortcutDatasetConfig, Source,
    SplitName};

use crate::tensor::Tensor;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset config: {0}")]
    Config(String),
    #[error("{path}: bad IDX magic: expected 0x{expected:08x}, found 0x{found:08x}")]
    IdxMagic {
        path: String,
        expected: u32,
        found: u32,
    },
    #[error("{path}: IDX payload truncated: expected {expected} bytes, found {actual}")]
    IdxTruncated {
        path: String,
        expected: u64,
        actual: u64,
    },
    #[error("label {value} out of range at index {index} (digits are 0-9)")]
    LabelOutOfRange { index: usize, value: u8 },
    #[error("class {class} has only {have} samples, need {need}")]
    NotEnoughSamples { class: u8, have: usize, need: usize },
    #[error("dataset manifest inconsistent: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("dataset manifest parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// A labeled image set with a fixed `[n, c, h, w]` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    /// Row-major `[n, c, h, w]` pixels in `[0, 1]`.
    pub images: Vec<f64>,
    /// Class indices, one per sample.
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let s = self.sample_len();
        &self.images[i * s..(i + 1) * s]
    }

    /// Pack the listed samples into a `[b, c, h, w]` batch tensor.
    pub fn batch_tensor(&self, indices: &[usize]) -> Tensor {
        let s = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * s);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        Tensor::new(vec![indices.len(), self.c, self.h, self.w], data)
            .expect("batch shape consistent by construction")
    }

    pub fn batch_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Pack the listed samples into a batch shaped `[b, ...input_shape]`
    /// for a model whose per-sample input is `input_shape`. The stored
    /// `[c, h, w]` layout is reinterpreted (e.g. flattened for a vector
    /// model) when the element counts agree.
    pub fn batch_for(&self, input_shape: &[usize], indices: &[usize]) -> Result<Tensor> {
        if input_shape.iter().product::<usize>() != self.sample_len() {
            return Err(DataError::Config(format!(
                "dataset samples [{}, {}, {}] do not fit model input {input_shape:?}",
                self.c, self.h, self.w
            )));
        }
        let t = self.batch_tensor(indices);
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(input_shape);
        Ok(Tensor::new(shape, t.into_data()).expect("element count checked above"))
    }

    /// The whole split as one batch.
    pub fn full_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.n, self.c, self.h, self.w],
            self.images.clone(),
        )
        .expect("dataset invariant: images.len() == n*c*h*w")
    }
}
