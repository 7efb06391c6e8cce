//! Checkpoint persistence: a JSON manifest describing the parameter layout
//! plus a flat little-endian 64-bit blob, written in canonical layer order.

use super::{build_model, ModelError, ModelSpec, ModelState, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

const FORMAT_VERSION: u32 = 1;
const MANIFEST_FILE: &str = "manifest.json";
const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    layer: usize,
    kind: String,
    /// Offset into the blob, counted in 64-bit values.
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    spec: ModelSpec,
    frozen: bool,
    /// Seed recorded for provenance; not used on load.
    seed: Option<u64>,
    entries: Vec<ParamEntry>,
    total_values: usize,
}

/// Write `manifest.json` + `weights.bin` under `dir` (created if absent).
pub fn save_checkpoint(model: &ModelState, dir: &Path, seed: Option<u64>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    let mut offset = 0usize;
    model.visit_values(|kind, layer, data| {
        entries.push(ParamEntry {
            layer,
            kind: kind.to_string(),
            offset,
            len: data.len(),
        });
        offset += data.len();
        for v in data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    });
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        spec: model.spec.clone(),
        frozen: model.is_frozen(),
        seed,
        entries,
        total_values: offset,
    };
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    fs::write(dir.join(WEIGHTS_FILE), blob)?;
    Ok(())
}

/// Load a checkpoint directory back into a [`ModelState`].
///
/// The manifest is validated against the structure implied by its own spec
/// (entry kinds, layer indices, lengths, offsets) and the blob length must
/// match exactly; mismatches report expected vs actual byte counts.
pub fn load_checkpoint(dir: &Path) -> Result<ModelState> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(ModelError::ManifestMismatch(format!(
            "unsupported format_version {}",
            manifest.format_version
        )));
    }
    // Rebuild the structural skeleton from the spec; values are overwritten
    // below, so the init seed is irrelevant.
    let mut model = build_model(&manifest.spec, 0)?;

    // The manifest's layout must agree with the spec-implied layout.
    let mut expected = Vec::new();
    let mut offset = 0usize;
    model.visit_values(|kind, layer, data| {
        expected.push((layer, kind.to_string(), offset, data.len()));
        offset += data.len();
    });
    if manifest.total_values != offset {
        return Err(ModelError::BlobLength {
            expected: 8 * offset as u64,
            actual: 8 * manifest.total_values as u64,
        });
    }
    if manifest.entries.len() != expected.len() {
        return Err(ModelError::ManifestMismatch(format!(
            "expected {} parameter entries, manifest lists {}",
            expected.len(),
            manifest.entries.len()
        )));
    }
    for (e, (layer, kind, off, len)) in manifest.entries.iter().zip(&expected) {
        if e.layer != *layer || e.kind != *kind || e.offset != *off || e.len != *len {
            return Err(ModelError::ManifestMismatch(format!(
                "entry for layer {} ({}) at offset {} len {} does not match \
                 spec-implied layer {} ({}) at offset {} len {}",
                e.layer, e.kind, e.offset, e.len, layer, kind, off, len
            )));
        }
    }

    let blob = fs::read(dir.join(WEIGHTS_FILE))?;
    let expected_bytes = 8 * offset as u64;
    if blob.len() as u64 != expected_bytes {
        return Err(ModelError::BlobLength {
            expected: expected_bytes,
            actual: blob.len() as u64,
        });
    }
    let mut cursor = 0usize;
    model.visit_values_mut(|_, _, data| {
        for v in data.iter_mut() {
            let mut bytes = [0u8; 8];
            bytes.copy_from_slice(&blob[cursor..cursor + 8]);
            *v = f64::from_le_bytes(bytes);
            cursor += 8;
        }
    });
    if manifest.frozen {
        model.freeze();
    }
    Ok(model)
}

impl ModelState {
    /// Mutable twin of [`ModelState::visit_values`], same canonical order.
    pub(crate) fn visit_values_mut<F: FnMut(&str, usize, &mut [f64])>(&mut self, mut visit: F) {
        use super::LayerParams;
        for (i, p) in self.params.iter_mut().enumerate() {
            match p {
                LayerParams::None => {}
                LayerParams::Conv { w, b } => {
                    visit("conv_w", i, w.data_mut());
                    visit("conv_b", i, b.data_mut());
                }
                LayerParams::Dense { w, b } => {
                    visit("dense_w", i, w.data_mut());
                    visit("dense_b", i, b.data_mut());
                }
                LayerParams::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => {
                    visit("bn_gamma", i, gamma.data_mut());
                    visit("bn_beta", i, beta.data_mut());
                    visit("bn_running_mean", i, running_mean);
                    visit("bn_running_var", i, running_var);
                }
            }
        }
    }
}
