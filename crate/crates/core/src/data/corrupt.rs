//! Parametric image corruptions at five severities, used by the
//! robustness benchmark. Every corruption draws from a stream keyed by
//! `(kind, severity)` so each cell of the benchmark grid is reproducible
//! in isolation, and every result is clamped back to `[0, 1]`.

use super::{DataError, Dataset, Result};
use crate::rng::stream_rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Additive Gaussian noise scale per severity unit.
const GAUSSIAN_STEP: f64 = 0.05;
/// Fraction of spatial positions hit by impulse noise per severity unit.
const IMPULSE_STEP: f64 = 0.02;
/// Contrast shrink factor per severity unit.
const CONTRAST_STEP: f64 = 0.15;
/// Occluder value (mid-gray).
const OCCLUSION_VALUE: f64 = 0.5;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    GaussianNoise,
    ImpulseNoise,
    BoxBlur,
    Occlusion,
    Contrast,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 5] = [
        CorruptionKind::GaussianNoise,
        CorruptionKind::ImpulseNoise,
        CorruptionKind::BoxBlur,
        CorruptionKind::Occlusion,
        CorruptionKind::Contrast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::ImpulseNoise => "impulse_noise",
            CorruptionKind::BoxBlur => "box_blur",
            CorruptionKind::Occlusion => "occlusion",
            CorruptionKind::Contrast => "contrast",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    /// Severity level, `1..=5`.
    pub severity: u8,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u8) -> Self {
        Self { kind, severity }
    }

    /// The full benchmark grid: every kind at every severity.
    pub fn grid() -> Vec<CorruptionSpec> {
        let mut out = Vec::with_capacity(25);
        for kind in CorruptionKind::ALL {
            for severity in 1..=5 {
                out.push(CorruptionSpec { kind, severity });
            }
        }
        out
    }
}

/// Apply one corruption to every image of a dataset. Labels are copied
/// unchanged; the input dataset is not modified.
pub fn apply_corruption(ds: &Dataset, spec: CorruptionSpec, seed: u64) -> Result<Dataset> {
    if !(1..=5).contains(&spec.severity) {
        return Err(DataError::Config(format!(
            "corruption severity must be in 1..=5, got {}",
            spec.severity
        )));
    }
    let s = f64::from(spec.severity);
    let mut rng = stream_rng(seed, &format!("corrupt/{}/{}", spec.kind.name(), spec.severity));
    let (c, h, w) = (ds.c, ds.h, ds.w);
    let mut images = ds.images.clone();
    match spec.kind {
        CorruptionKind::GaussianNoise => {
            let sigma = GAUSSIAN_STEP * s;
            for v in &mut images {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += sigma * z;
            }
        }
        CorruptionKind::ImpulseNoise => {
            let hits = (IMPULSE_STEP * s * (h * w) as f64).floor() as usize;
            let hits = hits.min(h * w);
            for i in 0..ds.n {
                // Partial Fisher-Yates: the first `hits` entries become a
                // uniform sample of distinct spatial positions.
                let mut positions: Vec<usize> = (0..h * w).collect();
                for j in 0..hits {
                    let k = rng.random_range(j..h * w);
                    positions.swap(j, k);
                    let value = if rng.random::<bool>() { 1.0 } else { 0.0 };
                    let base = i * c * h * w;
                    for ch in 0..c {
                        images[base + ch * h * w + positions[j]] = value;
                    }
                }
            }
        }
        CorruptionKind::BoxBlur => {
            let k = (2 * spec.severity as usize - 1).min(h.min(w));
            let rad = k / 2;
            let mut out = images.clone();
            for i in 0..ds.n {
                for ch in 0..c {
                    let plane = i * c * h * w + ch * h * w;
                    for r in 0..h {
                        let r0 = r.saturating_sub(rad);
                        let r1 = (r + rad).min(h - 1);
                        for col in 0..w {
                            let c0 = col.saturating_sub(rad);
                            let c1 = (col + rad).min(w - 1);
                            let mut acc = 0.0;
                            for rr in r0..=r1 {
                                for cc in c0..=c1 {
                                    acc += images[plane + rr * w + cc];
                                }
                            }
                            // Normalize by the clipped window size so a
                            // constant image stays constant at the edges.
                            let count = ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64;
                            out[plane + r * w + col] = acc / count;
                        }
                    }
                }
            }
            images = out;
        }
        CorruptionKind::Occlusion => {
            let side = (2 + 2 * spec.severity as usize).min(h.min(w));
            for i in 0..ds.n {
                let top = rng.random_range(0..=h - side);
                let left = rng.random_range(0..=w - side);
                let base = i * c * h * w;
                for ch in 0..c {
                    for r in top..top + side {
                        for col in left..left + side {
                            images[base + ch * h * w + r * w + col] = OCCLUSION_VALUE;
                        }
                    }
                }
            }
        }
        CorruptionKind::Contrast => {
            let factor = 1.0 - CONTRAST_STEP * s;
            for v in &mut images {
                *v = (*v - 0.5) * factor + 0.5;
            }
        }
    }
    for v in &mut images {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(Dataset {
        n: ds.n,
        c,
        h,
        w,
        images,
        labels: ds.labels.clone(),
    })
}
