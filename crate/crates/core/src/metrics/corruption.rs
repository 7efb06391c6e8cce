//! The corruption-robustness table: classification error per
//! (kind, severity) cell plus their unweighted mean.

use super::{error_rate, MetricsError, Result};
use crate::data::{apply_corruption, CorruptionKind, CorruptionSpec, Dataset};
use crate::model::ModelState;
use serde::Serialize;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorruptionCell {
    pub kind: CorruptionKind,
    pub severity: u8,
    /// Error percentage on the corrupted split.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorruptionTable {
    /// Cells in canonical (kind, severity) order regardless of the order
    /// the caller listed them in.
    pub cells: Vec<CorruptionCell>,
    /// Unweighted arithmetic mean of all cell errors.
    pub mce: f64,
}

impl CorruptionTable {
    pub fn error_for(&self, kind: CorruptionKind, severity: u8) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.kind == kind && c.severity == severity)
            .map(|c| c.error)
    }

    /// Long-format CSV: `kind,severity,error_percent`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,severity,error_percent\n");
        for c in &self.cells {
            let _ = writeln!(out, "{},{},{}", c.kind.name(), c.severity, c.error);
        }
        out
    }
}

/// Evaluate `model` on every (kind, severity) corruption of `clean` and
/// average. Cells are computed and summed in canonical order, so the
/// result is independent of how `kinds`/`severities` are ordered.
pub fn mean_corruption_error(
    model: &ModelState,
    clean: &Dataset,
    kinds: &[CorruptionKind],
    severities: &[u8],
    seed: u64,
) -> Result<CorruptionTable> {
    if kinds.is_empty() {
        return Err(MetricsError::NoCorruptions);
    }
    if severities.is_empty() {
        return Err(MetricsError::Config("severity list is empty".into()));
    }
    let mut grid: Vec<(CorruptionKind, u8)> = Vec::new();
    for &kind in kinds {
        for &severity in severities {
            if !grid.contains(&(kind, severity)) {
                grid.push((kind, severity));
            }
        }
    }
    grid.sort();
    let mut cells = Vec::with_capacity(grid.len());
    for (kind, severity) in grid {
        let corrupted = apply_corruption(clean, CorruptionSpec::new(kind, severity), seed)?;
        let error = error_rate(model, &corrupted)?;
        cells.push(CorruptionCell {
            kind,
            severity,
            error,
        });
    }
    let mce = cells.iter().map(|c| c.error).sum::<f64>() / cells.len() as f64;
    Ok(CorruptionTable { cells, mce })
}
