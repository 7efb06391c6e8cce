//! `report` subcommand: flatten a JSON results file into an aligned
//! two-column table.

use crate::{CliError, Result};
use serde_json::Value;
use std::path::Path;

fn flatten(prefix: &str, value: &Value, rows: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, rows);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), v, rows);
            }
        }
        leaf => rows.push((prefix.to_string(), leaf.to_string())),
    }
}

/// Render a JSON report as `key  value` lines with aligned columns.
pub fn render_report(json_text: &str) -> Result<String> {
    let value: Value = serde_json::from_str(json_text)
        .map_err(|e| CliError::Runtime(format!("not a JSON report: {e}")))?;
    let mut rows = Vec::new();
    flatten("", &value, &mut rows);
    if rows.is_empty() {
        return Ok(String::from("(empty report)\n"));
    }
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        out.push_str(&format!("{k:<width$}  {v}\n"));
    }
    Ok(out)
}

pub fn report_file(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    render_report(&text)
}
