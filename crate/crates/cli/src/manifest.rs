//! Output bookkeeping: every file an experiment emits goes through
//! [`RunContext`], which confines writes to the output directory and
//! records them for the run manifest.

use crate::config::{ExperimentConfig, SeedSource};
use crate::{CliError, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::cell::RefCell;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const ARTIFACT_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+artifact.1");

/// Provenance record written at the end of every run.
///
/// The timestamps make manifests differ between reruns by design; all
/// *other* emitted files are byte-identical for identical resolved
/// configs, so reproducibility checks compare everything except this
/// file.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub artifact_version: String,
    /// SHA-256 of the emitted `config.resolved.json` bytes.
    pub config_hash: String,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub threads: usize,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    /// Every emitted file, relative to the output directory, sorted.
    pub files: Vec<String>,
}

pub struct RunContext {
    out_dir: PathBuf,
    files: RefCell<Vec<String>>,
    started_unix_ms: u128,
    config_hash: RefCell<String>,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl RunContext {
    pub fn new(out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
        Ok(RunContext {
            out_dir: out_dir.to_path_buf(),
            files: RefCell::new(Vec::new()),
            started_unix_ms: now_ms(),
            config_hash: RefCell::new(String::new()),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    fn prepared_path(&self, rel: &str) -> Result<PathBuf> {
        if rel.is_empty() || Path::new(rel).is_absolute() || rel.split('/').any(|c| c == "..") {
            return Err(CliError::Runtime(format!(
                "refusing to write outside the output directory: {rel}"
            )));
        }
        let path = self.out_dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", parent.display())))?;
        }
        Ok(path)
    }

    fn record(&self, rel: &str) {
        let mut files = self.files.borrow_mut();
        if !files.iter().any(|f| f == rel) {
            files.push(rel.to_string());
        }
    }

    pub fn write_text(&self, rel: &str, content: &str) -> Result<()> {
        let path = self.prepared_path(rel)?;
        fs::write(&path, content)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.record(rel);
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(rel, &text)
    }

    /// Echo the resolved config; its bytes feed the manifest's hash.
    pub fn write_resolved_config(&self, cfg: &ExperimentConfig) -> Result<()> {
        let mut text = serde_json::to_string_pretty(cfg)?;
        text.push('\n');
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        *self.config_hash.borrow_mut() = hex;
        self.write_text("config.resolved.json", &text)
    }

    /// Reserve a directory for a model checkpoint and record the two files
    /// the checkpoint writer emits there.
    pub fn checkpoint_dir(&self, rel: &str) -> Result<PathBuf> {
        let path = self.prepared_path(&format!("{rel}/manifest.json"))?;
        self.record(&format!("{rel}/manifest.json"));
        self.record(&format!("{rel}/weights.bin"));
        Ok(path.parent().expect("checkpoint path has a parent").to_path_buf())
    }

    /// Write `manifest.json` and finish the run.
    pub fn finish(self, seed: u64, seed_source: SeedSource, threads: usize) -> Result<Vec<String>> {
        self.record("manifest.json");
        let mut files = self.files.into_inner();
        files.sort();
        let manifest = RunManifest {
            artifact_version: ARTIFACT_VERSION.to_string(),
            config_hash: self.config_hash.into_inner(),
            seed,
            seed_source,
            threads,
            started_unix_ms: self.started_unix_ms,
            finished_unix_ms: now_ms(),
            files: files.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.out_dir.join("manifest.json");
        fs::write(&path, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(files)
    }
}

/// Small CSV assembly helper: rows of `Display` cells, one header line.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        let mut text = String::from(header);
        text.push('\n');
        Csv { text }
    }

    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        let mut first = true;
        for cell in cells {
            if !first {
                self.text.push(',');
            }
            self.text.push_str(&cell.to_string());
            first = false;
        }
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn writes_stay_inside_and_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = RunContext::new(dir.path()).unwrap();
        ctx.write_text("a.csv", "x\n1\n").unwrap();
        ctx.write_text("sub/b.json", "{}\n").unwrap();
        assert!(ctx.prepared_path("../escape.txt").is_err());
        assert!(ctx.prepared_path("/abs.txt").is_err());
        let files = ctx.finish(1, SeedSource::Config, 1).unwrap();
        assert_eq!(files, vec!["a.csv", "manifest.json", "sub/b.json"]);
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn manifest_hash_matches_resolved_config_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = RunContext::new(dir.path()).unwrap();
        let cfg = parse_config(r#"{"experiment": "shortcut", "output_dir": "x"}"#).unwrap();
        ctx.write_resolved_config(&cfg).unwrap();
        ctx.finish(0, SeedSource::Config, 4).unwrap();
        let bytes = fs::read(dir.path().join("config.resolved.json")).unwrap();
        let expected: String =
            Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest["config_hash"], expected.as_str());
        assert_eq!(manifest["seed_source"], "config");
    }
}
