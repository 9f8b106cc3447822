//! Output-directory management: single-instance lock, artifact writing
//! with content hashes, FAILED markers and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::CliError;

/// Holds the output directory lock for the lifetime of a run.
pub struct OutputDir {
    pub root: PathBuf,
    lock_path: PathBuf,
    artifacts: BTreeMap<String, String>,
}

impl OutputDir {
    /// Create (or reuse) the directory and take its lock file; a second
    /// instance on the same directory fails.
    pub fn acquire(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        let lock_path = root.join(".lock");
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock_path)
        {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(CliError::Config(format!(
                    "output directory `{}` is locked by another run (remove {} if stale)",
                    root.display(),
                    lock_path.display()
                )));
            }
            Err(e) => return Err(e.into()),
        }
        // a fresh run clears any failure marker from a previous one
        let _ = fs::remove_file(root.join("FAILED"));
        Ok(Self {
            root: root.to_path_buf(),
            lock_path,
            artifacts: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        let mut hasher = Sha256::new();
        hasher.update(contents.as_bytes());
        self.artifacts
            .insert(name.to_string(), hex::encode(hasher.finalize()));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Record a failure: error JSON into FAILED, artifacts retained.
    pub fn mark_failed(&self, error: &CliError) {
        let _ = fs::write(self.root.join("FAILED"), error.to_json());
    }

    /// Write the manifest: tool version, resolved config, config hash and
    /// per-artifact content hashes. Contains everything needed to re-run
    /// bit-identically; deliberately carries no timestamps.
    pub fn write_manifest(&mut self, config: &PipelineConfig) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            tool: &'static str,
            version: &'static str,
            config_sha256: String,
            config: &'a PipelineConfig,
            artifacts: &'a BTreeMap<String, String>,
        }
        let config_json = serde_json::to_string(config)?;
        let mut hasher = Sha256::new();
        hasher.update(config_json.as_bytes());
        let manifest = Manifest {
            tool: "registrial",
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: hex::encode(hasher.finalize()),
            config,
            artifacts: &self.artifacts,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = self.root.join("manifest.json");
        fs::write(path, text)?;
        Ok(())
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock_path);
    }
}
