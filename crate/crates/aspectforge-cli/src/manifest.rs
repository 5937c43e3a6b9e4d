//! Run manifests.
//!
//! Every command writes `manifest.json` into its output directory before
//! producing any artifact, then rewrites it at the end with the elapsed
//! time and the final artifact list. The manifest carries the fully
//! resolved configuration, so feeding it back via `--config` reproduces
//! the run.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use aspectforge::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    /// SHA-256 of the corpus file consumed, when there is one.
    pub corpus_sha256: Option<String>,
    /// Seed of each repetition, in run order.
    pub run_seeds: Vec<u64>,
    /// Paths relative to the output directory, in creation order.
    pub artifacts: Vec<String>,
    pub started_unix_ms: u64,
    pub elapsed_ms: Option<u64>,
}

#[derive(Debug)]
pub struct ManifestWriter {
    manifest: RunManifest,
    out_dir: PathBuf,
    started: Instant,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl ManifestWriter {
    /// Creates the output directory and writes the initial manifest.
    pub fn begin(config: &RunConfig, run_seeds: Vec<u64>) -> Result<Self> {
        let out_dir = config.out.clone();
        std::fs::create_dir_all(&out_dir)?;
        let corpus_sha256 = match &config.corpus {
            Some(path) => Some(file_sha256(path).map_err(|_| {
                aspectforge::Error::corpus(0, format!("cannot read corpus {}", path.display()))
            })?),
            None => None,
        };
        let manifest = RunManifest {
            tool: "aspectforge".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: config.command.clone(),
            config: config.clone(),
            corpus_sha256,
            run_seeds,
            artifacts: Vec::new(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            elapsed_ms: None,
        };
        let writer = ManifestWriter {
            manifest,
            out_dir,
            started: Instant::now(),
        };
        writer.write()?;
        Ok(writer)
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// Absolute path for a new artifact, recorded in the manifest.
    pub fn artifact(&mut self, relative: &str) -> PathBuf {
        self.manifest.artifacts.push(relative.to_string());
        self.out_dir.join(relative)
    }

    fn write(&self) -> Result<()> {
        let path = self.out_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    /// Rewrites the manifest with the elapsed time; call once all
    /// artifacts exist.
    pub fn finish(mut self) -> Result<()> {
        self.manifest.elapsed_ms = Some(self.started.elapsed().as_millis() as u64);
        self.write()
    }
}
