//! Run manifests: every subcommand writes one into its output directory so a
//! run can be reproduced from the recorded command line, seed, resolved
//! configuration and input digests.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    /// The invoking command line, argv[0] first.
    pub command: Vec<String>,
    /// Seed governing any randomness of the run, when the command has one.
    pub seed: Option<u64>,
    /// Resolved configuration after defaults were applied.
    pub config: Value,
    /// SHA-256 over the canonical JSON form of `config`.
    pub config_hash: String,
    pub started_at: String,
    pub finished_at: String,
    /// Wall-clock duration of the command's core operation.
    pub elapsed_seconds: f64,
    /// SHA-256 digest per input file.
    pub inputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

pub struct ManifestBuilder {
    seed: Option<u64>,
    config: Value,
    started_at: String,
    clock: Instant,
    elapsed_override: Option<f64>,
    inputs: BTreeMap<String, String>,
    warnings: Vec<String>,
}

impl ManifestBuilder {
    pub fn start(config: Value) -> Self {
        Self {
            seed: None,
            config,
            started_at: now(),
            clock: Instant::now(),
            elapsed_override: None,
            inputs: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn input_file(&mut self, path: &Path) -> Result<()> {
        let bytes =
            fs::read(path).with_context(|| format!("digesting {}", path.display()))?;
        self.inputs.insert(
            path.display().to_string(),
            format!("sha256:{}", hex::encode(Sha256::digest(&bytes))),
        );
        Ok(())
    }

    pub fn warn(&mut self, message: String) {
        self.warnings.push(message);
    }

    /// Records the core-operation duration explicitly (defaults to the full
    /// run time otherwise).
    pub fn elapsed_seconds(&mut self, secs: f64) {
        self.elapsed_override = Some(secs);
    }

    /// Writes `manifest.json` atomically (write to a temp name, then rename).
    pub fn finish(self, out_dir: &Path) -> Result<RunManifest> {
        let canonical = serde_json::to_string(&self.config)?;
        let manifest = RunManifest {
            command: std::env::args().collect(),
            seed: self.seed,
            config: self.config,
            config_hash: format!("sha256:{}", hex::encode(Sha256::digest(canonical.as_bytes()))),
            started_at: self.started_at,
            finished_at: now(),
            elapsed_seconds: self
                .elapsed_override
                .unwrap_or_else(|| self.clock.elapsed().as_secs_f64()),
            inputs: self.inputs,
            warnings: self.warnings,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        let tmp = out_dir.join("manifest.json.tmp");
        let path = out_dir.join("manifest.json");
        fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &path).with_context(|| format!("renaming to {}", path.display()))?;
        Ok(manifest)
    }
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join("manifest.json");
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}
