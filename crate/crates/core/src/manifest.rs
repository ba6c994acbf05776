//! Run manifests: the parameters, seeds and inputs of one pipeline stage.
//!
//! [`RunManifest::provenance`] is stable across reruns and is stamped into
//! every artifact. File paths, wall-clock timings and the creation stamp
//! only appear in the `.manifest` sidecar text, so artifacts produced in
//! different directories or at different times carry identical metadata.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::coeffio::{created_stamp, Metadata};
use crate::error::Result;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub command: String,
    pub params: Metadata,
    pub paths: Metadata,
    /// Provenance of input artifacts, keyed `input.<name>.<key>`.
    pub inputs: Metadata,
    pub stages: Vec<(String, f64)>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        RunManifest {
            command: command.into(),
            ..Default::default()
        }
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    pub fn set_path(&mut self, key: impl Into<String>, path: &Path) -> &mut Self {
        self.paths.insert(key.into(), path.display().to_string());
        self
    }

    /// Record an input artifact's provenance. Keys that are themselves
    /// input records or volatile are skipped.
    pub fn add_input(&mut self, name: &str, md: &Metadata) {
        for (k, v) in md {
            if k == "created" || k.starts_with("input.") {
                continue;
            }
            self.inputs.insert(format!("input.{name}.{k}"), v.clone());
        }
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.stages.push((stage.to_string(), t.elapsed().as_secs_f64()));
        out
    }

    pub fn add_digest(&mut self, name: &str, digest: String) {
        self.inputs.insert(format!("input.{name}.digest"), digest);
    }

    /// SHA-256 over the command, sorted parameters and input provenance.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.command.as_bytes());
        h.update(b"\n");
        for (k, v) in self.params.iter().chain(&self.inputs) {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn provenance(&self) -> Metadata {
        let mut md = Metadata::new();
        md.insert("command".into(), self.command.clone());
        md.insert("config_hash".into(), self.config_hash());
        md.insert("tool_version".into(), TOOL_VERSION.into());
        for (k, v) in &self.params {
            md.insert(format!("param.{k}"), v.clone());
        }
        md.extend(self.inputs.clone());
        md
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut all = self.provenance();
        for (k, v) in &self.paths {
            all.insert(format!("path.{k}"), v.clone());
        }
        all.insert("created".into(), created_stamp());
        for (k, v) in &all {
            let _ = writeln!(s, "{k}={v}");
        }
        for (stage, secs) in &self.stages {
            let _ = writeln!(s, "wall_clock.{stage}={secs:.6}");
        }
        s
    }

    /// Write `<artifact>.manifest` next to the artifact.
    pub fn write_beside(&self, artifact: impl AsRef<Path>) -> Result<PathBuf> {
        let p = sidecar_path(artifact.as_ref());
        fs::write(&p, self.to_text())?;
        Ok(p)
    }
}

/// SHA-256 of an `rows x cols` payload of little-endian f64 values.
pub fn digest_values(rows: usize, cols: usize, values: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update((rows as u64).to_le_bytes());
    h.update((cols as u64).to_le_bytes());
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}
