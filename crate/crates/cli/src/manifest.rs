//! Run manifests written next to every artifact.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub subcommand: String,
    /// Every resolved setting, including those filled from env or config.
    pub flags: Value,
    pub tool_version: String,
    pub inputs: Vec<FileDigest>,
    /// SHA-256 over subcommand, flags, tool version and input digests.
    pub content_hash: String,
    pub outputs: Vec<FileDigest>,
    /// Caveats about the run that a reader of the outputs should know.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn file_digest(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex(&Sha256::digest(&bytes)),
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects inputs while a subcommand runs, then writes the manifest.
pub struct Recorder {
    subcommand: &'static str,
    flags: Value,
    inputs: Vec<PathBuf>,
    notes: Vec<String>,
    started: u64,
}

impl Recorder {
    pub fn start<T: Serialize>(subcommand: &'static str, flags: &T) -> Result<Self> {
        Ok(Self {
            subcommand,
            flags: serde_json::to_value(flags)?,
            inputs: Vec::new(),
            notes: Vec::new(),
            started: now_ms(),
        })
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn finish(self, outputs: &[&Path], manifest_path: &Path) -> Result<RunManifest> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| file_digest(p))
            .collect::<Result<Vec<_>>>()?;
        let tool_version = env!("CARGO_PKG_VERSION").to_string();
        let hashed = serde_json::json!({
            "subcommand": self.subcommand,
            "flags": self.flags,
            "tool_version": tool_version,
            "inputs": inputs,
        });
        let content_hash = hex(&Sha256::digest(serde_json::to_vec(&hashed)?));
        let manifest = RunManifest {
            manifest_version: MANIFEST_VERSION,
            subcommand: self.subcommand.into(),
            flags: self.flags,
            tool_version,
            inputs,
            content_hash,
            outputs: outputs.iter().map(|p| file_digest(p)).collect::<Result<_>>()?,
            notes: self.notes,
            started_unix_ms: self.started,
            finished_unix_ms: now_ms(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(manifest_path, text).with_context(|| format!("writing {}", manifest_path.display()))?;
        Ok(manifest)
    }
}

/// `traj.csv` gets `traj.csv.manifest.json` beside it.
pub fn sibling_manifest(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
