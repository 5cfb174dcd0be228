//! JSON run log written next to every output.

use std::path::{Path, PathBuf};
use std::time::Instant;

use memsig::signature::SignatureMeta;
use memsig::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(FileDigest { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub subcommand: String,
    /// Command line after the program name; `replay` re-parses it.
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Symbol-set config of the written signature or model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbols: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<SignatureMeta>,
    #[serde(default)]
    pub results: serde_json::Value,
    pub timings: Timings,
}

/// Collects a manifest while a subcommand runs.
pub struct Recorder {
    manifest: RunManifest,
    started: Instant,
}

impl Recorder {
    pub fn new(subcommand: &str, args: &[String], config: &impl Serialize, seed: Option<u64>) -> Self {
        Recorder {
            manifest: RunManifest {
                tool: format!("memsig {}", env!("CARGO_PKG_VERSION")),
                subcommand: subcommand.to_string(),
                args: args.to_vec(),
                config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
                seed,
                inputs: Vec::new(),
                outputs: Vec::new(),
                symbols: None,
                signature: None,
                results: serde_json::Value::Null,
                timings: Timings { total_seconds: 0.0 },
            },
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.manifest.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn symbols(&mut self, config: String) {
        self.manifest.symbols = Some(config);
    }

    pub fn signature(&mut self, meta: SignatureMeta) {
        self.manifest.signature = Some(meta);
    }

    pub fn results(&mut self, value: serde_json::Value) {
        self.manifest.results = value;
    }

    /// Writes the manifest beside `output` and returns its path.
    pub fn finish(mut self, output: &Path) -> Result<PathBuf> {
        self.manifest.timings.total_seconds = self.started.elapsed().as_secs_f64();
        let path = manifest_path(output);
        let text = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::Parse(format!("manifest: {e}")))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// `<dir>/manifest.json` for directories, `<file>.manifest.json` otherwise.
pub fn manifest_path(output: &Path) -> PathBuf {
    if output.is_dir() {
        output.join("manifest.json")
    } else {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        output.with_file_name(name)
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// The manifest written beside `output`, if there is one.
pub fn sidecar(output: &Path) -> Option<RunManifest> {
    let path = manifest_path(output);
    path.exists().then(|| read_manifest(&path).ok()).flatten()
}
