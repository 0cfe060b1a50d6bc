//! Deterministic run manifests.
//!
//! Every subcommand writes a `run.json` describing exactly what ran: tool
//! version, argv, the fully resolved configuration, and a digest of every
//! input and output. Manifests carry no timestamps or machine identity, so
//! repeating an invocation reproduces the manifest along with the outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::errors::{io_err, CliError};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let mut out = String::with_capacity(64);
    for b in h.finalize() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    /// Inputs keep the path as given on the command line; outputs are
    /// relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    /// Process arguments after the binary name, verbatim.
    pub argv: Vec<String>,
    /// Effective configuration after flag/file/environment/default merging.
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(subcommand: &'static str, config: serde_json::Value) -> Self {
        RunManifest {
            tool: "tracelens",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            argv: std::env::args().skip(1).collect(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Records an input exactly as it was read.
    pub fn record_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }

    /// Writes one output file under the run directory and records its
    /// digest. All outputs go through here so the manifest can never
    /// disagree with what landed on disk.
    pub fn write_output(
        &mut self,
        out_dir: &Path,
        name: &str,
        bytes: &[u8],
    ) -> Result<PathBuf, CliError> {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.outputs.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        println!("wrote {}", path.display());
        Ok(path)
    }

    /// Writes `run.json` itself; call after the last output.
    pub fn finish(self, out_dir: &Path) -> Result<(), CliError> {
        let mut json =
            serde_json::to_string_pretty(&self).expect("manifest serialization cannot fail");
        json.push('\n');
        let path = out_dir.join("run.json");
        std::fs::write(&path, json).map_err(|e| io_err(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }
}
