//! Reproducibility record written next to every command's outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub role: String,
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: BTreeMap<String, toml::Value>,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn base_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    out_dir: PathBuf,
}

impl ManifestBuilder {
    /// Only the configuration sections in `sections` are recorded.
    pub fn new(command: &'static str, config: &Config, sections: &[&str], out_dir: &Path) -> Self {
        let mut snapshot = BTreeMap::new();
        for s in sections {
            snapshot.extend(config.section(s));
        }
        Self {
            manifest: RunManifest {
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                command,
                config: snapshot,
                seeds: Vec::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn seeds(&mut self, seeds: &[u64]) {
        self.manifest.seeds = seeds.to_vec();
    }

    /// Inputs are recorded by role and file name so the record does not
    /// depend on where the files live.
    pub fn input(&mut self, role: impl Into<String>, path: &Path) -> CliResult<()> {
        self.manifest.inputs.push(FileDigest {
            role: role.into(),
            name: base_name(path),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn output(&mut self, name: &str) -> CliResult<()> {
        let digest = sha256_file(&self.out_dir.join(name))?;
        self.manifest.outputs.push(FileDigest {
            role: "output".into(),
            name: name.to_string(),
            sha256: digest,
        });
        Ok(())
    }

    pub fn write(self) -> CliResult<PathBuf> {
        let path = self
            .out_dir
            .join(format!("{}.manifest.json", self.manifest.command));
        let mut text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| CliError::Usage(format!("manifest serialisation failed: {e}")))?;
        text.push('\n');
        fs::write(&path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}
