//! Artifact directories and their checksummed manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::spec::ExperimentSpec;

pub const CODE_VERSION: &str = concat!("perc ", env!("CARGO_PKG_VERSION"));
pub const MANIFEST: &str = "manifest.json";

/// One data file written by an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    /// Table name under which `report` merges the file, for CSV curves.
    pub table: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub kind: String,
    pub size: Option<i32>,
    pub seed: u64,
    pub spec: ExperimentSpec,
    pub threads: usize,
    /// Seconds spent per stage.
    pub wall_times: BTreeMap<String, f64>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Manifest, CliError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))
    }

    /// Files whose content no longer matches the recorded checksum.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>, CliError> {
        let mut bad = Vec::new();
        for f in &self.files {
            let bytes = fs::read(dir.join(&f.path))?;
            if sha256_hex(&bytes) != f.sha256 {
                bad.push(f.path.clone());
            }
        }
        Ok(bad)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects the files of one run and times its stages.
pub struct ArtifactDir {
    root: PathBuf,
    files: Vec<FileEntry>,
    wall_times: BTreeMap<String, f64>,
}

impl ArtifactDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(ArtifactDir { root: root.to_path_buf(), files: Vec::new(), wall_times: BTreeMap::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, table: Option<&str>, bytes: &[u8]) -> Result<(), CliError> {
        if self.files.iter().any(|f| f.path == name) {
            return Err(CliError::Runtime(format!("artifact {name} written twice")));
        }
        fs::write(self.root.join(name), bytes)?;
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
            table: table.map(str::to_string),
        });
        Ok(())
    }

    /// Writes the bytes produced by `f`.
    pub fn write_with(
        &mut self,
        name: &str,
        table: Option<&str>,
        f: impl FnOnce(&mut Vec<u8>) -> perc_core::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, table, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, None, text.as_bytes())
    }

    /// Runs `f` and records its wall time under `stage`.
    pub fn stage<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T, CliError>) -> Result<T, CliError> {
        let start = Instant::now();
        let out = f(self)?;
        *self.wall_times.entry(stage.to_string()).or_default() += start.elapsed().as_secs_f64();
        Ok(out)
    }

    /// Writes the manifest and returns it.
    pub fn finish(self, kind: &str, size: Option<i32>, spec: &ExperimentSpec, threads: usize) -> Result<Manifest, CliError> {
        let mut files = self.files;
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let m = Manifest {
            code_version: CODE_VERSION.to_string(),
            kind: kind.to_string(),
            size,
            seed: spec.seed,
            spec: spec.clone(),
            threads,
            wall_times: self.wall_times,
            files,
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        fs::write(self.root.join(MANIFEST), text)?;
        Ok(m)
    }
}
