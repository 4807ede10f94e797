// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::AnalysisError;
use crate::patching::ResultMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
    Ascii,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Svg => "svg",
            ReportFormat::Ascii => "txt",
        }
    }

    pub fn render(self, m: &ResultMatrix) -> String {
        match self {
            ReportFormat::Csv => m.to_csv(),
            ReportFormat::Json => serde_json::to_string_pretty(m).expect("matrix serializes") + "\n",
            ReportFormat::Svg => m.to_svg(),
            ReportFormat::Ascii => m.to_ascii(),
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "svg" => Ok(ReportFormat::Svg),
            "ascii" => Ok(ReportFormat::Ascii),
            _ => Err(format!("unknown format {s:?} (csv, json, svg or ascii)")),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AnalysisError + '_ {
    move |source| AnalysisError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub(crate) fn write_file(path: &Path, contents: &[u8]) -> Result<(), AnalysisError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

/// Writes `{name}.csv`, `{name}.counts.csv` and `{name}.json` into `dir`.
pub fn write_matrix(dir: &Path, m: &ResultMatrix) -> Result<Vec<PathBuf>, AnalysisError> {
    let mut out = Vec::new();
    for (path, body) in [
        (dir.join(format!("{}.csv", m.name)), m.to_csv()),
        (dir.join(format!("{}.counts.csv", m.name)), m.counts_csv()),
        (dir.join(format!("{}.json", m.name)), ReportFormat::Json.render(m)),
    ] {
        write_file(&path, body.as_bytes())?;
        out.push(path);
    }
    Ok(out)
}

fn collect_json(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), AnalysisError> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            collect_json(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "json") {
            out.push(path);
        }
    }
    Ok(())
}

/// Renders every matrix JSON under `in_dir` (recursively) next to its
/// source in `format`. Other JSON files are ignored. Returns the written
/// paths, sorted.
pub fn emit_report(in_dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>, AnalysisError> {
    let mut files = Vec::new();
    collect_json(in_dir, &mut files)?;
    files.sort();
    let mut written = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f).map_err(io_err(&f))?;
        let Ok(m) = serde_json::from_str::<ResultMatrix>(&text) else {
            continue;
        };
        if m.values.is_empty() {
            continue;
        }
        let out = f.with_extension(format.extension());
        write_file(&out, format.render(&m).as_bytes())?;
        written.push(out);
    }
    if written.is_empty() {
        return Err(AnalysisError::Invalid(format!(
            "no result matrices found under {}",
            in_dir.display()
        )));
    }
    Ok(written)
}

/// Git-style content hash: SHA-256 of `"blob {len}\0"` followed by the bytes.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn hash_file(path: &Path) -> Result<String, AnalysisError> {
    Ok(git_blob_hash(&fs::read(path).map_err(io_err(path))?))
}

/// Run record written as `manifest.json` in every results directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub subcommand: String,
    /// Resolved configuration (file merged with flags).
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub dataset_hash: Option<String>,
    /// Input path → content hash.
    pub inputs: BTreeMap<String, String>,
    /// Output file name → content hash.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(experiment: &str, subcommand: &str, config: serde_json::Value) -> Self {
        Self {
            tool: "axir".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            experiment: experiment.into(),
            subcommand: subcommand.into(),
            config,
            seeds: BTreeMap::new(),
            dataset_hash: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<String, AnalysisError> {
        let h = hash_file(path)?;
        self.inputs.insert(path.display().to_string(), h.clone());
        Ok(h)
    }

    /// Hashes every file in `dir` except the manifest itself.
    pub fn record_outputs(&mut self, dir: &Path) -> Result<(), AnalysisError> {
        let mut files = Vec::new();
        collect_all(dir, dir, &mut files)?;
        for (rel, path) in files {
            if rel != "manifest.json" {
                self.outputs.insert(rel, hash_file(&path)?);
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, AnalysisError> {
        let path = dir.join("manifest.json");
        let body = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        write_file(&path, body.as_bytes())?;
        Ok(path)
    }
}

fn collect_all(root: &Path, dir: &Path, out: &mut Vec<(String, PathBuf)>) -> Result<(), AnalysisError> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            collect_all(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).unwrap_or(&path).to_string_lossy().replace('\\', "/");
            out.push((rel, path));
        }
    }
    Ok(())
}
