// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment configuration: a JSON file merged with command-line flags.
//! Flags win; the merged result is what manifests record.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Every setting a subcommand can take. Unset fields fall back to the
/// subcommand's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    /// Directory holding `config.json`, `model.axir` and `vocab.txt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queries: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_docs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_queries: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injections: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filler: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub docs_per_query: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tf_min: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tf_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_words: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<String>,
    /// `type`, `position` or `site`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub granularity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_patch: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_contradictions: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance_split: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heads: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation_mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cohort_split: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_token_attention: Option<bool>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub term: Option<String>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    /// `self` with every field set in `flags` replaced.
    pub fn overlay(&self, flags: &ExperimentConfig) -> ExperimentConfig {
        let mut base = serde_json::to_value(self).expect("config serializes");
        let top = serde_json::to_value(flags).expect("config serializes");
        if let (Some(b), serde_json::Value::Object(t)) = (base.as_object_mut(), top) {
            for (k, v) in t {
                b.insert(k, v);
            }
        }
        serde_json::from_value(base).expect("merged config deserializes")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn require<'a, T>(&self, field: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        field
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("missing --{} (flag or config field {name:?})", name.replace('_', "-"))))
    }
}
