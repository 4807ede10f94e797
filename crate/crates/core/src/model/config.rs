// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::tokenizer::TokenizerMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Cls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[default]
    Dot,
}

/// Architecture hyperparameters of a DistilBERT-shaped encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub ln_eps: f32,
    #[serde(default)]
    pub pooling: Pooling,
    #[serde(default)]
    pub similarity: Similarity,
    /// When set, queries are represented by the unit vector on this
    /// coordinate instead of being encoded. Used by constructed models whose
    /// document encoder exposes relevance on a single coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_probe: Option<usize>,
    #[serde(default)]
    pub tokenizer: TokenizerMode,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        for (name, v) in [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_head", self.d_head),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_positions", self.max_positions),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.n_heads * self.d_head != self.d_model {
            return bad(format!(
                "d_model {} != n_heads {} * d_head {}",
                self.d_model, self.n_heads, self.d_head
            ));
        }
        if !(self.ln_eps > 0.0) {
            return bad(format!("ln_eps must be positive, got {}", self.ln_eps));
        }
        if let Some(r) = self.query_probe {
            if r >= self.d_model {
                return bad(format!("query_probe {r} outside d_model {}", self.d_model));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let cfg: ModelConfig = serde_json::from_str(&text)
            .map_err(|e| ModelError::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every tensor name the forward pass reads, paired with its shape.
    pub fn required_tensors(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model;
        let mut out = vec![
            ("token_embedding".to_string(), vec![self.vocab_size, d]),
            ("position_embedding".to_string(), vec![self.max_positions, d]),
            ("embed_ln.gamma".to_string(), vec![d]),
            ("embed_ln.beta".to_string(), vec![d]),
        ];
        for l in 0..self.n_layers {
            for p in ["q", "k", "v", "o"] {
                out.push((format!("layer.{l}.attn.{p}.weight"), vec![d, d]));
                out.push((format!("layer.{l}.attn.{p}.bias"), vec![d]));
            }
            out.push((format!("layer.{l}.ln1.gamma"), vec![d]));
            out.push((format!("layer.{l}.ln1.beta"), vec![d]));
            out.push((format!("layer.{l}.mlp.w1.weight"), vec![d, self.d_ff]));
            out.push((format!("layer.{l}.mlp.w1.bias"), vec![self.d_ff]));
            out.push((format!("layer.{l}.mlp.w2.weight"), vec![self.d_ff, d]));
            out.push((format!("layer.{l}.mlp.w2.bias"), vec![d]));
            out.push((format!("layer.{l}.ln2.gamma"), vec![d]));
            out.push((format!("layer.{l}.ln2.beta"), vec![d]));
        }
        out
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn toy() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 16,
            d_head: 8,
            d_ff: 32,
            vocab_size: 30,
            max_positions: 24,
            ln_eps: 1e-12,
            pooling: Pooling::Cls,
            similarity: Similarity::Dot,
            query_probe: None,
            tokenizer: TokenizerMode::WordPiece,
        }
    }

    #[test]
    fn head_product_must_match() {
        let mut c = toy();
        assert!(c.validate().is_ok());
        c.d_head = 5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn required_names_cover_layers() {
        let names = toy().required_tensors();
        assert_eq!(names.len(), 4 + 2 * 16);
        assert!(names.iter().any(|(n, _)| n == "layer.1.mlp.w2.bias"));
    }

    #[test]
    fn json_roundtrip_defaults() {
        let text = r#"{"n_layers":6,"n_heads":12,"d_model":768,"d_head":64,"d_ff":3072,
            "vocab_size":30522,"max_positions":512,"ln_eps":1e-12}"#;
        let c: ModelConfig = serde_json::from_str(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.pooling, Pooling::Cls);
        assert_eq!(c.similarity, Similarity::Dot);
        assert_eq!(c.tokenizer, TokenizerMode::WordPiece);
    }
}
