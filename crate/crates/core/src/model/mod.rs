// SPDX-License-Identifier: MIT OR Apache-2.0

//! DistilBERT-shaped bi-encoder with hook sites for caching and patching.
//!
//! Block order is post-LayerNorm:
//!
//! ```text
//! x0        = LN_embed(token_emb + pos_emb)
//! attn_out  = Σ_h head_out_h + o.bias
//! resid_mid = LN1(resid_pre + attn_out)
//! mlp_out   = W2 · gelu(W1 · resid_mid + b1) + b2
//! resid_post= LN2(resid_mid + mlp_out)
//! ```
//!
//! The CLS vector is row 0 of the final `resid_post`. Patches overwrite rows
//! of a site right after the site's value is computed, before any consumer
//! reads it.

mod config;
mod container;
mod hooks;

use std::path::Path;

use thiserror::Error;

pub use config::{ModelConfig, Pooling, Similarity};
pub use container::{TensorEntry, WeightContainer, ALIGN, MAGIC, VERSION};
pub use hooks::{ActivationCache, HookKind, HookSite, Record};

use crate::tensor::{dot, gelu, layer_norm, softmax_rows, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("bad magic: not an AXIR container")]
    BadMagic,
    #[error("unsupported AXIR version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt container: {0}")]
    Corrupt(String),
    #[error("duplicate tensor {0}")]
    DuplicateTensor(String),
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("unexpected tensor {0}")]
    UnexpectedTensor(String),
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("sequence of {len} tokens exceeds max_positions {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {id} out of range for vocab_size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("empty token sequence")]
    EmptyInput,
    #[error("invalid hook site: {0}")]
    InvalidSite(String),
    #[error("patch at {site}: row width {found} does not match site width {expected}")]
    PatchWidth {
        site: String,
        expected: usize,
        found: usize,
    },
    #[error("patch at {site}: position {position} out of range for length {seq_len}")]
    PatchPosition {
        site: String,
        position: usize,
        seq_len: usize,
    },
    #[error("patch at {site}: donor has {donor} rows, recipient has {recipient}")]
    DonorLength {
        site: String,
        donor: usize,
        recipient: usize,
    },
    #[error("activation {0} was not recorded")]
    MissingActivation(String),
    #[error("score: vector widths differ ({left} vs {right})")]
    WidthMismatch { left: usize, right: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Rows of a site that a patch overwrites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Positions {
    All,
    Only(Vec<usize>),
}

/// Overwrite `positions` rows at `site` with the same rows of `donor`.
///
/// `donor` holds the full activation of the site for a sequence of the same
/// length as the recipient.
#[derive(Debug, Clone)]
pub struct Patch<'a> {
    pub site: HookSite,
    pub positions: Positions,
    pub donor: &'a Tensor,
}

impl<'a> Patch<'a> {
    pub fn new(site: HookSite, positions: Positions, donor: &'a Tensor) -> Self {
        Self {
            site,
            positions,
            donor,
        }
    }
}

struct LayerWeights {
    // per-head projections: [d_model × d_head] and [d_head]
    q: Vec<(Tensor, Tensor)>,
    k: Vec<(Tensor, Tensor)>,
    v: Vec<(Tensor, Tensor)>,
    // per-head slice of the output projection: [d_head × d_model]
    o: Vec<Tensor>,
    o_bias: Tensor,
    ln1: (Tensor, Tensor),
    w1: (Tensor, Tensor),
    w2: (Tensor, Tensor),
    ln2: (Tensor, Tensor),
}

/// Immutable model handle; share freely across threads.
pub struct Model {
    config: ModelConfig,
    token_embedding: Tensor,
    position_embedding: Tensor,
    embed_ln: (Tensor, Tensor),
    layers: Vec<LayerWeights>,
}

/// Result of a forward pass.
#[derive(Debug, Clone)]
pub struct Encoding {
    pub cls: Vec<f32>,
    pub cache: ActivationCache,
}

impl Model {
    pub fn load(config_path: &Path, weights_path: &Path) -> Result<Self, ModelError> {
        let config = ModelConfig::from_json_file(config_path)?;
        let weights = WeightContainer::read(weights_path)?;
        Self::from_parts(config, &weights)
    }

    /// Checks that `weights` holds exactly the tensors `config` implies.
    pub fn validate_weights(config: &ModelConfig, weights: &WeightContainer) -> Result<(), ModelError> {
        config.validate()?;
        let required = config.required_tensors();
        for (name, shape) in &required {
            let t = weights
                .get(name)
                .ok_or_else(|| ModelError::MissingTensor(name.clone()))?;
            if t.shape() != shape.as_slice() {
                return Err(ModelError::ShapeMismatch {
                    name: name.clone(),
                    expected: shape.clone(),
                    found: t.shape().to_vec(),
                });
            }
        }
        if let Some(extra) = weights
            .names()
            .find(|n| !required.iter().any(|(r, _)| r == n))
        {
            return Err(ModelError::UnexpectedTensor(extra.to_string()));
        }
        Ok(())
    }

    pub fn from_parts(config: ModelConfig, weights: &WeightContainer) -> Result<Self, ModelError> {
        Self::validate_weights(&config, weights)?;
        let get = |name: String| weights.get(&name).cloned().expect("validated");
        let dh = config.d_head;
        let split_cols = |w: &Tensor, b: &Tensor| -> Result<Vec<(Tensor, Tensor)>, ModelError> {
            (0..config.n_heads)
                .map(|h| {
                    let r = h * dh..(h + 1) * dh;
                    Ok((
                        w.slice_cols(r.clone())?,
                        Tensor::vector(b.data()[r].to_vec()),
                    ))
                })
                .collect()
        };
        let mut layers = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let p = |s: &str| get(format!("layer.{l}.{s}"));
            let o = p("attn.o.weight");
            layers.push(LayerWeights {
                q: split_cols(&p("attn.q.weight"), &p("attn.q.bias"))?,
                k: split_cols(&p("attn.k.weight"), &p("attn.k.bias"))?,
                v: split_cols(&p("attn.v.weight"), &p("attn.v.bias"))?,
                o: (0..config.n_heads)
                    .map(|h| o.slice_rows(h * dh..(h + 1) * dh))
                    .collect::<Result<_, _>>()?,
                o_bias: p("attn.o.bias"),
                ln1: (p("ln1.gamma"), p("ln1.beta")),
                w1: (p("mlp.w1.weight"), p("mlp.w1.bias")),
                w2: (p("mlp.w2.weight"), p("mlp.w2.bias")),
                ln2: (p("ln2.gamma"), p("ln2.beta")),
            });
        }
        Ok(Self {
            token_embedding: get("token_embedding".into()),
            position_embedding: get("position_embedding".into()),
            embed_ln: (get("embed_ln.gamma".into()), get("embed_ln.beta".into())),
            layers,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Full forward pass, keeping the sites selected by `record`.
    pub fn encode(&self, ids: &[u32], record: &Record) -> Result<Encoding, ModelError> {
        self.run(ids, None, record, &[])
    }

    /// Forward pass with `patches` applied; returns the patched CLS vector.
    pub fn encode_with_patches(&self, ids: &[u32], patches: &[Patch<'_>]) -> Result<Vec<f32>, ModelError> {
        Ok(self.run(ids, None, &Record::Nothing, patches)?.cls)
    }

    /// Same result as [`Model::encode_with_patches`], but resumes from the
    /// recipient's cached `ResidPre` at the earliest patched layer instead of
    /// recomputing the layers below it.
    ///
    /// `recipient` must come from an unpatched encode of `ids` that recorded
    /// `ResidPre` for that layer.
    pub fn encode_with_patches_from(
        &self,
        ids: &[u32],
        recipient: &ActivationCache,
        patches: &[Patch<'_>],
    ) -> Result<Vec<f32>, ModelError> {
        let Some(first) = patches.iter().map(|p| p.site.layer).min() else {
            return self.encode_with_patches(ids, patches);
        };
        if first >= self.config.n_layers {
            return Err(ModelError::InvalidSite(format!(
                "layer {first} out of range (n_layers = {})",
                self.config.n_layers
            )));
        }
        let start = recipient.require(&HookSite::resid_pre(first))?;
        if start.rows() != ids.len() {
            return Err(ModelError::DonorLength {
                site: HookSite::resid_pre(first).to_string(),
                donor: start.rows(),
                recipient: ids.len(),
            });
        }
        Ok(self
            .run(ids, Some((first, start.clone())), &Record::Nothing, patches)?
            .cls)
    }

    /// Query representation: the encoded CLS vector, or the configured
    /// probe unit vector.
    pub fn encode_query(&self, ids: &[u32]) -> Result<Vec<f32>, ModelError> {
        match self.config.query_probe {
            Some(r) => {
                let mut v = vec![0.0; self.config.d_model];
                v[r] = 1.0;
                Ok(v)
            }
            None => Ok(self.encode(ids, &Record::Nothing)?.cls),
        }
    }

    fn check_ids(&self, ids: &[u32]) -> Result<(), ModelError> {
        if ids.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        if ids.len() > self.config.max_positions {
            return Err(ModelError::SequenceTooLong {
                len: ids.len(),
                max: self.config.max_positions,
            });
        }
        if let Some(&id) = ids
            .iter()
            .find(|&&id| id as usize >= self.config.vocab_size)
        {
            return Err(ModelError::TokenOutOfRange {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    fn check_patches(&self, seq_len: usize, patches: &[Patch<'_>]) -> Result<(), ModelError> {
        for p in patches {
            p.site.validate(&self.config)?;
            let width = p.site.width(&self.config, seq_len);
            let name = || p.site.to_string();
            if p.donor.cols() != width {
                return Err(ModelError::PatchWidth {
                    site: name(),
                    expected: width,
                    found: p.donor.cols(),
                });
            }
            if p.donor.rows() != seq_len {
                return Err(ModelError::DonorLength {
                    site: name(),
                    donor: p.donor.rows(),
                    recipient: seq_len,
                });
            }
            if let Positions::Only(pos) = &p.positions {
                if let Some(&bad) = pos.iter().find(|&&i| i >= seq_len) {
                    return Err(ModelError::PatchPosition {
                        site: name(),
                        position: bad,
                        seq_len,
                    });
                }
            }
        }
        Ok(())
    }

    fn embed(&self, ids: &[u32]) -> Result<Tensor, ModelError> {
        let d = self.config.d_model;
        let mut x = Tensor::zeros(vec![ids.len(), d]);
        for (i, &id) in ids.iter().enumerate() {
            let tok = self.token_embedding.row(id as usize);
            let pos = self.position_embedding.row(i);
            for ((o, t), p) in x.row_mut(i).iter_mut().zip(tok).zip(pos) {
                *o = t + p;
            }
        }
        Ok(layer_norm(&x, &self.embed_ln.0, &self.embed_ln.1, self.config.ln_eps)?)
    }

    fn run(
        &self,
        ids: &[u32],
        start: Option<(usize, Tensor)>,
        record: &Record,
        patches: &[Patch<'_>],
    ) -> Result<Encoding, ModelError> {
        self.check_ids(ids)?;
        let seq = ids.len();
        self.check_patches(seq, patches)?;
        let mut hooks = Hooks {
            record,
            patches,
            cache: ActivationCache::new(seq),
        };
        let (first, mut x) = match start {
            Some((l, t)) => (l, t),
            None => (0, self.embed(ids)?),
        };
        let eps = self.config.ln_eps;
        let scale = 1.0 / (self.config.d_head as f32).sqrt();

        for (l, w) in self.layers.iter().enumerate().skip(first) {
            hooks.site(HookSite::resid_pre(l), &mut x);

            let mut attn = Tensor::zeros(vec![seq, self.config.d_model]);
            for h in 0..self.config.n_heads {
                let q = x.matmul(&w.q[h].0)?.add_bias_rows(&w.q[h].1)?;
                let k = x.matmul(&w.k[h].0)?.add_bias_rows(&w.k[h].1)?;
                let v = x.matmul(&w.v[h].0)?.add_bias_rows(&w.v[h].1)?;
                let scores = q.matmul(&k.transpose()?)?.scale(scale);
                let mut pattern = softmax_rows(&scores, None)?;
                hooks.site(HookSite::attn_pattern(l, h), &mut pattern);
                let mut head_out = pattern.matmul(&v)?.matmul(&w.o[h])?;
                hooks.site(HookSite::head_out(l, h), &mut head_out);
                attn.add_assign(&head_out)?;
            }
            let mut attn = attn.add_bias_rows(&w.o_bias)?;
            hooks.site(HookSite::new(HookKind::AttnOut, l), &mut attn);

            let mut mid = layer_norm(&x.add(&attn)?, &w.ln1.0, &w.ln1.1, eps)?;
            hooks.site(HookSite::new(HookKind::ResidMid, l), &mut mid);

            let hidden = gelu(&mid.matmul(&w.w1.0)?.add_bias_rows(&w.w1.1)?);
            let mut mlp = hidden.matmul(&w.w2.0)?.add_bias_rows(&w.w2.1)?;
            hooks.site(HookSite::new(HookKind::MlpOut, l), &mut mlp);

            x = layer_norm(&mid.add(&mlp)?, &w.ln2.0, &w.ln2.1, eps)?;
            hooks.site(HookSite::resid_post(l), &mut x);
        }

        Ok(Encoding {
            cls: x.row(0).to_vec(),
            cache: hooks.cache,
        })
    }
}

struct Hooks<'r, 'p> {
    record: &'r Record,
    patches: &'r [Patch<'p>],
    cache: ActivationCache,
}

impl Hooks<'_, '_> {
    fn site(&mut self, site: HookSite, value: &mut Tensor) {
        for p in self.patches.iter().filter(|p| p.site == site) {
            match &p.positions {
                Positions::All => value.data_mut().copy_from_slice(p.donor.data()),
                Positions::Only(rows) => {
                    for &i in rows {
                        value.row_mut(i).copy_from_slice(p.donor.row(i));
                    }
                }
            }
        }
        if self.record.contains(&site) {
            self.cache.insert(site, value.clone());
        }
    }
}

/// Ranking score: dot product of query and document vectors.
pub fn score(query: &[f32], doc: &[f32]) -> Result<f32, ModelError> {
    if query.len() != doc.len() {
        return Err(ModelError::WidthMismatch {
            left: query.len(),
            right: doc.len(),
        });
    }
    Ok(dot(query, doc))
}

#[cfg(test)]
pub(crate) fn config_tests_toy() -> ModelConfig {
    config::tests::toy()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_basics() {
        assert_eq!(score(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(score(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            score(&[1.0], &[1.0, 2.0]),
            Err(ModelError::WidthMismatch { left: 1, right: 2 })
        ));
    }
}
