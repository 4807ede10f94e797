// SPDX-License-Identifier: MIT OR Apache-2.0

//! Addressable activation sites and the cache a forward pass fills.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HookKind {
    /// Residual stream entering a layer.
    ResidPre,
    /// Output of the post-attention LayerNorm.
    ResidMid,
    /// Output of the post-MLP LayerNorm; the next layer's `ResidPre`.
    ResidPost,
    /// Summed attention output including the output-projection bias.
    AttnOut,
    /// One head's additive contribution after the output projection.
    HeadOut,
    MlpOut,
    /// Post-softmax attention probabilities of one head, `[seq × seq]`.
    AttnPattern,
}

impl HookKind {
    pub const ALL: [HookKind; 7] = [
        HookKind::ResidPre,
        HookKind::ResidMid,
        HookKind::ResidPost,
        HookKind::AttnOut,
        HookKind::HeadOut,
        HookKind::MlpOut,
        HookKind::AttnPattern,
    ];

    pub fn per_head(self) -> bool {
        matches!(self, HookKind::HeadOut | HookKind::AttnPattern)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HookKind::ResidPre => "resid_pre",
            HookKind::ResidMid => "resid_mid",
            HookKind::ResidPost => "resid_post",
            HookKind::AttnOut => "attn_out",
            HookKind::HeadOut => "head_out",
            HookKind::MlpOut => "mlp_out",
            HookKind::AttnPattern => "attn_pattern",
        }
    }
}

impl FromStr for HookKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.replace('-', "_");
        HookKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| ModelError::InvalidSite(format!("unknown hook kind {s:?}")))
    }
}

/// A named location in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HookSite {
    pub kind: HookKind,
    pub layer: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<usize>,
}

impl HookSite {
    pub fn new(kind: HookKind, layer: usize) -> Self {
        Self {
            kind,
            layer,
            head: None,
        }
    }

    pub fn head(kind: HookKind, layer: usize, head: usize) -> Self {
        Self {
            kind,
            layer,
            head: Some(head),
        }
    }

    pub fn resid_pre(layer: usize) -> Self {
        Self::new(HookKind::ResidPre, layer)
    }

    pub fn resid_post(layer: usize) -> Self {
        Self::new(HookKind::ResidPost, layer)
    }

    pub fn head_out(layer: usize, head: usize) -> Self {
        Self::head(HookKind::HeadOut, layer, head)
    }

    pub fn attn_pattern(layer: usize, head: usize) -> Self {
        Self::head(HookKind::AttnPattern, layer, head)
    }

    pub fn validate(&self, cfg: &ModelConfig) -> Result<(), ModelError> {
        if self.layer >= cfg.n_layers {
            return Err(ModelError::InvalidSite(format!(
                "{self}: layer out of range (n_layers = {})",
                cfg.n_layers
            )));
        }
        match (self.kind.per_head(), self.head) {
            (true, None) => Err(ModelError::InvalidSite(format!("{self}: head required"))),
            (false, Some(_)) => Err(ModelError::InvalidSite(format!(
                "{self}: head not allowed for this kind"
            ))),
            (true, Some(h)) if h >= cfg.n_heads => Err(ModelError::InvalidSite(format!(
                "{self}: head out of range (n_heads = {})",
                cfg.n_heads
            ))),
            _ => Ok(()),
        }
    }

    /// Row width of the activation at this site.
    pub fn width(&self, cfg: &ModelConfig, seq_len: usize) -> usize {
        match self.kind {
            HookKind::AttnPattern => seq_len,
            _ => cfg.d_model,
        }
    }

    /// Every site of the model, in layer order.
    pub fn all(cfg: &ModelConfig) -> Vec<HookSite> {
        let mut out = Vec::new();
        for layer in 0..cfg.n_layers {
            for kind in HookKind::ALL {
                if kind.per_head() {
                    out.extend((0..cfg.n_heads).map(|h| HookSite::head(kind, layer, h)));
                } else {
                    out.push(HookSite::new(kind, layer));
                }
            }
        }
        out
    }
}

impl fmt::Display for HookSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.head {
            Some(h) => write!(f, "{}.{}.{}", self.kind.as_str(), self.layer, h),
            None => write!(f, "{}.{}", self.kind.as_str(), self.layer),
        }
    }
}

impl FromStr for HookSite {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::InvalidSite(format!("cannot parse hook site {s:?}"));
        let mut parts = s.split('.');
        let kind: HookKind = parts.next().ok_or_else(bad)?.parse()?;
        let layer = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(bad)?;
        let head = match parts.next() {
            Some(p) => Some(p.parse().map_err(|_| bad())?),
            None => None,
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(HookSite { kind, layer, head })
    }
}

/// Which sites a forward pass should keep.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Record {
    #[default]
    Nothing,
    All,
    Sites(BTreeSet<HookSite>),
    /// Every site of the listed kinds.
    Kinds(BTreeSet<HookKind>),
}

impl Record {
    pub fn contains(&self, site: &HookSite) -> bool {
        match self {
            Record::Nothing => false,
            Record::All => true,
            Record::Sites(s) => s.contains(site),
            Record::Kinds(k) => k.contains(&site.kind),
        }
    }

    pub fn sites(sites: impl IntoIterator<Item = HookSite>) -> Self {
        Record::Sites(sites.into_iter().collect())
    }

    pub fn kinds(kinds: impl IntoIterator<Item = HookKind>) -> Self {
        Record::Kinds(kinds.into_iter().collect())
    }
}

/// Activations recorded during one forward pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActivationCache {
    seq_len: usize,
    tensors: BTreeMap<HookSite, Tensor>,
}

impl ActivationCache {
    pub(crate) fn new(seq_len: usize) -> Self {
        Self {
            seq_len,
            tensors: BTreeMap::new(),
        }
    }

    pub(crate) fn insert(&mut self, site: HookSite, t: Tensor) {
        self.tensors.insert(site, t);
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn get(&self, site: &HookSite) -> Option<&Tensor> {
        self.tensors.get(site)
    }

    pub fn require(&self, site: &HookSite) -> Result<&Tensor, ModelError> {
        self.get(site)
            .ok_or_else(|| ModelError::MissingActivation(site.to_string()))
    }

    pub fn sites(&self) -> impl Iterator<Item = &HookSite> {
        self.tensors.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&HookSite, &Tensor)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}
