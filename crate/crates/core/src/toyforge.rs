// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hand-wired models with a known term-frequency mechanism, plus seeded
//! random models for invariant tests.
//!
//! # Duplicate-head construction
//!
//! Two layers, all MLPs zero, positions embeddings zero.
//!
//! * Embedding. Token `t` embeds as the one-hot `e_t`. LayerNorm of a
//!   one-hot in `d` dimensions is `(d/√(d-1))·e_t − (1/√(d-1))·1`, so
//!   `gamma = √(d-1)/d` and `beta = 1/d` map it back to exactly `e_t`.
//! * Layer 0, duplicate head. Content tokens query their own identity and a
//!   sink on the CLS key, both at logit `sharpness`; identical tokens
//!   therefore split mass evenly with the CLS sink. Values are `+1` for
//!   content tokens and `-1` for CLS, read out onto the relevance coordinate
//!   `r`. A content token occurring `c` times writes about `(c-1)/(c+1)`:
//!   zero when it is unique, growing with each duplicate. Non-content tokens
//!   (filler, specials) put all their mass on SEP, whose value is zero. The
//!   CLS row attends to SEP at a moderate logit and leaks the remainder
//!   uniformly, so it carries a small count of content tokens.
//! * Layer 1, aggregator head. Zero queries and keys give uniform attention;
//!   the value reads coordinate `r`, so CLS receives the mean duplicate
//!   signal of the document.
//! * Post-attention LayerNorms keep `gamma = 1, beta = 0`. A vector
//!   `e_t + ρ·e_r` normalizes to `r`-coordinate `(ρ − μ)/σ`, which is
//!   increasing in `ρ`, so normalization bends the signal but keeps its
//!   order. [`build_duplicate_head_model`] checks this on probe documents
//!   rather than trusting the algebra.
//!
//! Queries are represented by `e_r` (`query_probe`), so the score is the
//! CLS vector's coordinate `r`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::model::{Model, ModelConfig, ModelError, Pooling, Record, Similarity, WeightContainer};
use crate::tensor::Tensor;
use crate::tokenizer::{self, TokenizerMode, Vocab, CLS, PAD, SEP, UNK};

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("infeasible toy spec: {0}")]
    Infeasible(String),
    #[error("constructed model failed its monotonicity check: {0}")]
    NotMonotone(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Default toy vocabulary (non-special words). The first entry is the
/// filler; the rest are content words.
pub const DEFAULT_WORDS: [&str; 60] = [
    "a", "average", "snowfall", "nyc", "weather", "winter", "storm", "city", "rain", "inches",
    "annual", "record", "total", "month", "january", "february", "march", "river", "bridge",
    "park", "museum", "train", "station", "ticket", "price", "hotel", "coffee", "market",
    "garden", "school", "library", "doctor", "hospital", "patient", "fever", "cough", "vaccine",
    "flu", "season", "bank", "loan", "rate", "interest", "mortgage", "house", "rent", "tax",
    "income", "salary", "job", "career", "college", "degree", "exam", "student", "teacher",
    "wellesley", "acceptance", "island", "harbor",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    /// Non-special vocabulary words; specials are prepended.
    pub words: Vec<String>,
    /// Non-content word used to pad documents.
    pub filler: String,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    /// Head index of the duplicate detector in layer 0.
    pub dup_head: usize,
    /// Head index of the CLS aggregator in layer 1.
    pub aggregator_head: usize,
    /// Attention logit between identical content tokens (and to the CLS sink).
    pub sharpness: f32,
    /// Logit with which non-content tokens attend to SEP.
    pub sink_logit: f32,
    /// Logit with which CLS attends to SEP; lower values leak more.
    pub cls_sink_logit: f32,
    /// Relevance coordinate written by the duplicate head.
    pub relevance_coord: usize,
    pub ln_eps: f32,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            words: DEFAULT_WORDS.iter().map(|w| w.to_string()).collect(),
            filler: "a".into(),
            d_model: 256,
            n_heads: 4,
            d_ff: 16,
            max_positions: 128,
            dup_head: 2,
            aggregator_head: 1,
            sharpness: 10.0,
            sink_logit: 30.0,
            cls_sink_logit: 4.0,
            relevance_coord: 200,
            ln_eps: 1e-12,
        }
    }
}

impl ToySpec {
    pub fn vocab_tokens(&self) -> Vec<String> {
        [PAD, UNK, CLS, SEP]
            .iter()
            .map(|s| s.to_string())
            .chain(self.words.iter().cloned())
            .collect()
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len() + 4
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads.max(1)
    }

    pub fn validate(&self) -> Result<(), ToyError> {
        let bad = |m: String| Err(ToyError::Infeasible(m));
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        let v = self.vocab_size();
        if v > self.d_model {
            return bad(format!("vocab_size {v} exceeds d_model {}", self.d_model));
        }
        if v > self.d_head() {
            return bad(format!(
                "vocab_size {v} exceeds d_head {}; one-hot queries and keys need a head coordinate per token",
                self.d_head()
            ));
        }
        if self.relevance_coord >= self.d_model || self.relevance_coord < v {
            return bad(format!(
                "relevance coordinate {} must lie in [{v}, {})",
                self.relevance_coord, self.d_model
            ));
        }
        if self.dup_head >= self.n_heads || self.aggregator_head >= self.n_heads {
            return bad("wired head index out of range".into());
        }
        if !(self.sharpness > 0.0 && self.sink_logit > 0.0 && self.cls_sink_logit > 0.0) {
            return bad("attention logits must be positive".into());
        }
        if !self.words.contains(&self.filler) {
            return bad(format!("filler {:?} not in vocabulary", self.filler));
        }
        if self.content_words().count() < 6 {
            return bad("need at least 6 content words".into());
        }
        if self.max_positions < 16 {
            return bad("max_positions must be at least 16".into());
        }
        Ok(())
    }

    pub fn content_words(&self) -> impl Iterator<Item = &str> {
        self.words
            .iter()
            .map(String::as_str)
            .filter(move |w| *w != self.filler)
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            n_heads: self.n_heads,
            d_model: self.d_model,
            d_head: self.d_head(),
            d_ff: self.d_ff,
            vocab_size: self.vocab_size(),
            max_positions: self.max_positions,
            ln_eps: self.ln_eps,
            pooling: Pooling::Cls,
            similarity: Similarity::Dot,
            query_probe: Some(self.relevance_coord),
            tokenizer: TokenizerMode::Whitespace,
        }
    }
}

/// A constructed model together with its vocabulary.
pub struct ToyModel {
    pub config: ModelConfig,
    pub weights: WeightContainer,
    pub vocab: Vocab,
}

impl ToyModel {
    pub fn model(&self) -> Result<Model, ModelError> {
        Model::from_parts(self.config.clone(), &self.weights)
    }
}

fn zero_weights(cfg: &ModelConfig) -> WeightContainer {
    let mut w = WeightContainer::new();
    for (name, shape) in cfg.required_tensors() {
        w.insert(name, Tensor::zeros(shape));
    }
    w
}

fn set(w: &mut WeightContainer, name: &str, row: usize, col: usize, value: f32) {
    let t = w.get_mut(name).expect("tensor exists");
    let cols = t.cols();
    t.data_mut()[row * cols + col] = value;
}

fn fill(w: &mut WeightContainer, name: &str, value: f32) {
    w.get_mut(name)
        .expect("tensor exists")
        .data_mut()
        .iter_mut()
        .for_each(|v| *v = value);
}

pub fn build_duplicate_head_model(spec: &ToySpec) -> Result<ToyModel, ToyError> {
    spec.validate()?;
    let cfg = spec.config();
    let vocab = Vocab::from_tokens(spec.vocab_tokens())
        .map_err(|e| ToyError::Infeasible(e.to_string()))?;
    let d = cfg.d_model;
    let dh = cfg.d_head;
    let root_dh = (dh as f32).sqrt();
    let mut w = zero_weights(&cfg);

    for t in 0..cfg.vocab_size {
        set(&mut w, "token_embedding", t, t, 1.0);
    }
    fill(&mut w, "embed_ln.gamma", ((d - 1) as f32).sqrt() / d as f32);
    fill(&mut w, "embed_ln.beta", 1.0 / d as f32);
    for l in 0..2 {
        fill(&mut w, &format!("layer.{l}.ln1.gamma"), 1.0);
        fill(&mut w, &format!("layer.{l}.ln2.gamma"), 1.0);
    }

    // Layer 0: duplicate-token head. Head-local coordinates reuse token ids;
    // the CLS id coordinate is the content sink, the SEP id coordinate the
    // non-content sink, and value coordinate 0 carries the signal.
    let col = |c: usize| spec.dup_head * dh + c;
    let cls = vocab.cls_id() as usize;
    let sep = vocab.sep_id() as usize;
    let filler = vocab.id(&spec.filler).expect("validated") as usize;
    // logit = q·k / √dh, so fold √dh into the query side
    let match_qk = (spec.sharpness * root_dh).sqrt();
    for t in 0..cfg.vocab_size {
        let content = !vocab.is_special(t as u32) && t != filler;
        if content {
            set(&mut w, "layer.0.attn.q.weight", t, col(t), match_qk);
            set(&mut w, "layer.0.attn.k.weight", t, col(t), match_qk);
            set(&mut w, "layer.0.attn.q.weight", t, col(cls), spec.sharpness * root_dh);
            set(&mut w, "layer.0.attn.v.weight", t, col(0), 1.0);
        } else if t == cls {
            set(&mut w, "layer.0.attn.q.weight", t, col(sep), spec.cls_sink_logit * root_dh);
            set(&mut w, "layer.0.attn.v.weight", t, col(0), -1.0);
        } else {
            set(&mut w, "layer.0.attn.q.weight", t, col(sep), spec.sink_logit * root_dh);
        }
    }
    set(&mut w, "layer.0.attn.k.weight", cls, col(cls), 1.0);
    set(&mut w, "layer.0.attn.k.weight", sep, col(sep), 1.0);
    set(&mut w, "layer.0.attn.o.weight", col(0), spec.relevance_coord, 1.0);

    // Layer 1: uniform aggregator copying coordinate r into every row.
    let agg = spec.aggregator_head * dh;
    set(&mut w, "layer.1.attn.v.weight", spec.relevance_coord, agg, 1.0);
    set(&mut w, "layer.1.attn.o.weight", agg, spec.relevance_coord, 1.0);

    let toy = ToyModel {
        config: cfg,
        weights: w,
        vocab,
    };
    verify_monotone(spec, &toy)?;
    Ok(toy)
}

/// Scores a probe document with `k` copies of one content word and
/// `max_k - k` fillers for each `k`, at fixed length, on every probe length.
pub fn probe_scores(
    spec: &ToySpec,
    toy: &ToyModel,
    model: &Model,
    background: usize,
    max_k: usize,
) -> Result<Vec<f32>, ToyError> {
    let content: Vec<&str> = spec.content_words().collect();
    let term = content[0];
    let mut scores = Vec::with_capacity(max_k + 1);
    for k in 0..=max_k {
        let mut words: Vec<&str> = content[1..].iter().cycle().take(background).copied().collect();
        words.insert(words.len() / 2, term);
        words.extend(std::iter::repeat_n(term, k));
        words.extend(std::iter::repeat_n(spec.filler.as_str(), max_k - k));
        let text = words.join(" ");
        let ids = tokenizer::tokenize(&text, &toy.vocab, TokenizerMode::Whitespace).ids;
        let q = model.encode_query(&[])?;
        let doc = model.encode(&ids, &Record::Nothing)?.cls;
        scores.push(crate::model::score(&q, &doc)?);
    }
    Ok(scores)
}

fn verify_monotone(spec: &ToySpec, toy: &ToyModel) -> Result<(), ToyError> {
    let model = toy.model()?;
    let n_content = spec.content_words().count() - 1;
    let longest = spec.max_positions.saturating_sub(2 + 1 + 4);
    for background in [4usize, 12, 30, 60, 100] {
        let background = background.min(n_content).min(longest);
        let scores = probe_scores(spec, toy, &model, background, 4)?;
        if scores.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(ToyError::NotMonotone(format!(
                "background {background}: scores {scores:?}"
            )));
        }
    }
    Ok(())
}

/// Seeded Gaussian weights scaled by `1/√d_model`; LayerNorm gains near 1.
pub fn build_random_model(seed: u64, config: &ModelConfig) -> Result<WeightContainer, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (config.d_model as f32).sqrt();
    let mut w = WeightContainer::new();
    for (name, shape) in config.required_tensors() {
        let n: usize = shape.iter().product();
        let mut draw = || -> f32 { StandardNormal.sample(&mut rng) };
        let data: Vec<f32> = if name.ends_with(".gamma") {
            (0..n).map(|_| 1.0 + 0.1 * draw()).collect()
        } else if name.ends_with(".beta") {
            (0..n).map(|_| 0.1 * draw()).collect()
        } else {
            (0..n).map(|_| draw() * scale).collect()
        };
        w.insert(name, Tensor::new(shape, data).expect("shape product"));
    }
    Ok(w)
}
