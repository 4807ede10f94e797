// SPDX-License-Identifier: MIT OR Apache-2.0

//! Shared fixtures and straight-line f64 oracles. Nothing here calls the
//! engine's kernels.

#![allow(dead_code)]

use axir::axioms::{
    select_queries, synth_corpus, CurationParams, DiagnosticTriple, PerturbationKind, Perturber, SynthCorpus,
    SynthParams,
};
use axir::model::{Model, ModelConfig, Pooling, Similarity, WeightContainer};
use axir::tokenizer::{TokenizerMode, Vocab};
use axir::toyforge::{build_duplicate_head_model, build_random_model, ToyModel, ToySpec};

pub fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i * k + t] * b[t * n + j];
            }
            out[i * n + j] = s;
        }
    }
    out
}

pub fn naive_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn naive_layer_norm(row: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = (var + eps).sqrt();
    row.iter()
        .zip(gamma.iter().zip(beta))
        .map(|(v, (g, b))| (v - mean) / sd * g + b)
        .collect()
}

pub fn naive_gelu(v: f64) -> f64 {
    0.5 * v * (1.0 + statrs::function::erf::erf(v / 2f64.sqrt()))
}

fn f64s(w: &WeightContainer, name: &str) -> Vec<f64> {
    w.get(name).unwrap_or_else(|| panic!("missing {name}")).data().iter().map(|&v| v as f64).collect()
}

/// Every intermediate of one reference forward pass, row-major `[seq × width]`.
pub struct RefLayer {
    pub resid_pre: Vec<f64>,
    pub head_out: Vec<Vec<f64>>,
    pub attn_out: Vec<f64>,
    pub resid_mid: Vec<f64>,
    pub mlp_out: Vec<f64>,
    pub resid_post: Vec<f64>,
}

/// Straight-line f64 forward pass reading the raw weight container.
pub fn reference_forward(cfg: &ModelConfig, w: &WeightContainer, ids: &[u32]) -> (Vec<f64>, Vec<RefLayer>) {
    let (d, dh, nh, ff, seq) = (cfg.d_model, cfg.d_head, cfg.n_heads, cfg.d_ff, ids.len());
    let eps = cfg.ln_eps as f64;
    let ln_rows = |x: &[f64], g: &str, b: &str| -> Vec<f64> {
        let (g, b) = (f64s(w, g), f64s(w, b));
        x.chunks(d).flat_map(|r| naive_layer_norm(r, &g, &b, eps)).collect()
    };
    let affine = |x: &[f64], wn: &str, bn: &str, k: usize, n: usize| -> Vec<f64> {
        let mut y = naive_matmul(x, &f64s(w, wn), seq, k, n);
        let b = f64s(w, bn);
        for r in y.chunks_mut(n) {
            for (v, bb) in r.iter_mut().zip(&b) {
                *v += bb;
            }
        }
        y
    };

    let tok = f64s(w, "token_embedding");
    let pos = f64s(w, "position_embedding");
    let mut x = Vec::with_capacity(seq * d);
    for (i, &id) in ids.iter().enumerate() {
        for j in 0..d {
            x.push(tok[id as usize * d + j] + pos[i * d + j]);
        }
    }
    let mut x = ln_rows(&x, "embed_ln.gamma", "embed_ln.beta");

    let mut layers = Vec::new();
    for l in 0..cfg.n_layers {
        let p = |s: &str| format!("layer.{l}.{s}");
        let q = affine(&x, &p("attn.q.weight"), &p("attn.q.bias"), d, d);
        let k = affine(&x, &p("attn.k.weight"), &p("attn.k.bias"), d, d);
        let v = affine(&x, &p("attn.v.weight"), &p("attn.v.bias"), d, d);
        let wo = f64s(w, &p("attn.o.weight"));
        let mut head_out = Vec::new();
        let mut attn = vec![0.0; seq * d];
        for h in 0..nh {
            let c0 = h * dh;
            let mut ctx = vec![0.0; seq * dh];
            for i in 0..seq {
                let logits: Vec<f64> = (0..seq)
                    .map(|j| (0..dh).map(|t| q[i * d + c0 + t] * k[j * d + c0 + t]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let pr = naive_softmax(&logits);
                for t in 0..dh {
                    ctx[i * dh + t] = (0..seq).map(|j| pr[j] * v[j * d + c0 + t]).sum();
                }
            }
            let wo_h = &wo[c0 * d..(c0 + dh) * d];
            let out = naive_matmul(&ctx, wo_h, seq, dh, d);
            for (a, o) in attn.iter_mut().zip(&out) {
                *a += o;
            }
            head_out.push(out);
        }
        let ob = f64s(w, &p("attn.o.bias"));
        for r in attn.chunks_mut(d) {
            for (a, b) in r.iter_mut().zip(&ob) {
                *a += b;
            }
        }
        let sum: Vec<f64> = x.iter().zip(&attn).map(|(a, b)| a + b).collect();
        let mid = ln_rows(&sum, &p("ln1.gamma"), &p("ln1.beta"));
        let hidden: Vec<f64> = affine(&mid, &p("mlp.w1.weight"), &p("mlp.w1.bias"), d, ff)
            .into_iter()
            .map(naive_gelu)
            .collect();
        let mlp = {
            let mut y = naive_matmul(&hidden, &f64s(w, &p("mlp.w2.weight")), seq, ff, d);
            let b = f64s(w, &p("mlp.w2.bias"));
            for r in y.chunks_mut(d) {
                for (v, bb) in r.iter_mut().zip(&b) {
                    *v += bb;
                }
            }
            y
        };
        let sum: Vec<f64> = mid.iter().zip(&mlp).map(|(a, b)| a + b).collect();
        let post = ln_rows(&sum, &p("ln2.gamma"), &p("ln2.beta"));
        layers.push(RefLayer {
            resid_pre: x,
            head_out,
            attn_out: attn,
            resid_mid: mid,
            mlp_out: mlp,
            resid_post: post.clone(),
        });
        x = post;
    }
    (x[..d].to_vec(), layers)
}

pub fn reference_score(cfg: &ModelConfig, w: &WeightContainer, query: &[u32], doc: &[u32]) -> f64 {
    let (q, _) = reference_forward(cfg, w, query);
    let (c, _) = reference_forward(cfg, w, doc);
    q.iter().zip(&c).map(|(a, b)| a * b).sum()
}

pub fn random_config() -> ModelConfig {
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
        tokenizer: TokenizerMode::Whitespace,
    }
}

pub fn wired_toy() -> (ToySpec, ToyModel, Model) {
    let spec = ToySpec::default();
    let toy = build_duplicate_head_model(&spec).unwrap();
    let model = toy.model().unwrap();
    (spec, toy, model)
}

/// A random model that shares the wired toy's vocabulary, so datasets built
/// for one run on the other.
pub fn random_over_toy_vocab(seed: u64) -> Model {
    let spec = ToySpec::default();
    let cfg = ModelConfig {
        n_layers: 2,
        n_heads: 2,
        d_model: 32,
        d_head: 16,
        d_ff: 64,
        vocab_size: spec.vocab_size(),
        max_positions: spec.max_positions,
        ..random_config()
    };
    let w = build_random_model(seed, &cfg).unwrap();
    Model::from_parts(cfg, &w).unwrap()
}

pub fn synth(vocab: &Vocab, seed: u64, n_queries: usize) -> SynthCorpus {
    synth_corpus(&SynthParams { seed, n_queries, ..Default::default() }, vocab).unwrap()
}

pub fn curate(
    model: &Model,
    toy: &ToyModel,
    corpus: &SynthCorpus,
    kind: PerturbationKind,
    n_queries: usize,
    seed: u64,
) -> Vec<DiagnosticTriple> {
    let p = Perturber::new(&toy.vocab, toy.config.tokenizer, "a", toy.config.max_positions).unwrap();
    let params = CurationParams { kind, k_docs: 10, n_queries, seed, injections: 1 };
    select_queries(model, &p, &corpus.docs, &corpus.queries, &corpus.run, &params).unwrap().triples
}
