// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; the process fails if any criterion does.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use axir::analysis::{attention_by_type, row_type_masses, write_matrix, Cohort, Weighting};
use axir::axioms::{
    eligible_terms, write_dataset, DiagnosticTriple, Location, PerturbationKind, Perturber, Side, TokenType,
};
use axir::model::{self, HookKind, HookSite, Model, Patch, Positions, Record};
use axir::patching::{
    ablate, run_dataset, sweep_heads, sweep_residual, with_threads, AblationMode, DonorSource, Granularity,
    PatchSpec, PositionSelector, SiteSelection, SweepOptions, TripleRuns,
};
use axir::tensor::{gelu_scalar, layer_norm, softmax_rows, Tensor};
use axir::tokenizer::tokenize;
use axir::toyforge::{build_random_model, probe_scores};

use common::*;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

fn max_abs(a: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn a1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
    let (mut e_mm, mut e_sm, mut e_ln, mut e_ge) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let (m, k, n) = (rng.gen_range(1..=16), rng.gen_range(1..=16), rng.gen_range(1..=16));
        let a = uniform(&mut rng, m * k);
        let b = uniform(&mut rng, k * n);
        let got = Tensor::new(vec![m, k], a.clone()).unwrap().matmul(&Tensor::new(vec![k, n], b.clone()).unwrap()).unwrap();
        let want = naive_matmul(
            &a.iter().map(|&v| v as f64).collect::<Vec<_>>(),
            &b.iter().map(|&v| v as f64).collect::<Vec<_>>(),
            m,
            k,
            n,
        );
        e_mm = e_mm.max(max_abs(got.data().iter().zip(&want).map(|(g, w)| *g as f64 - w)));
    }
    for _ in 0..200 {
        let (r, c) = (rng.gen_range(1..=8), rng.gen_range(1..=32));
        let x: Vec<f32> = uniform(&mut rng, r * c).into_iter().map(|v| v * 8.0).collect();
        let got = softmax_rows(&Tensor::new(vec![r, c], x.clone()).unwrap(), None).unwrap();
        for i in 0..r {
            let want = naive_softmax(&x[i * c..(i + 1) * c].iter().map(|&v| v as f64).collect::<Vec<_>>());
            e_sm = e_sm.max(max_abs(got.row(i).iter().zip(&want).map(|(g, w)| *g as f64 - w)));
        }
    }
    for _ in 0..200 {
        let (r, d) = (rng.gen_range(1..=8), rng.gen_range(2..=32));
        let x: Vec<f32> = uniform(&mut rng, r * d).into_iter().map(|v| v * 4.0).collect();
        let g: Vec<f32> = uniform(&mut rng, d).into_iter().map(|v| 1.0 + 0.5 * v).collect();
        let b = uniform(&mut rng, d);
        let got = layer_norm(
            &Tensor::new(vec![r, d], x.clone()).unwrap(),
            &Tensor::vector(g.clone()),
            &Tensor::vector(b.clone()),
            1e-12,
        )
        .unwrap();
        let (g64, b64): (Vec<f64>, Vec<f64>) = (g.iter().map(|&v| v as f64).collect(), b.iter().map(|&v| v as f64).collect());
        for i in 0..r {
            let row: Vec<f64> = x[i * d..(i + 1) * d].iter().map(|&v| v as f64).collect();
            let want = naive_layer_norm(&row, &g64, &b64, 1e-12);
            e_ln = e_ln.max(max_abs(got.row(i).iter().zip(&want).map(|(g, w)| *g as f64 - w)));
        }
    }
    for _ in 0..200 {
        let v = rng.gen_range(-8.0f32..8.0);
        e_ge = e_ge.max((gelu_scalar(v) as f64 - naive_gelu(v as f64)).abs());
    }
    let t = start.elapsed();
    let detail = format!("matmul {e_mm:.2e}, softmax {e_sm:.2e}, layernorm {e_ln:.2e}, gelu {e_ge:.2e} in {t:.2?}");
    ensure!(e_mm <= 1e-6 && e_sm <= 1e-6 && e_ln <= 1e-6, "{detail}");
    ensure!(e_ge <= 1e-5, "{detail}");
    ensure!(t < Duration::from_secs(10), "{detail}");
    Ok(detail)
}

fn a2() -> Outcome {
    let cfg = random_config();
    let w = build_random_model(0xA2, &cfg).unwrap();
    let model = Model::from_parts(cfg.clone(), &w).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA2);
    let ids = |rng: &mut ChaCha8Rng| -> Vec<u32> {
        let n = rng.gen_range(2..=cfg.max_positions);
        (0..n).map(|_| rng.gen_range(0..cfg.vocab_size as u32)).collect()
    };
    let (mut worst_rel, mut worst_inv) = (0.0f64, 0.0f64);
    let mut worst_at = String::new();
    for case in 0..50 {
        let (q, d) = (ids(&mut rng), ids(&mut rng));
        let got = model::score(&model.encode_query(&q).unwrap(), &model.encode(&d, &Record::Nothing).unwrap().cls).unwrap();
        let want = reference_score(&cfg, &w, &q, &d);
        let rel = (got as f64 - want).abs() / want.abs();
        if rel > worst_rel {
            worst_rel = rel;
            worst_at = format!("case {case}: {got} vs {want}");
        }

        let enc = model.encode(&d, &Record::All).unwrap();
        let (_, layers) = reference_forward(&cfg, &w, &d);
        for (l, r) in layers.iter().enumerate() {
            let get = |kind| enc.cache.require(&HookSite::new(kind, l)).unwrap().data().to_vec();
            let pre = get(HookKind::ResidPre);
            let attn = get(HookKind::AttnOut);
            let mid = get(HookKind::ResidMid);
            let mlp = get(HookKind::MlpOut);
            let post = get(HookKind::ResidPost);
            // head-sum: Σ_h head_out + bias == attn_out
            let mut sum = vec![0.0f64; attn.len()];
            for h in 0..cfg.n_heads {
                let ho = enc.cache.require(&HookSite::head_out(l, h)).unwrap();
                for (s, v) in sum.iter_mut().zip(ho.data()) {
                    *s += *v as f64;
                }
            }
            let bias = w.get(&format!("layer.{l}.attn.o.bias")).unwrap().data();
            let head_sum = sum.iter().enumerate().map(|(i, s)| s + bias[i % cfg.d_model] as f64 - attn[i] as f64);
            // residual additivity in post-LN form: mid = LN1(pre + attn), post = LN2(mid + mlp)
            let g = |n: &str| w.get(&format!("layer.{l}.{n}")).unwrap().data().iter().map(|&v| v as f64).collect::<Vec<_>>();
            let relayer = |a: &[f32], b: &[f32], gn: &str, bn: &str| -> Vec<f64> {
                let s: Vec<f64> = a.iter().zip(b).map(|(x, y)| *x as f64 + *y as f64).collect();
                s.chunks(cfg.d_model).flat_map(|row| naive_layer_norm(row, &g(gn), &g(bn), cfg.ln_eps as f64)).collect()
            };
            let mid_err = relayer(&pre, &attn, "ln1.gamma", "ln1.beta").into_iter().zip(&mid).map(|(a, b)| a - *b as f64);
            let post_err = relayer(&mid, &mlp, "ln2.gamma", "ln2.beta").into_iter().zip(&post).map(|(a, b)| a - *b as f64);
            let chain = if l + 1 < cfg.n_layers {
                let next = enc.cache.require(&HookSite::resid_pre(l + 1)).unwrap().data().to_vec();
                max_abs(next.iter().zip(&post).map(|(a, b)| (*a - *b) as f64))
            } else {
                0.0
            };
            let vs_ref = max_abs(r.resid_post.iter().zip(&post).map(|(a, b)| a - *b as f64));
            worst_inv = worst_inv
                .max(max_abs(head_sum))
                .max(max_abs(mid_err))
                .max(max_abs(post_err))
                .max(chain);
            ensure!(vs_ref < 1e-3, "case {case} layer {l}: resid_post off reference by {vs_ref:.2e}");
        }
    }
    let detail = format!("worst relative score error {worst_rel:.2e} ({worst_at}); worst invariant error {worst_inv:.2e}");
    ensure!(worst_rel <= 1e-4, "{detail}");
    ensure!(worst_inv <= 1e-5, "{detail}");
    Ok(detail)
}

/// One triple per curated query.
fn sixteen(triples: &[DiagnosticTriple]) -> Vec<DiagnosticTriple> {
    let mut seen = std::collections::BTreeSet::new();
    triples.iter().filter(|t| seen.insert(t.qid.clone())).cloned().collect()
}

fn a3(models: &[(&str, &Model)], triples: &[DiagnosticTriple]) -> Outcome {
    let start = Instant::now();
    let set = sixteen(triples);
    ensure!(set.len() == 16, "expected 16 triples, got {}", set.len());
    let mut n = 0;
    for (name, model) in models {
        for kind in HookKind::ALL {
            for g in [Granularity::PerSite, Granularity::PerSiteAndPosition] {
                let spec = PatchSpec::new(SiteSelection::sweep(kind), PositionSelector::All, g);
                for o in run_dataset(model, &set, &spec, DonorSource::SelfPatch).map_err(|e| e.to_string())? {
                    n += 1;
                    ensure!(
                        o.s_patched.to_bits() == o.s_low.to_bits(),
                        "{name} {} {}: {} != {}",
                        o.site,
                        o.positions,
                        o.s_patched,
                        o.s_low
                    );
                    ensure!(o.ndiff.is_none_or(|v| v == 0.0), "{name} {}: ndiff {:?}", o.site, o.ndiff);
                }
            }
        }
    }
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(60), "{n} self-patches took {t:.2?}");
    Ok(format!("{n} self-patches over {} models, all bitwise no-ops, in {t:.2?}", models.len()))
}

fn a4(models: &[(&str, &Model)], triples: &[DiagnosticTriple]) -> Outcome {
    let (mut worst_cls, mut worst_l0, mut n) = (0.0f64, 0.0f64, 0);
    for (name, model) in models {
        let last = model.config().n_layers - 1;
        let spec = PatchSpec::new(
            SiteSelection::List(vec![HookSite::resid_post(last)]),
            PositionSelector::Positions(vec![0]),
            Granularity::PerSite,
        );
        for o in run_dataset(model, triples, &spec, DonorSource::Paired).map_err(|e| e.to_string())? {
            if let Some(v) = o.ndiff {
                n += 1;
                worst_cls = worst_cls.max((v as f64 - 1.0).abs());
            }
        }
        for t in triples {
            let runs = TripleRuns::new(model, t, &[HookKind::ResidPre]).map_err(|e| e.to_string())?;
            let donor = runs.donor.cache.require(&HookSite::resid_pre(0)).unwrap();
            let s = runs
                .score_patched(model, &[Patch::new(HookSite::resid_pre(0), Positions::All, donor)])
                .map_err(|e| e.to_string())?;
            worst_l0 = worst_l0.max((s as f64 - runs.s_high() as f64).abs());
        }
        ensure!(n > 0, "{name}: every triple degenerate");
    }
    let detail = format!("{n} CLS patches, worst |ndiff-1| {worst_cls:.2e}; layer-0 worst |Δ donor| {worst_l0:.2e}");
    ensure!(worst_cls <= 1e-4 && worst_l0 <= 1e-5, "{detail}");
    Ok(detail)
}

fn a5(model: &Model, triples: &[DiagnosticTriple], dup: (usize, usize), agg: (usize, usize)) -> Outcome {
    let start = Instant::now();
    let n_q = sixteen(triples).len();
    ensure!(n_q == 16, "dataset spans {n_q} queries");
    let sweep = sweep_heads(model, triples, &SweepOptions::default()).map_err(|e| e.to_string())?;
    let m = &sweep.matrix;
    let (l, h, v) = m.argmax().ok_or("empty head matrix")?;
    let cfg = model.config();
    let mut unwired: Vec<f64> = (0..cfg.n_layers)
        .flat_map(|l| (0..cfg.n_heads).map(move |h| (l, h)))
        .filter(|&lh| lh != dup)
        .map(|(l, h)| m.get(l, h).unwrap_or(0.0))
        .collect();
    unwired.sort_by(f64::total_cmp);
    let median = if unwired.len() % 2 == 1 {
        unwired[unwired.len() / 2]
    } else {
        (unwired[unwired.len() / 2 - 1] + unwired[unwired.len() / 2]) / 2.0
    };

    let heads: Vec<HookSite> = (0..cfg.n_layers).flat_map(|l| (0..cfg.n_heads).map(move |h| HookSite::head_out(l, h))).collect();
    let rep = ablate(model, triples, &heads, AblationMode::Zero, false).map_err(|e| e.to_string())?;
    let collapse = |lh: (usize, usize)| rep.row(HookSite::head_out(lh.0, lh.1)).map(|r| r.collapse).unwrap_or(f64::NAN);
    let wired_collapse = collapse(dup);
    let worst_other = heads
        .iter()
        .filter(|s| (s.layer, s.head.unwrap()) != dup && (s.layer, s.head.unwrap()) != agg)
        .map(|s| collapse((s.layer, s.head.unwrap())).abs())
        .fold(0.0, f64::max);
    let t = start.elapsed();
    let detail = format!(
        "argmax {l}.{h} ndiff {v:.4}, unwired median {median:.4}, collapse wired {wired_collapse:.3} / other max {worst_other:.4}, {} triples in {t:.2?}",
        triples.len()
    );
    ensure!((l, h) == dup && v >= 0.9 && median <= 0.1, "{detail}");
    ensure!(wired_collapse >= 0.9 && worst_other <= 0.01, "{detail}");
    ensure!(t < Duration::from_secs(120), "{detail}");
    Ok(detail)
}

fn a6(spec: &axir::toyforge::ToySpec, toy: &axir::toyforge::ToyModel, model: &Model, corpus: &axir::axioms::SynthCorpus) -> Outcome {
    let mut checked = 0;
    for background in [4, 12, 30, 60] {
        let s = probe_scores(spec, toy, model, background, 4).map_err(|e| e.to_string())?;
        ensure!(s.windows(2).all(|p| p[1] >= p[0]), "probe background {background}: {s:?}");
        checked += 1;
    }
    // the same property on corpus documents: append k term copies and 4-k fillers
    let p = Perturber::new(&toy.vocab, toy.config.tokenizer, &spec.filler, toy.config.max_positions).unwrap();
    for q in &corpus.queries {
        let Some(term) = eligible_terms(&p, &q.text).into_iter().next() else { continue };
        let qv = model.encode_query(&tokenize(&q.text, &toy.vocab, toy.config.tokenizer).ids).unwrap();
        for d in corpus.docs.iter().filter(|d| d.docid.starts_with(&format!("{}_", q.qid))) {
            let mut prev = f32::NEG_INFINITY;
            for k in 0..=4usize {
                let text = std::iter::once(d.text.as_str())
                    .chain(std::iter::repeat_n(term.as_str(), k))
                    .chain(std::iter::repeat_n(spec.filler.as_str(), 4 - k))
                    .collect::<Vec<_>>()
                    .join(" ");
                let ids = tokenize(&text, &toy.vocab, toy.config.tokenizer).ids;
                let s = model::score(&qv, &model.encode(&ids, &Record::Nothing).unwrap().cls).unwrap();
                ensure!(s >= prev, "{} term {term:?}: count {k} scores {s} < {prev}", d.docid);
                prev = s;
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} fixed-length count ladders, all non-decreasing"))
}

fn generate_1000(model: &Model, toy: &axir::toyforge::ToyModel) -> Vec<DiagnosticTriple> {
    let corpus = synth(&toy.vocab, 7, 60);
    let mut all = Vec::new();
    for (kind, n) in [
        (PerturbationKind::inject(Location::End), 30),
        (PerturbationKind::inject(Location::Begin), 20),
        (PerturbationKind::random_inject(), 20),
        (PerturbationKind::replace(), 60),
    ] {
        all.extend(curate(model, toy, &corpus, kind, n, 11));
    }
    all
}

fn a7(model: &Model, toy: &axir::toyforge::ToyModel, dir: &Path) -> Outcome {
    let triples = generate_1000(model, toy);
    ensure!(triples.len() >= 1000, "only {} triples generated", triples.len());
    let mut n_replace = 0;
    for t in &triples {
        let n = t.baseline_ids.len();
        ensure!(t.perturbed_ids.len() == n, "{}: lengths {} vs {}", t.id, n, t.perturbed_ids.len());
        for side in [Side::Baseline, Side::Perturbed] {
            let labels = t.labels(side);
            ensure!(labels.len() == n, "{}: {} labels for {n} positions", t.id, labels.len());
            ensure!(labels[0] == TokenType::Cls && labels[n - 1] == TokenType::Sep, "{}: specials mislabeled", t.id);
            ensure!(
                labels[1..n - 1].iter().all(|l| *l != TokenType::Cls && *l != TokenType::Sep),
                "{}: interior position labeled as special",
                t.id
            );
        }
        if !t.kind.injects() {
            n_replace += 1;
            let hits = t.perturbed_ids.words.iter().filter(|w| **w == t.selected_term).count();
            ensure!(hits == 0, "{}: {hits} occurrences of {:?} survive", t.id, t.selected_term);
        }
    }
    let (a, b) = (dir.join("a.jsonl"), dir.join("b.jsonl"));
    write_dataset(&a, &triples).unwrap();
    write_dataset(&b, &generate_1000(model, toy)).unwrap();
    ensure!(std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap(), "re-run with the same seed differs");
    Ok(format!("{} triples ({n_replace} TFC1-R), invariants hold, re-run byte-identical", triples.len()))
}

fn a8(model: &Model, triples: &[DiagnosticTriple], dup: (usize, usize)) -> Outcome {
    let cfg = model.config();
    let heads: Vec<HookSite> = (0..cfg.n_layers).flat_map(|l| (0..cfg.n_heads).map(move |h| HookSite::attn_pattern(l, h))).collect();
    // every row of every head, not only the INJ rows the report averages
    let mut worst = 0.0f64;
    let mut rows = 0;
    for t in triples {
        let labels = t.labels(Side::Perturbed);
        let enc = model.encode(&t.perturbed_ids.ids, &Record::sites(heads.iter().copied())).unwrap();
        for h in &heads {
            let pat = enc.cache.require(h).unwrap();
            for i in 0..pat.rows() {
                worst = worst.max((row_type_masses(pat.row(i), labels).iter().sum::<f64>() - 1.0).abs());
                rows += 1;
            }
        }
    }
    let rep = attention_by_type(model, triples, &heads, TokenType::Inj, false, Weighting::PerRow).map_err(|e| e.to_string())?;
    let wired = HookSite::attn_pattern(dup.0, dup.1);
    let mass = |to| rep.get(wired, to, Cohort::All).map(|s| s.mean_attention).unwrap_or(f64::NAN);
    let (plus, other) = (mass(TokenType::QtermPlus), mass(TokenType::Other));
    let detail = format!(
        "{rows} rows, worst |Σ-1| {worst:.2e} (report {:.2e}); head {wired}: INJ->QTERM_PLUS {plus:.4} vs INJ->OTHER {other:.4}",
        rep.max_row_sum_error
    );
    ensure!(worst <= 1e-6 && rep.max_row_sum_error <= 1e-6, "{detail}");
    ensure!(plus > other, "{detail}");
    Ok(detail)
}

fn a9(model: &Model, triples: &[DiagnosticTriple], dir: &Path) -> Outcome {
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get()).max(4);
    let run = |n: usize| -> Result<Vec<(String, Vec<u8>)>, String> {
        let out = dir.join(format!("threads_{n}"));
        with_threads(Some(n), || -> Result<(), String> {
            let heads = sweep_heads(model, triples, &SweepOptions::default()).map_err(|e| e.to_string())?;
            let resid = sweep_residual(model, triples, HookKind::ResidPre, &SweepOptions::default()).map_err(|e| e.to_string())?;
            for s in [&heads, &resid] {
                write_matrix(&out, &s.matrix).map_err(|e| e.to_string())?;
                let lines: String = s.outcomes.iter().map(|o| serde_json::to_string(o).unwrap() + "\n").collect();
                std::fs::write(out.join(format!("{}.outcomes.jsonl", s.matrix.name)), lines).unwrap();
            }
            Ok(())
        })?;
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
            })
            .collect();
        files.sort();
        Ok(files)
    };
    let (one, many) = (run(1)?, run(threads)?);
    ensure!(one.len() == many.len(), "{} vs {} files", one.len(), many.len());
    for ((na, a), (_, b)) in one.iter().zip(&many) {
        ensure!(a == b, "{na} differs between 1 and {threads} threads");
    }
    Ok(format!("{} result files identical at 1 and {threads} threads", one.len()))
}

fn a10() -> Outcome {
    let (Ok(model_dir), Ok(dataset)) = (std::env::var("AXIR_A10_MODEL"), std::env::var("AXIR_A10_DATASET")) else {
        return Ok("skipped (report-only; set AXIR_A10_MODEL and AXIR_A10_DATASET to run)".into());
    };
    let b = axir::bundle::load_bundle(Path::new(&model_dir)).map_err(|e| e.to_string())?;
    let triples = axir::axioms::read_dataset(Path::new(&dataset)).map_err(|e| e.to_string())?;
    let m = sweep_heads(&b.model, &triples, &SweepOptions::default()).map_err(|e| e.to_string())?.matrix;
    let mut cells: Vec<(f64, String)> = (0..m.row_labels.len())
        .flat_map(|r| (0..m.col_labels.len()).map(move |c| (r, c)))
        .filter_map(|(r, c)| m.get(r, c).map(|v| (v, format!("{r}.{c}"))))
        .collect();
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let top: Vec<&str> = cells.iter().take(4).map(|(_, n)| n.as_str()).collect();
    let hit = ["0.9", "1.6", "2.3", "3.8"].iter().all(|h| top.contains(h));
    Ok(format!("top-4 heads {top:?}; expected set contained: {hit} (report-only)"))
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let (spec, toy, wired) = wired_toy();
    let random = random_over_toy_vocab(0x5EED);
    let corpus = synth(&toy.vocab, 1, 16);
    let triples = curate(&wired, &toy, &corpus, PerturbationKind::inject(Location::End), 16, 5);
    let dup = (0, spec.dup_head);
    let agg = (1, spec.aggregator_head);
    let models = [("wired", &wired), ("random", &random)];

    let criteria: Vec<Criterion<'_>> = vec![
        ("A1", Box::new(a1)),
        ("A2", Box::new(a2)),
        ("A3", Box::new(|| a3(&models, &triples))),
        ("A4", Box::new(|| a4(&models, &triples))),
        ("A5", Box::new(|| a5(&wired, &triples, dup, agg))),
        ("A6", Box::new(|| a6(&spec, &toy, &wired, &corpus))),
        ("A7", Box::new(|| a7(&wired, &toy, tmp.path()))),
        ("A8", Box::new(|| a8(&wired, &triples, dup))),
        ("A9", Box::new(|| a9(&wired, &triples, tmp.path()))),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match r {
            Ok(d) => println!("{name} PASS  {d}"),
            Err(d) => {
                failed += 1;
                println!("{name} FAIL  {d}");
            }
        }
    }
    match catch_unwind(a10) {
        Ok(Ok(d)) => println!("A10 INFO  {d}"),
        Ok(Err(d)) => println!("A10 INFO  not run: {d}"),
        Err(_) => println!("A10 INFO  panicked (report-only)"),
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
