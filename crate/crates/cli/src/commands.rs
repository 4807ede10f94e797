// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use axir::analysis::{
    self, attention_by_type, emit_report, position_sweep, write_matrix, Manifest, ReportFormat, SweepQuery, Weighting,
};
use axir::axioms::{
    self, eligible_terms, read_dataset, read_queries, read_run, read_tsv_corpus, select_queries, synth_corpus,
    write_dataset, Axiom, CurationParams, DiagnosticTriple, Location, PerturbationKind, Perturber, SynthParams,
    TokenType,
};
use axir::bundle::{self, load_bundle, write_bundle, Bundle};
use axir::model::{self, HookKind, HookSite, ModelConfig, Pooling, Similarity};
use axir::patching::{
    self, dataset_types, matrix_by_head, matrix_by_position, matrix_by_type, run_dataset, split_by_relevance,
    with_threads, AblationMode, DonorSource, Granularity, PatchOutcome, PatchSpec, PositionSelector, ResultMatrix,
    SiteSelection,
};
use axir::tokenizer::{TokenizerMode, Vocab};
use axir::toyforge::{build_duplicate_head_model, build_random_model, ToySpec};

use crate::config::ExperimentConfig;
use crate::error::CliError;

const DEFAULT_FILLER: &str = "a";

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn write_text(path: &Path, body: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, body).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for i in items {
        s.push_str(&serde_json::to_string(i).expect("serializes"));
        s.push('\n');
    }
    s
}

fn out_dir(cfg: &ExperimentConfig, sub: &str) -> PathBuf {
    cfg.out
        .clone()
        .unwrap_or_else(|| Path::new("results").join(cfg.experiment.as_deref().unwrap_or(sub)))
}

fn manifest(cfg: &ExperimentConfig, sub: &str) -> Manifest {
    let mut m = Manifest::new(cfg.experiment.as_deref().unwrap_or(sub), sub, cfg.to_json());
    if let Some(s) = cfg.seed {
        m.seeds.insert("seed".into(), s);
    }
    m
}

fn hash_model(m: &mut Manifest, dir: &Path) -> Result<(), CliError> {
    for p in bundle::paths(dir) {
        m.add_input(&p)?;
    }
    Ok(())
}

fn finish(mut m: Manifest, dir: &Path) -> Result<(), CliError> {
    m.record_outputs(dir)?;
    m.write(dir)?;
    log::info!("wrote {}", dir.display());
    Ok(())
}

fn model_dir(cfg: &ExperimentConfig) -> Result<&PathBuf, CliError> {
    cfg.require(&cfg.model, "model")
}

fn load_model(cfg: &ExperimentConfig) -> Result<Bundle, CliError> {
    Ok(load_bundle(model_dir(cfg)?)?)
}

fn load_dataset(cfg: &ExperimentConfig, m: &mut Manifest) -> Result<Vec<DiagnosticTriple>, CliError> {
    let path = cfg.require(&cfg.dataset, "dataset")?;
    let triples = read_dataset(path)?;
    if triples.is_empty() {
        return Err(CliError::Data(format!("{}: dataset is empty", path.display())));
    }
    m.dataset_hash = Some(m.add_input(path)?);
    Ok(triples)
}

fn perturber<'v>(cfg: &ExperimentConfig, b: &'v Bundle) -> Result<Perturber<'v>, CliError> {
    let c = b.model.config();
    Ok(Perturber::new(
        &b.vocab,
        c.tokenizer,
        cfg.filler.as_deref().unwrap_or(DEFAULT_FILLER),
        c.max_positions,
    )?)
}

fn parse_kind(cfg: &ExperimentConfig) -> Result<PerturbationKind, CliError> {
    let axiom: Axiom = cfg.kind.as_deref().unwrap_or("tfc1-i").parse().map_err(usage)?;
    let location: Location = cfg.location.as_deref().unwrap_or("end").parse().map_err(usage)?;
    Ok(PerturbationKind::new(axiom, location))
}

/// `all` or a comma list of `L.H`.
fn parse_heads(spec: Option<&str>, cfg: &ModelConfig, kind: HookKind) -> Result<Vec<HookSite>, CliError> {
    let spec = spec.unwrap_or("all");
    let sites: Vec<HookSite> = if spec == "all" {
        (0..cfg.n_layers)
            .flat_map(|l| (0..cfg.n_heads).map(move |h| HookSite::head(kind, l, h)))
            .collect()
    } else {
        spec.split(',')
            .map(|p| {
                let (l, h) = p.trim().split_once('.').ok_or_else(|| usage(format!("bad head {p:?}, expected L.H")))?;
                let l = l.parse().map_err(|_| usage(format!("bad layer in {p:?}")))?;
                let h = h.parse().map_err(|_| usage(format!("bad head in {p:?}")))?;
                Ok(HookSite::head(kind, l, h))
            })
            .collect::<Result<_, CliError>>()?
    };
    for s in &sites {
        s.validate(cfg).map_err(|e| usage(e.to_string()))?;
    }
    Ok(sites)
}

pub struct ToyBuild {
    pub wired: bool,
    pub seed: u64,
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub out: PathBuf,
}

pub fn toy_build(a: &ToyBuild) -> Result<(), CliError> {
    let spec = ToySpec::default();
    let (config, weights, vocab) = if a.wired {
        let toy = build_duplicate_head_model(&spec)?;
        (toy.config, toy.weights, toy.vocab)
    } else {
        if a.heads == 0 || !a.d_model.is_multiple_of(a.heads) {
            return Err(usage(format!("--d-model {} not divisible by --heads {}", a.d_model, a.heads)));
        }
        let vocab = Vocab::from_tokens(spec.vocab_tokens())?;
        let config = ModelConfig {
            n_layers: a.layers,
            n_heads: a.heads,
            d_model: a.d_model,
            d_head: a.d_model / a.heads,
            d_ff: a.d_ff,
            vocab_size: vocab.len(),
            max_positions: spec.max_positions,
            ln_eps: 1e-12,
            pooling: Pooling::Cls,
            similarity: Similarity::Dot,
            query_probe: None,
            tokenizer: TokenizerMode::Whitespace,
        };
        config.validate().map_err(|e| usage(e.to_string()))?;
        let weights = build_random_model(a.seed, &config)?;
        (config, weights, vocab)
    };
    write_bundle(&a.out, &config, &weights, &vocab)?;
    let mut m = Manifest::new(
        "toy",
        "toy build",
        serde_json::json!({
            "variant": if a.wired { "wired" } else { "random" },
            "seed": a.seed,
            "layers": a.layers,
            "heads": a.heads,
            "d_model": a.d_model,
            "d_ff": a.d_ff,
        }),
    );
    if !a.wired {
        m.seeds.insert("seed".into(), a.seed);
    }
    finish(m, &a.out)
}

pub fn curate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    with_threads(cfg.threads, || {
        let mut m = manifest(cfg, "curate");
        let b = load_model(cfg)?;
        hash_model(&mut m, model_dir(cfg)?)?;
        let p = perturber(cfg, &b)?;
        let corpus_path = cfg.require(&cfg.corpus, "corpus")?;
        let queries_path = cfg.require(&cfg.queries, "queries")?;
        let run_path = cfg.require(&cfg.run, "run")?;
        let corpus = read_tsv_corpus(corpus_path)?;
        let queries = read_queries(queries_path)?;
        let run = read_run(run_path)?;
        for path in [corpus_path, queries_path, run_path] {
            m.add_input(path)?;
        }
        let params = CurationParams {
            kind: parse_kind(cfg)?,
            k_docs: cfg.k_docs.unwrap_or(10),
            n_queries: cfg.n_queries.unwrap_or(16),
            seed: cfg.seed.unwrap_or(0),
            injections: cfg.injections.unwrap_or(1),
        };
        m.seeds.insert("seed".into(), params.seed);
        let curated = select_queries(&b.model, &p, &corpus, &queries, &run, &params)?;
        if curated.triples.is_empty() {
            return Err(CliError::Data("no query produced any triple".into()));
        }
        let dir = out_dir(cfg, "curate");
        write_dataset(&dir.join("dataset.jsonl"), &curated.triples)?;
        write_text(&dir.join("query_stats.jsonl"), &jsonl(&curated.stats))?;
        m.dataset_hash = Some(analysis::hash_file(&dir.join("dataset.jsonl"))?);
        let kept = curated.stats.iter().filter(|s| s.kept).count();
        println!("{} triples from {kept} queries -> {}", curated.triples.len(), dir.join("dataset.jsonl").display());
        finish(m, &dir)
    })
}

pub fn synth(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let mut m = manifest(cfg, "synth");
    let vocab_path = match (&cfg.vocab, &cfg.model) {
        (Some(v), _) => v.clone(),
        (None, Some(d)) => d.join(bundle::VOCAB_FILE),
        (None, None) => return Err(usage("synth needs --vocab or --model")),
    };
    let vocab = Vocab::from_file(&vocab_path)?;
    m.add_input(&vocab_path)?;
    let d = SynthParams::default();
    let params = SynthParams {
        seed: cfg.seed.unwrap_or(0),
        n_queries: cfg.n_queries.unwrap_or(d.n_queries),
        n_docs_per_query: cfg.docs_per_query.unwrap_or(d.n_docs_per_query),
        tf_range: (cfg.tf_min.unwrap_or(d.tf_range.0), cfg.tf_max.unwrap_or(d.tf_range.1)),
        query_len: d.query_len,
        background_words: cfg.background_words.unwrap_or(d.background_words),
        exclude: vec![cfg.filler.clone().unwrap_or_else(|| DEFAULT_FILLER.into())],
    };
    if params.tf_range.0 > params.tf_range.1 {
        return Err(usage("--tf-min exceeds --tf-max"));
    }
    m.seeds.insert("seed".into(), params.seed);
    let c = synth_corpus(&params, &vocab)?;
    let dir = out_dir(cfg, "synth");
    c.write(&dir)?;
    let mut tf = String::from("docid\tterm\ttf\n");
    for (docid, counts) in &c.term_counts {
        for (term, n) in counts {
            tf.push_str(&format!("{docid}\t{term}\t{n}\n"));
        }
    }
    write_text(&dir.join("term_counts.tsv"), &tf)?;
    println!("{} queries, {} documents -> {}", c.queries.len(), c.docs.len(), dir.display());
    finish(m, &dir)
}

pub fn score(cfg: &ExperimentConfig) -> Result<(), CliError> {
    with_threads(cfg.threads, || {
        let mut m = manifest(cfg, "score");
        let b = load_model(cfg)?;
        hash_model(&mut m, model_dir(cfg)?)?;
        let triples = load_dataset(cfg, &mut m)?;
        use rayon::prelude::*;
        let rows: Vec<(f32, f32)> = triples
            .par_iter()
            .map(|t| -> Result<(f32, f32), CliError> {
                let q = b.model.encode_query(&t.query_ids.ids)?;
                let s = |ids: &[u32]| -> Result<f32, CliError> {
                    Ok(model::score(&q, &b.model.encode(ids, &model::Record::Nothing)?.cls)?)
                };
                Ok((s(&t.baseline_ids.ids)?, s(&t.perturbed_ids.ids)?))
            })
            .collect::<Result<_, _>>()?;
        let mut csv = String::from("id,qid,docid,expected_higher,s_baseline,s_perturbed,s_low,s_high,contradiction,degenerate\n");
        let mut usable = 0;
        for (t, &(sb, sp)) in triples.iter().zip(&rows) {
            if !(sb.is_finite() && sp.is_finite()) {
                return Err(CliError::Numeric(format!("triple {}: non-finite score", t.id)));
            }
            let (low, high) = match t.expected_higher {
                axioms::Side::Perturbed => (sb, sp),
                axioms::Side::Baseline => (sp, sb),
            };
            let degenerate = patching::degenerate(high, low);
            usable += usize::from(!degenerate);
            csv.push_str(&format!(
                "{},{},{},{},{sb:?},{sp:?},{low:?},{high:?},{},{}\n",
                t.id,
                t.qid,
                t.docid,
                match t.expected_higher {
                    axioms::Side::Perturbed => "perturbed",
                    axioms::Side::Baseline => "baseline",
                },
                high < low,
                degenerate
            ));
        }
        let dir = out_dir(cfg, "score");
        write_text(&dir.join("scores.csv"), &csv)?;
        print!("{csv}");
        finish(m, &dir)?;
        if usable == 0 {
            return Err(CliError::Numeric("every triple has a degenerate score gap".into()));
        }
        Ok(())
    })
}

fn site_kind(name: &str) -> Result<HookKind, CliError> {
    match name {
        "heads" => Ok(HookKind::HeadOut),
        other => other.parse::<HookKind>().map_err(|e| usage(e.to_string())),
    }
}

fn site_labels(sites: &[HookSite]) -> Vec<String> {
    sites.iter().map(|s| format!("{}.{}", s.layer, s.head.unwrap_or(0))).collect()
}

/// Matrices for one batch of outcomes.
fn patch_matrices(
    kind: HookKind,
    granularity: &str,
    outcomes: &[PatchOutcome],
    triples: &[DiagnosticTriple],
    cfg: &ModelConfig,
    keep: bool,
    suffix: &str,
) -> Vec<ResultMatrix> {
    let name = |base: &str| format!("{base}{suffix}");
    let types = dataset_types(triples);
    if !kind.per_head() {
        return match granularity {
            "position" => vec![matrix_by_position(&name(&format!("{}_by_position", kind.as_str())), outcomes, cfg.n_layers, keep)],
            _ => vec![matrix_by_type(&name(&format!("{}_by_type", kind.as_str())), outcomes, cfg.n_layers, &types, keep)],
        };
    }
    let base = if kind == HookKind::HeadOut { "heads".to_string() } else { kind.as_str().to_string() };
    let sites: Vec<HookSite> = (0..cfg.n_layers)
        .flat_map(|l| (0..cfg.n_heads).map(move |h| HookSite::head(kind, l, h)))
        .collect();
    let row_of = |o: &PatchOutcome| sites.iter().position(|s| *s == o.site);
    let usable = outcomes.iter().filter(|o| o.usable(keep));
    match granularity {
        "type" => {
            let samples = usable.filter_map(|o| {
                let c = types.iter().position(|t| Some(*t) == o.token_type)?;
                Some((row_of(o)?, c, o.ndiff? as f64))
            });
            vec![ResultMatrix::from_samples(
                &name(&format!("{base}_by_type")),
                "head",
                site_labels(&sites),
                types.iter().map(|t| t.to_string()).collect(),
                samples,
            )]
        }
        "position" => {
            let width = outcomes.iter().filter_map(PatchOutcome::position).max().map_or(0, |m| m + 1);
            let samples = usable.filter_map(|o| Some((row_of(o)?, o.position()?, o.ndiff? as f64)));
            vec![ResultMatrix::from_samples(
                &name(&format!("{base}_by_position")),
                "head",
                site_labels(&sites),
                (0..width).map(|i| i.to_string()).collect(),
                samples,
            )]
        }
        _ => vec![matrix_by_head(&name(&base), outcomes, cfg.n_layers, cfg.n_heads, keep)],
    }
}

pub fn patch(cfg: &ExperimentConfig) -> Result<(), CliError> {
    with_threads(cfg.threads, || {
        let mut m = manifest(cfg, "patch");
        let b = load_model(cfg)?;
        hash_model(&mut m, model_dir(cfg)?)?;
        let triples = load_dataset(cfg, &mut m)?;
        let mc = b.model.config().clone();
        let kind = site_kind(cfg.sites.as_deref().unwrap_or("resid-pre"))?;
        let granularity = cfg
            .granularity
            .clone()
            .unwrap_or_else(|| if kind.per_head() { "site".into() } else { "type".into() });
        let g = match granularity.as_str() {
            "site" if kind.per_head() => Granularity::PerSite,
            "site" => return Err(usage("per-site aggregation needs per-head sites")),
            "type" if kind.per_head() => Granularity::PerSiteAndType,
            "type" | "position" => Granularity::PerSiteAndPosition,
            other => return Err(usage(format!("unknown granularity {other:?} (site, type or position)"))),
        };
        let spec = PatchSpec::new(SiteSelection::sweep(kind), PositionSelector::All, g);
        let source = if cfg.self_patch.unwrap_or(false) { DonorSource::SelfPatch } else { DonorSource::Paired };
        let keep = cfg.keep_contradictions.unwrap_or(false);
        let dir = out_dir(cfg, "patch");

        let mut batches = vec![(String::new(), triples.clone())];
        if let Some(f) = cfg.relevance_split {
            let (top, bottom) = split_by_relevance(&triples, f)?;
            batches.push(("_top".into(), top));
            batches.push(("_bottom".into(), bottom));
        }
        let mut any_usable = false;
        for (suffix, batch) in &batches {
            let outcomes = run_dataset(&b.model, batch, &spec, source)?;
            any_usable |= outcomes.iter().any(|o| o.ndiff.is_some());
            write_text(&dir.join(format!("outcomes{suffix}.jsonl")), &jsonl(&outcomes))?;
            for mat in patch_matrices(kind, &granularity, &outcomes, batch, &mc, keep, suffix) {
                if suffix.is_empty() {
                    print!("{}", mat.to_ascii());
                }
                write_matrix(&dir, &mat)?;
            }
        }
        finish(m, &dir)?;
        if !any_usable {
            return Err(CliError::Numeric("every triple has a degenerate score gap".into()));
        }
        Ok(())
    })
}

pub fn ablate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    with_threads(cfg.threads, || {
        let mut m = manifest(cfg, "ablate");
        let b = load_model(cfg)?;
        hash_model(&mut m, model_dir(cfg)?)?;
        let triples = load_dataset(cfg, &mut m)?;
        let heads = parse_heads(cfg.heads.as_deref(), b.model.config(), HookKind::HeadOut)?;
        let modes = match cfg.ablation_mode.as_deref().unwrap_or("both") {
            "both" => vec![AblationMode::Zero, AblationMode::Mean],
            other => vec![other.parse::<AblationMode>().map_err(usage)?],
        };
        let keep = cfg.keep_contradictions.unwrap_or(false);
        let dir = out_dir(cfg, "ablate");
        let mut side_by_side = String::from("head,n_triples,mean_gap_before,collapse_zero,collapse_mean\n");
        let mut reports = Vec::new();
        for mode in modes {
            let rep = patching::ablate(&b.model, &triples, &heads, mode, keep)?;
            let name = match mode {
                AblationMode::Zero => "zero",
                AblationMode::Mean => "mean",
            };
            write_text(&dir.join(format!("ablation_{name}.csv")), &rep.to_csv())?;
            write_text(&dir.join(format!("ablation_{name}.jsonl")), &jsonl(&rep.triples))?;
            reports.push(rep);
        }
        for h in &heads {
            let get = |mode| {
                reports
                    .iter()
                    .find(|r| r.mode == mode)
                    .and_then(|r| r.row(*h))
            };
            let (z, mn) = (get(AblationMode::Zero), get(AblationMode::Mean));
            let any = z.or(mn).expect("every head has a row");
            let fmt = |r: Option<&patching::AblationRow>| r.map(|r| format!("{:?}", r.collapse)).unwrap_or_default();
            side_by_side.push_str(&format!(
                "{h},{},{:?},{},{}\n",
                any.n_triples,
                any.mean_gap_before,
                fmt(z),
                fmt(mn)
            ));
        }
        write_text(&dir.join("ablation.csv"), &side_by_side)?;
        print!("{side_by_side}");
        finish(m, &dir)
    })
}

pub fn attn(cfg: &ExperimentConfig) -> Result<(), CliError> {
    with_threads(cfg.threads, || {
        let mut m = manifest(cfg, "attn");
        let b = load_model(cfg)?;
        hash_model(&mut m, model_dir(cfg)?)?;
        let triples = load_dataset(cfg, &mut m)?;
        let heads = parse_heads(cfg.heads.as_deref(), b.model.config(), HookKind::AttnPattern)?;
        let from: TokenType = cfg.from_type.as_deref().unwrap_or("inj").parse().map_err(usage)?;
        let weighting = if cfg.per_token_attention.unwrap_or(false) { Weighting::PerToken } else { Weighting::PerRow };
        let rep = attention_by_type(&b.model, &triples, &heads, from, cfg.cohort_split.unwrap_or(false), weighting)?;
        let dir = out_dir(cfg, "attn");
        write_text(&dir.join("attention.csv"), &rep.to_csv())?;
        write_text(
            &dir.join("attention_summary.json"),
            &(serde_json::to_string_pretty(&serde_json::json!({
                "max_row_sum_error": rep.max_row_sum_error,
                "skipped_docs": rep.skipped_docs,
                "cohort_docs": rep.cohort_docs,
            }))
            .expect("serializes")
                + "\n"),
        )?;
        print!("{}", rep.to_csv());
        finish(m, &dir)?;
        if rep.stats.is_empty() {
            return Err(CliError::Data(format!("no document has a {from} position")));
        }
        Ok(())
    })
}

pub fn sweep_position(cfg: &ExperimentConfig) -> Result<(), CliError> {
    with_threads(cfg.threads, || {
        let mut m = manifest(cfg, "sweep-position");
        let b = load_model(cfg)?;
        hash_model(&mut m, model_dir(cfg)?)?;
        let p = perturber(cfg, &b)?;
        let queries_path = cfg.require(&cfg.queries, "queries")?;
        let docs_path = cfg.require(&cfg.corpus, "docs")?;
        let run_path = cfg.require(&cfg.run, "run")?;
        let queries = read_queries(queries_path)?;
        let corpus = read_tsv_corpus(docs_path)?;
        let run = read_run(run_path)?;
        for path in [queries_path, docs_path, run_path] {
            m.add_input(path)?;
        }
        let grid: Vec<f32> = cfg
            .grid
            .as_deref()
            .unwrap_or("0,0.25,0.5,0.75,1")
            .split(',')
            .map(|s| s.trim().parse::<f32>().map_err(|_| usage(format!("bad grid point {s:?}"))))
            .collect::<Result<_, _>>()?;
        let k = cfg.k_docs.unwrap_or(10);
        let seed = cfg.seed.unwrap_or(0);
        m.seeds.insert("seed".into(), seed);
        let docs: HashMap<&str, &axioms::Doc> = corpus.iter().map(|d| (d.docid.as_str(), d)).collect();
        let mut items = Vec::new();
        for (qi, q) in queries.iter().enumerate() {
            let term = match &cfg.term {
                Some(t) => t.clone(),
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(qi as u64);
                    match eligible_terms(&p, &q.text).choose(&mut rng) {
                        Some(t) => t.clone(),
                        None => {
                            log::warn!("query {}: no eligible term, skipped", q.qid);
                            continue;
                        }
                    }
                }
            };
            let mut entries: Vec<_> = run.iter().filter(|e| e.qid == q.qid).collect();
            entries.sort_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.docid.cmp(&b.docid)));
            let qdocs: Vec<axioms::Doc> = entries
                .iter()
                .take(k)
                .filter_map(|e| docs.get(e.docid.as_str()).map(|d| (*d).clone()))
                .collect();
            if qdocs.is_empty() {
                log::warn!("query {}: no candidate documents, skipped", q.qid);
                continue;
            }
            items.push(SweepQuery { query: q.clone(), term, docs: qdocs });
        }
        if items.is_empty() {
            return Err(CliError::Data("no query has both a term and documents".into()));
        }
        let points = position_sweep(&b.model, &p, &items, &grid).map_err(|e| match e {
            analysis::AnalysisError::Invalid(msg) => usage(msg),
            other => other.into(),
        })?;
        let dir = out_dir(cfg, "sweep-position");
        let csv = analysis::sweep_points_csv(&points);
        write_text(&dir.join("position_sweep.csv"), &csv)?;
        write_text(
            &dir.join("position_sweep.json"),
            &(serde_json::to_string_pretty(&points).expect("serializes") + "\n"),
        )?;
        print!("{csv}");
        finish(m, &dir)
    })
}

pub fn report(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let input = cfg.require(&cfg.input, "in")?;
    let format: ReportFormat = cfg.format.as_deref().unwrap_or("svg").parse().map_err(usage)?;
    for p in emit_report(input, format)? {
        println!("{}", p.display());
    }
    Ok(())
}
