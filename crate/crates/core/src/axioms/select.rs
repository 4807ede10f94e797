// SPDX-License-Identifier: MIT OR Apache-2.0

//! High-impact query selection.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AxiomError, DiagnosticTriple, Doc, Location, PerturbationKind, Perturber, Query, RunEntry};
use crate::model::{self, Model, ModelError, Record};

/// Words never chosen as the selected term.
pub const STOPWORDS: [&str; 33] = [
    "a", "an", "and", "are", "as", "at", "be", "by", "do", "does", "for", "from", "how", "in",
    "is", "it", "of", "on", "or", "that", "the", "this", "to", "was", "what", "when", "where",
    "which", "who", "why", "will", "with", "you",
];

/// Anything that scores a tokenized query against a tokenized document.
pub trait Scorer: Sync {
    fn query_vector(&self, ids: &[u32]) -> Result<Vec<f32>, ModelError>;
    fn doc_score(&self, query: &[f32], doc_ids: &[u32]) -> Result<f32, ModelError>;
}

impl Scorer for Model {
    fn query_vector(&self, ids: &[u32]) -> Result<Vec<f32>, ModelError> {
        self.encode_query(ids)
    }

    fn doc_score(&self, query: &[f32], doc_ids: &[u32]) -> Result<f32, ModelError> {
        model::score(query, &self.encode(doc_ids, &Record::Nothing)?.cls)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationParams {
    pub kind: PerturbationKind,
    /// Candidates perturbed per query.
    pub k_docs: usize,
    /// Queries kept.
    pub n_queries: usize,
    pub seed: u64,
    /// Copies of the term injected per triple (TFC1-I / TFC1-A).
    pub injections: usize,
}

impl Default for CurationParams {
    fn default() -> Self {
        Self {
            kind: PerturbationKind::inject(Location::End),
            k_docs: 10,
            n_queries: 16,
            seed: 0,
            injections: 1,
        }
    }
}

/// Per-query curation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryStat {
    pub qid: String,
    pub selected_term: Option<String>,
    pub n_triples: usize,
    pub mean_abs_delta: Option<f64>,
    pub kept: bool,
    /// Why the query produced nothing, if it did not.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curated {
    /// Triples of the kept queries, in kept order (largest mean first).
    pub triples: Vec<DiagnosticTriple>,
    /// One entry per input query, in input order.
    pub stats: Vec<QueryStat>,
}

/// Seed of one triple, derived from the run seed and its coordinates.
pub fn triple_seed(seed: u64, query_index: usize, rank: usize) -> u64 {
    let mut z = seed
        ^ (query_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (rank as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Query words eligible as the selected term: not a stopword, at least one
/// piece, no unknown pieces. Order follows the query, duplicates removed.
pub fn eligible_terms(perturber: &Perturber<'_>, query: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for w in perturber.query_words(query) {
        if out.contains(&w) || STOPWORDS.contains(&w.as_str()) || w == perturber.filler {
            continue;
        }
        let pieces = perturber.vocab.word_pieces(&w, perturber.mode);
        if pieces.is_empty() || pieces.iter().any(|(id, _)| *id == perturber.vocab.unk_id()) {
            continue;
        }
        out.push(w);
    }
    out
}

struct QueryResult {
    triples: Vec<DiagnosticTriple>,
    stat: QueryStat,
}

/// Builds triples for every query, ranks queries by mean absolute score
/// change and keeps the top `n_queries`.
pub fn select_queries<S: Scorer>(
    scorer: &S,
    perturber: &Perturber<'_>,
    corpus: &[Doc],
    queries: &[Query],
    run: &[RunEntry],
    params: &CurationParams,
) -> Result<Curated, AxiomError> {
    let docs: HashMap<&str, &str> = corpus.iter().map(|d| (d.docid.as_str(), d.text.as_str())).collect();
    let mut by_query: HashMap<&str, Vec<&RunEntry>> = HashMap::new();
    for e in run {
        by_query.entry(e.qid.as_str()).or_default().push(e);
    }
    for list in by_query.values_mut() {
        list.sort_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.docid.cmp(&b.docid)));
    }

    let results: Vec<Result<QueryResult, AxiomError>> = queries
        .par_iter()
        .enumerate()
        .map(|(qi, q)| {
            let cands = by_query.get(q.qid.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            curate_one(scorer, perturber, &docs, qi, q, cands, params)
        })
        .collect();

    let mut results = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    for r in &results {
        if let Some(why) = &r.stat.skipped {
            log::warn!("query {} skipped: {why}", r.stat.qid);
        }
    }

    let mut order: Vec<usize> = (0..results.len())
        .filter(|&i| results[i].stat.mean_abs_delta.is_some())
        .collect();
    order.sort_by(|&a, &b| {
        let (ma, mb) = (results[a].stat.mean_abs_delta.unwrap(), results[b].stat.mean_abs_delta.unwrap());
        mb.total_cmp(&ma).then(a.cmp(&b))
    });
    order.truncate(params.n_queries);

    let mut triples = Vec::new();
    for &i in &order {
        results[i].stat.kept = true;
        triples.append(&mut results[i].triples);
    }
    Ok(Curated {
        triples,
        stats: results.into_iter().map(|r| r.stat).collect(),
    })
}

fn curate_one<S: Scorer>(
    scorer: &S,
    perturber: &Perturber<'_>,
    docs: &HashMap<&str, &str>,
    qi: usize,
    q: &Query,
    cands: &[&RunEntry],
    params: &CurationParams,
) -> Result<QueryResult, AxiomError> {
    let mut stat = QueryStat {
        qid: q.qid.clone(),
        selected_term: None,
        n_triples: 0,
        mean_abs_delta: None,
        kept: false,
        skipped: None,
    };
    let skip = |mut stat: QueryStat, why: &str| {
        stat.skipped = Some(why.to_string());
        Ok(QueryResult { triples: Vec::new(), stat })
    };

    let top: Vec<(&RunEntry, &str)> = cands
        .iter()
        .take(params.k_docs)
        .filter_map(|e| docs.get(e.docid.as_str()).map(|t| (*e, *t)))
        .collect();
    if top.is_empty() {
        return skip(stat, "no candidate documents");
    }

    let mut terms = eligible_terms(perturber, &q.text);
    if !params.kind.injects() {
        terms.retain(|t| {
            top.iter()
                .any(|(_, text)| perturber.query_words(text).contains(t))
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(qi as u64);
    let Some(term) = terms.choose(&mut rng).cloned() else {
        return skip(stat, "no eligible query term");
    };
    stat.selected_term = Some(term.clone());

    let query_ids = crate::tokenizer::tokenize(&q.text, perturber.vocab, perturber.mode);
    let qv = scorer.query_vector(&query_ids.ids)?;

    let mut triples = Vec::new();
    for (rank, (entry, text)) in top.iter().enumerate() {
        let tseed = triple_seed(params.seed, qi, rank);
        let built = if params.kind.injects() {
            let mut trng = ChaCha8Rng::seed_from_u64(tseed);
            perturber.inject(params.kind, &q.text, text, &term, params.injections, tseed, &mut trng)
        } else {
            perturber.replace(&q.text, text, &term, tseed)
        };
        let mut t = match built {
            Ok(t) => t,
            Err(e @ (AxiomError::NotApplicable(_) | AxiomError::TooLong { .. })) => {
                log::debug!("query {} doc {}: {e}", q.qid, entry.docid);
                continue;
            }
            Err(e) => return Err(e),
        };
        t.id = format!("{}:{}", q.qid, entry.docid);
        t.qid = q.qid.clone();
        t.docid = entry.docid.clone();
        t.candidate_rank = Some(rank + 1);
        let original = crate::tokenizer::tokenize(text, perturber.vocab, perturber.mode);
        if original.len() <= perturber.max_positions {
            t.original_score = Some(scorer.doc_score(&qv, &original.ids)?);
        }
        let b = scorer.doc_score(&qv, &t.baseline_ids.ids)?;
        let p = scorer.doc_score(&qv, &t.perturbed_ids.ids)?;
        t.set_scores(b, p);
        triples.push(t);
    }
    if triples.is_empty() {
        return skip(stat, "no applicable candidate documents");
    }
    let mut deltas: Vec<f64> = triples
        .iter()
        .map(|t| (t.perturbed_score.unwrap() as f64 - t.baseline_score.unwrap() as f64).abs())
        .collect();
    deltas.sort_by(f64::total_cmp);
    stat.n_triples = triples.len();
    stat.mean_abs_delta = Some(deltas.iter().sum::<f64>() / deltas.len() as f64);
    Ok(QueryResult { triples, stat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{TokenizerMode, Vocab, CLS, PAD, SEP, UNK};

    /// Scores a document by how many times token `hot` occurs in it.
    struct CountScorer {
        weights: Vec<f32>,
    }

    impl Scorer for CountScorer {
        fn query_vector(&self, _ids: &[u32]) -> Result<Vec<f32>, ModelError> {
            Ok(vec![1.0])
        }
        fn doc_score(&self, q: &[f32], doc: &[u32]) -> Result<f32, ModelError> {
            Ok(q[0] * doc.iter().map(|&i| self.weights[i as usize]).sum::<f32>())
        }
    }

    fn setup() -> (Vocab, CountScorer) {
        let v = Vocab::from_tokens([PAD, UNK, CLS, SEP, "a", "the", "big", "small", "cat", "dog"]).unwrap();
        let mut weights = vec![0.0; v.len()];
        weights[v.id("big").unwrap() as usize] = 4.0;
        weights[v.id("small").unwrap() as usize] = 0.1;
        (v, CountScorer { weights })
    }

    fn corpus() -> (Vec<Doc>, Vec<Query>, Vec<RunEntry>) {
        let doc = |id: &str, t: &str| Doc { docid: id.into(), text: t.into() };
        let docs = vec![doc("d1", "cat dog"), doc("d2", "dog cat cat"), doc("d3", "big cat")];
        let queries = vec![
            Query { qid: "q_small".into(), text: "the small".into() },
            Query { qid: "q_big".into(), text: "the big".into() },
            Query { qid: "q_none".into(), text: "the".into() },
            Query { qid: "q_norun".into(), text: "big".into() },
        ];
        let mut run = Vec::new();
        for q in ["q_small", "q_big", "q_none"] {
            for (r, d) in ["d1", "d2", "d3"].iter().enumerate() {
                run.push(RunEntry { qid: q.into(), docid: d.to_string(), rank: r + 1, score: 0.0, tag: "t".into() });
            }
        }
        (docs, queries, run)
    }

    #[test]
    fn keeps_largest_mean_delta() {
        let (v, scorer) = setup();
        let p = Perturber::new(&v, TokenizerMode::WordPiece, "a", 32).unwrap();
        let (docs, queries, run) = corpus();
        let params = CurationParams { n_queries: 1, k_docs: 2, ..Default::default() };
        let c = select_queries(&scorer, &p, &docs, &queries, &run, &params).unwrap();
        assert_eq!(c.triples.len(), 2);
        assert!(c.triples.iter().all(|t| t.qid == "q_big" && t.selected_term == "big"));
        let big = &c.stats[1];
        assert!(big.kept);
        assert!((big.mean_abs_delta.unwrap() - 4.0).abs() < 1e-6);
        assert!((c.stats[0].mean_abs_delta.unwrap() - 0.1).abs() < 1e-6);
        assert!(!c.stats[0].kept);
        assert!(c.stats[2].skipped.is_some());
        assert!(c.stats[3].skipped.is_some());
        assert_eq!(c.triples[0].candidate_rank, Some(1));
        assert!(!c.triples[0].contradiction);
    }

    #[test]
    fn replace_only_picks_present_terms() {
        let (v, scorer) = setup();
        let p = Perturber::new(&v, TokenizerMode::WordPiece, "a", 32).unwrap();
        let (docs, _, run) = corpus();
        let queries = vec![Query { qid: "q_big".into(), text: "big small".into() }];
        let params = CurationParams { kind: PerturbationKind::replace(), n_queries: 4, k_docs: 3, ..Default::default() };
        let c = select_queries(&scorer, &p, &docs, &queries, &run, &params).unwrap();
        assert_eq!(c.triples.len(), 1);
        assert_eq!(c.triples[0].docid, "d3");
        assert_eq!(c.triples[0].baseline_score, Some(4.0));
        assert_eq!(c.triples[0].perturbed_score, Some(0.0));
    }

    #[test]
    fn deterministic_under_seed() {
        let (v, scorer) = setup();
        let p = Perturber::new(&v, TokenizerMode::WordPiece, "a", 32).unwrap();
        let (docs, queries, run) = corpus();
        let params = CurationParams {
            kind: PerturbationKind::random_inject(),
            seed: 9,
            ..Default::default()
        };
        let a = select_queries(&scorer, &p, &docs, &queries, &run, &params).unwrap();
        let b = select_queries(&scorer, &p, &docs, &queries, &run, &params).unwrap();
        assert_eq!(a, b);
        assert_ne!(triple_seed(9, 0, 1), triple_seed(9, 1, 0));
    }

    #[test]
    fn stopwords_ineligible() {
        let (v, _) = setup();
        let p = Perturber::new(&v, TokenizerMode::WordPiece, "a", 32).unwrap();
        assert_eq!(eligible_terms(&p, "the big the zebra big"), vec!["big".to_string()]);
    }
}
