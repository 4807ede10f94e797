// SPDX-License-Identifier: MIT OR Apache-2.0

//! Attention statistics by token type, injection-position sweeps and
//! report emission.

mod report;

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{emit_report, git_blob_hash, hash_file, write_matrix, Manifest, ReportFormat};

use crate::axioms::{AxiomError, DiagnosticTriple, Doc, Location, PerturbationKind, Perturber, Query, Side, TokenType};
use crate::model::{self, HookKind, HookSite, Model, ModelError, Record};
use crate::patching::stable_mean;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Axiom(#[from] AxiomError),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    All,
    HasExistingOccurrence,
    NoExistingOccurrence,
}

impl Cohort {
    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::All => "all",
            Cohort::HasExistingOccurrence => "has_existing_occurrence",
            Cohort::NoExistingOccurrence => "no_existing_occurrence",
        }
    }
}

/// How a row's mass on a destination type is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Total mass on the type.
    #[default]
    PerRow,
    /// Mass on the type divided by the number of its tokens.
    PerToken,
}

impl FromStr for Weighting {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "per-row" => Ok(Weighting::PerRow),
            "per-token" => Ok(Weighting::PerToken),
            _ => Err(format!("unknown weighting {s:?} (per-row or per-token)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionStats {
    pub head: HookSite,
    pub from_type: TokenType,
    pub to_type: TokenType,
    pub cohort: Cohort,
    pub mean_attention: f64,
    /// Source rows averaged.
    pub n_pairs: usize,
    /// Documents contributing rows.
    pub n_docs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    pub stats: Vec<AttentionStats>,
    /// Largest `|Σ_type mass − 1|` over every source row inspected.
    pub max_row_sum_error: f64,
    /// Per cohort, documents without any `from_type` row.
    pub skipped_docs: Vec<(Cohort, usize)>,
    /// Per cohort, documents inspected.
    pub cohort_docs: Vec<(Cohort, usize)>,
}

impl AttentionReport {
    pub fn get(&self, head: HookSite, to: TokenType, cohort: Cohort) -> Option<&AttentionStats> {
        self.stats
            .iter()
            .find(|s| s.head == head && s.to_type == to && s.cohort == cohort)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("head,from_type,to_type,cohort,mean_attention,n_pairs,n_docs\n");
        for r in &self.stats {
            s.push_str(&format!(
                "{},{},{},{},{:?},{},{}\n",
                r.head,
                r.from_type,
                r.to_type,
                r.cohort.as_str(),
                r.mean_attention,
                r.n_pairs,
                r.n_docs
            ));
        }
        s
    }
}

/// Attention mass of row `i` on each token type, indexed by
/// [`TokenType::index`].
pub fn row_type_masses(row: &[f32], labels: &[TokenType]) -> [f64; 6] {
    let mut m = [0.0f64; 6];
    for (p, l) in row.iter().zip(labels) {
        m[l.index()] += *p as f64;
    }
    m
}

/// Reads the `AttnPattern` rows of `from_type` positions in each triple's
/// perturbed run and averages the mass landing on every destination type.
pub fn attention_by_type(
    model: &Model,
    triples: &[DiagnosticTriple],
    heads: &[HookSite],
    from_type: TokenType,
    cohort_split: bool,
    weighting: Weighting,
) -> Result<AttentionReport, AnalysisError> {
    for h in heads {
        if h.kind != HookKind::AttnPattern {
            return Err(AnalysisError::Invalid(format!("{h} is not an attn_pattern site")));
        }
        h.validate(model.config())?;
    }
    let record = Record::sites(heads.iter().copied());

    // per triple: (cohort, per head: list of (row masses, present types))
    type Rows = Vec<([f64; 6], [bool; 6])>;
    let per_triple: Vec<(Cohort, Vec<Rows>)> = triples
        .par_iter()
        .map(|t| -> Result<_, AnalysisError> {
            let cohort = if !cohort_split {
                Cohort::All
            } else if t.original_has_term() {
                Cohort::HasExistingOccurrence
            } else {
                Cohort::NoExistingOccurrence
            };
            let labels = t.labels(Side::Perturbed);
            let enc = model.encode(&t.perturbed_ids.ids, &record)?;
            let mut present = [false; 6];
            let mut counts = [0usize; 6];
            for l in labels {
                present[l.index()] = true;
                counts[l.index()] += 1;
            }
            let mut per_head = Vec::with_capacity(heads.len());
            for h in heads {
                let pat = enc.cache.require(h)?;
                let rows: Rows = (0..labels.len())
                    .filter(|&i| labels[i] == from_type)
                    .map(|i| (row_type_masses(pat.row(i), labels), present))
                    .collect();
                per_head.push(rows);
            }
            Ok((cohort, per_head.into_iter().map(|r| weight(r, &counts, weighting)).collect()))
        })
        .collect::<Result<_, _>>()?;

    let cohorts: Vec<Cohort> = if cohort_split {
        vec![Cohort::HasExistingOccurrence, Cohort::NoExistingOccurrence]
    } else {
        vec![Cohort::All]
    };

    let mut max_err = 0.0f64;
    let mut stats = Vec::new();
    let mut skipped = Vec::new();
    let mut cohort_docs = Vec::new();
    for &cohort in &cohorts {
        let docs: Vec<&Vec<Rows>> = per_triple.iter().filter(|(c, _)| *c == cohort).map(|(_, r)| r).collect();
        cohort_docs.push((cohort, docs.len()));
        skipped.push((cohort, docs.iter().filter(|d| d.first().is_none_or(Vec::is_empty)).count()));
        for (hi, head) in heads.iter().enumerate() {
            for to in TokenType::ALL {
                let mut vals = Vec::new();
                let mut n_docs = 0;
                for d in &docs {
                    let before = vals.len();
                    for (masses, present) in &d[hi] {
                        if present[to.index()] {
                            vals.push(masses[to.index()]);
                        }
                    }
                    n_docs += usize::from(vals.len() > before);
                }
                let n = vals.len();
                if let Some(mean) = stable_mean(&mut vals) {
                    stats.push(AttentionStats {
                        head: *head,
                        from_type,
                        to_type: to,
                        cohort,
                        mean_attention: mean,
                        n_pairs: n,
                        n_docs,
                    });
                }
            }
        }
    }
    if weighting == Weighting::PerRow {
        for (_, per_head) in &per_triple {
            for rows in per_head {
                for (m, _) in rows {
                    max_err = max_err.max((m.iter().sum::<f64>() - 1.0).abs());
                }
            }
        }
    }
    Ok(AttentionReport {
        stats,
        max_row_sum_error: max_err,
        skipped_docs: skipped,
        cohort_docs,
    })
}

fn weight(
    rows: Vec<([f64; 6], [bool; 6])>,
    counts: &[usize; 6],
    weighting: Weighting,
) -> Vec<([f64; 6], [bool; 6])> {
    match weighting {
        Weighting::PerRow => rows,
        Weighting::PerToken => rows
            .into_iter()
            .map(|(mut m, p)| {
                for (v, &c) in m.iter_mut().zip(counts) {
                    if c > 0 {
                        *v /= c as f64;
                    }
                }
                (m, p)
            })
            .collect(),
    }
}

/// One query of a position sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepQuery {
    pub query: Query,
    pub term: String,
    pub docs: Vec<Doc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionSweepPoint {
    pub normalized_position: f32,
    pub mean_score: f64,
    pub n_docs: usize,
    /// Documents skipped for exceeding `max_positions` after injection.
    pub skipped: usize,
}

/// Injects each query's term at word index `round(f · n_words)` for every
/// grid point `f`, averaging scores over documents per query and then over
/// queries.
pub fn position_sweep(
    model: &Model,
    perturber: &Perturber<'_>,
    queries: &[SweepQuery],
    grid: &[f32],
) -> Result<Vec<PositionSweepPoint>, AnalysisError> {
    if grid.is_empty() {
        return Err(AnalysisError::Invalid("empty position grid".into()));
    }
    if let Some(f) = grid.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(AnalysisError::Invalid(format!("grid point {f} outside [0, 1]")));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f32::total_cmp);
    grid.dedup();

    let qvecs: Vec<Vec<f32>> = queries
        .iter()
        .map(|q| {
            let ids = crate::tokenizer::tokenize(&q.query.text, perturber.vocab, perturber.mode);
            model.encode_query(&ids.ids)
        })
        .collect::<Result<_, _>>()?;

    grid.par_iter()
        .map(|&f| {
            let kind = PerturbationKind::inject(Location::NormalizedPosition(f));
            let mut per_query = Vec::new();
            let (mut n_docs, mut skipped) = (0, 0);
            for (q, qv) in queries.iter().zip(&qvecs) {
                let mut scores = Vec::new();
                for d in &q.docs {
                    // deterministic placement needs no randomness
                    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
                    match perturber.inject(kind, &q.query.text, &d.text, &q.term, 1, 0, &mut rng) {
                        Ok(t) => {
                            let cls = model.encode(&t.perturbed_ids.ids, &Record::Nothing)?.cls;
                            scores.push(model::score(qv, &cls)? as f64);
                        }
                        Err(AxiomError::TooLong { .. }) => skipped += 1,
                        Err(e) => return Err(e.into()),
                    }
                }
                n_docs += scores.len();
                if let Some(m) = stable_mean(&mut scores) {
                    per_query.push(m);
                }
            }
            Ok(PositionSweepPoint {
                normalized_position: f,
                mean_score: stable_mean(&mut per_query).unwrap_or(f64::NAN),
                n_docs,
                skipped,
            })
        })
        .collect()
}

pub fn sweep_points_csv(points: &[PositionSweepPoint]) -> String {
    let mut s = String::from("normalized_position,mean_score,n_docs,skipped\n");
    for p in points {
        s.push_str(&format!(
            "{:?},{:?},{},{}\n",
            p.normalized_position, p.mean_score, p.n_docs, p.skipped
        ));
    }
    s
}
