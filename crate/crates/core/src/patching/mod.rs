// SPDX-License-Identifier: MIT OR Apache-2.0

//! Three-run activation patching over diagnostic triples.
//!
//! For each triple the expected-higher run is the donor and the
//! expected-lower run the recipient. A patched recipient run scores
//! `s_patched`, and
//!
//! ```text
//! ndiff = (s_patched - s_low) / (s_high - s_low)
//! ```
//!
//! is 0 for no effect and 1 for full recovery of the donor score. It is not
//! clamped.

mod ablate;
mod matrix;

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ablate::{ablate, AblationMode, AblationReport, AblationRow, AblationTriple};
pub use matrix::{stable_mean, CsvError, ResultMatrix};

use crate::axioms::{DiagnosticTriple, Side, TokenType};
use crate::model::{self, ActivationCache, HookKind, HookSite, Model, ModelConfig, ModelError, Patch, Positions, Record};

#[derive(Debug, Error)]
pub enum PatchError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid patch spec: {0}")]
    InvalidSpec(String),
    #[error("triple {id}: baseline has {baseline} tokens, perturbed {perturbed}")]
    UnequalLengths {
        id: String,
        baseline: usize,
        perturbed: usize,
    },
    #[error("no usable triples")]
    EmptyDataset,
    #[error("relevance fraction {0} outside (0, 0.5]")]
    InvalidFraction(f64),
    #[error("triple {0} has no unperturbed score")]
    MissingScore(String),
}

/// Which sites to patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteSelection {
    /// Every layer (or the listed ones) of one kind; per-head kinds expand
    /// over every head (or the listed ones).
    Sweep {
        kind: HookKind,
        #[serde(default)]
        layers: Option<Vec<usize>>,
        #[serde(default)]
        heads: Option<Vec<usize>>,
    },
    List(Vec<HookSite>),
}

impl SiteSelection {
    pub fn sweep(kind: HookKind) -> Self {
        SiteSelection::Sweep {
            kind,
            layers: None,
            heads: None,
        }
    }

    pub fn resolve(&self, cfg: &ModelConfig) -> Result<Vec<HookSite>, PatchError> {
        let sites = match self {
            SiteSelection::List(s) => s.clone(),
            SiteSelection::Sweep { kind, layers, heads } => {
                let layers = layers.clone().unwrap_or_else(|| (0..cfg.n_layers).collect());
                let mut out = Vec::new();
                for l in layers {
                    if kind.per_head() {
                        let heads = heads.clone().unwrap_or_else(|| (0..cfg.n_heads).collect());
                        out.extend(heads.into_iter().map(|h| HookSite::head(*kind, l, h)));
                    } else {
                        out.push(HookSite::new(*kind, l));
                    }
                }
                out
            }
        };
        for s in &sites {
            s.validate(cfg)?;
        }
        if sites.is_empty() {
            return Err(PatchError::InvalidSpec("no sites selected".into()));
        }
        Ok(sites)
    }
}

/// Which recipient positions a patch overwrites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionSelector {
    All,
    Positions(Vec<usize>),
    /// Positions carrying this label in the donor run.
    TokenType(TokenType),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// One patch per site covering every selected position.
    PerSite,
    /// One patch per site and token type present.
    PerSiteAndType,
    /// One patch per site and selected position.
    PerSiteAndPosition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub sites: SiteSelection,
    pub positions: PositionSelector,
    pub granularity: Granularity,
}

impl PatchSpec {
    pub fn new(sites: SiteSelection, positions: PositionSelector, granularity: Granularity) -> Self {
        Self {
            sites,
            positions,
            granularity,
        }
    }
}

/// Where patched rows come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DonorSource {
    /// The expected-higher run.
    Paired,
    /// The recipient's own cache; every outcome must have ndiff 0.
    SelfPatch,
}

/// Positions actually patched by one outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchedPositions {
    All,
    Type(TokenType),
    Position(usize),
    List(Vec<usize>),
}

impl fmt::Display for PatchedPositions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatchedPositions::All => f.write_str("all"),
            PatchedPositions::Type(t) => write!(f, "type:{t}"),
            PatchedPositions::Position(p) => write!(f, "pos:{p}"),
            PatchedPositions::List(l) => {
                let s: Vec<String> = l.iter().map(usize::to_string).collect();
                write!(f, "pos:{}", s.join("+"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchOutcome {
    pub triple_id: String,
    pub qid: String,
    pub site: HookSite,
    pub positions: PatchedPositions,
    /// Donor-run label of the patched position, for single-position and
    /// single-type patches.
    pub token_type: Option<TokenType>,
    pub s_low: f32,
    pub s_high: f32,
    pub s_patched: f32,
    pub ndiff: Option<f32>,
    pub direction_contradiction: bool,
    pub degenerate_denominator: bool,
}

impl PatchOutcome {
    /// Position of a single-position patch.
    pub fn position(&self) -> Option<usize> {
        match self.positions {
            PatchedPositions::Position(p) => Some(p),
            _ => None,
        }
    }

    /// Whether the outcome enters aggregates.
    pub fn usable(&self, keep_contradictions: bool) -> bool {
        self.ndiff.is_some() && (keep_contradictions || !self.direction_contradiction)
    }
}

/// Relative guard on the ndiff denominator.
pub fn degenerate(s_high: f32, s_low: f32) -> bool {
    let (h, l) = (s_high as f64, s_low as f64);
    (h - l).abs() < 1e-6 * h.abs().max(1.0)
}

pub fn ndiff(s_patched: f32, s_low: f32, s_high: f32) -> Option<f32> {
    if degenerate(s_high, s_low) {
        return None;
    }
    let (p, l, h) = (s_patched as f64, s_low as f64, s_high as f64);
    Some(((p - l) / (h - l)) as f32)
}

/// A run of one document with its cache and score.
pub struct Run {
    pub ids: Vec<u32>,
    pub cache: ActivationCache,
    pub score: f32,
}

/// Encodes both documents of a triple, keeping `ResidPre` plus `kinds`.
pub struct TripleRuns {
    pub query: Vec<f32>,
    pub donor: Run,
    pub recipient: Run,
    /// Side of the donor (the expected-higher run).
    pub donor_side: Side,
}

impl TripleRuns {
    pub fn new(model: &Model, triple: &DiagnosticTriple, kinds: &[HookKind]) -> Result<Self, PatchError> {
        if triple.baseline_ids.len() != triple.perturbed_ids.len() {
            return Err(PatchError::UnequalLengths {
                id: triple.id.clone(),
                baseline: triple.baseline_ids.len(),
                perturbed: triple.perturbed_ids.len(),
            });
        }
        let record = Record::kinds(kinds.iter().copied().chain([HookKind::ResidPre]));
        let query = model.encode_query(&triple.query_ids.ids)?;
        let donor_side = triple.expected_higher;
        let run = |side: Side| -> Result<Run, PatchError> {
            let ids = triple.side(side).ids.clone();
            let enc = model.encode(&ids, &record)?;
            let score = model::score(&query, &enc.cls)?;
            Ok(Run {
                ids,
                cache: enc.cache,
                score,
            })
        };
        let donor = run(donor_side)?;
        let recipient = run(donor_side.other())?;
        Ok(Self {
            query,
            donor,
            recipient,
            donor_side,
        })
    }

    pub fn s_high(&self) -> f32 {
        self.donor.score
    }

    pub fn s_low(&self) -> f32 {
        self.recipient.score
    }

    /// Recipient re-scored with `patches` applied.
    pub fn score_patched(&self, model: &Model, patches: &[Patch<'_>]) -> Result<f32, PatchError> {
        let cls = model.encode_with_patches_from(&self.recipient.ids, &self.recipient.cache, patches)?;
        Ok(model::score(&self.query, &cls)?)
    }
}

struct Unit {
    positions: Positions,
    label: PatchedPositions,
    token_type: Option<TokenType>,
}

fn units(spec: &PatchSpec, labels: &[TokenType]) -> Result<Vec<Unit>, PatchError> {
    let n = labels.len();
    let selected: Vec<usize> = match &spec.positions {
        PositionSelector::All => (0..n).collect(),
        PositionSelector::Positions(p) => {
            if let Some(&bad) = p.iter().find(|&&i| i >= n) {
                return Err(PatchError::InvalidSpec(format!("position {bad} outside document of length {n}")));
            }
            p.clone()
        }
        PositionSelector::TokenType(t) => (0..n).filter(|&i| labels[i] == *t).collect(),
    };
    if selected.is_empty() {
        return Ok(Vec::new());
    }
    Ok(match spec.granularity {
        Granularity::PerSite => {
            let (positions, label) = match &spec.positions {
                PositionSelector::All => (Positions::All, PatchedPositions::All),
                _ => (Positions::Only(selected.clone()), PatchedPositions::List(selected.clone())),
            };
            let token_type = match &spec.positions {
                PositionSelector::TokenType(t) => Some(*t),
                _ => None,
            };
            let label = match token_type {
                Some(t) => PatchedPositions::Type(t),
                None => label,
            };
            vec![Unit { positions, label, token_type }]
        }
        Granularity::PerSiteAndType => {
            let types: BTreeSet<TokenType> = selected.iter().map(|&i| labels[i]).collect();
            types
                .into_iter()
                .map(|t| Unit {
                    positions: Positions::Only(selected.iter().copied().filter(|&i| labels[i] == t).collect()),
                    label: PatchedPositions::Type(t),
                    token_type: Some(t),
                })
                .collect()
        }
        Granularity::PerSiteAndPosition => selected
            .into_iter()
            .map(|i| Unit {
                positions: Positions::Only(vec![i]),
                label: PatchedPositions::Position(i),
                token_type: Some(labels[i]),
            })
            .collect(),
    })
}

/// Patches every site and position unit of `spec` into the recipient run of
/// one triple.
pub fn run_triple(
    model: &Model,
    triple: &DiagnosticTriple,
    spec: &PatchSpec,
    source: DonorSource,
) -> Result<Vec<PatchOutcome>, PatchError> {
    let sites = spec.sites.resolve(model.config())?;
    let kinds: Vec<HookKind> = sites.iter().map(|s| s.kind).collect();
    let runs = TripleRuns::new(model, triple, &kinds)?;
    debug_assert_eq!(runs.donor_side.other(), triple.expected_higher.other());
    // Positions align one to one, so label them from the run that carries
    // the term: injected positions (TFC1-I) and removed occurrences (TFC1-R)
    // keep their INJ / QTERM_PLUS label.
    let labels = triple.labels(runs.donor_side);
    let units = units(spec, labels)?;

    let (s_high, s_low) = (runs.s_high(), runs.s_low());
    let contradiction = s_high < s_low;
    let donor_cache = match source {
        DonorSource::Paired => &runs.donor.cache,
        DonorSource::SelfPatch => &runs.recipient.cache,
    };

    let work: Vec<(&HookSite, &Unit)> = sites.iter().flat_map(|s| units.iter().map(move |u| (s, u))).collect();
    work.par_iter()
        .map(|(site, unit)| {
            let donor = donor_cache.require(site)?;
            let patch = Patch::new(**site, unit.positions.clone(), donor);
            let s_patched = runs.score_patched(model, &[patch])?;
            Ok(PatchOutcome {
                triple_id: triple.id.clone(),
                qid: triple.qid.clone(),
                site: **site,
                positions: unit.label.clone(),
                token_type: unit.token_type,
                s_low,
                s_high,
                s_patched,
                ndiff: ndiff(s_patched, s_low, s_high),
                direction_contradiction: contradiction,
                degenerate_denominator: degenerate(s_high, s_low),
            })
        })
        .collect()
}

/// [`run_triple`] over a dataset; outcomes in dataset order.
pub fn run_dataset(
    model: &Model,
    triples: &[DiagnosticTriple],
    spec: &PatchSpec,
    source: DonorSource,
) -> Result<Vec<PatchOutcome>, PatchError> {
    let per: Vec<Vec<PatchOutcome>> = triples
        .par_iter()
        .map(|t| run_triple(model, t, spec, source))
        .collect::<Result<_, _>>()?;
    Ok(per.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Keep triples whose realized order contradicts the expected one.
    pub keep_contradictions: bool,
    pub source: DonorSourceOpt,
}

/// Serializable mirror of [`DonorSource`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DonorSourceOpt {
    #[default]
    Paired,
    SelfPatch,
}

impl From<DonorSourceOpt> for DonorSource {
    fn from(o: DonorSourceOpt) -> Self {
        match o {
            DonorSourceOpt::Paired => DonorSource::Paired,
            DonorSourceOpt::SelfPatch => DonorSource::SelfPatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub outcomes: Vec<PatchOutcome>,
    pub matrix: ResultMatrix,
}

/// Token types that can occur in a dataset.
pub fn dataset_types(triples: &[DiagnosticTriple]) -> Vec<TokenType> {
    if triples.iter().any(|t| t.kind.injects()) {
        TokenType::ALL.to_vec()
    } else {
        TokenType::for_axiom(crate::axioms::Axiom::Tfc1R)
    }
}

fn layer_labels(n: usize) -> Vec<String> {
    (0..n).map(|l| l.to_string()).collect()
}

/// Layer × token-type matrix from single-position or single-type outcomes.
pub fn matrix_by_type(
    name: &str,
    outcomes: &[PatchOutcome],
    n_layers: usize,
    types: &[TokenType],
    keep_contradictions: bool,
) -> ResultMatrix {
    let samples = outcomes.iter().filter(|o| o.usable(keep_contradictions)).filter_map(|o| {
        let c = types.iter().position(|t| Some(*t) == o.token_type)?;
        Some((o.site.layer, c, o.ndiff? as f64))
    });
    ResultMatrix::from_samples(
        name,
        "layer",
        layer_labels(n_layers),
        types.iter().map(|t| t.to_string()).collect(),
        samples,
    )
}

/// Layer × head matrix from per-head outcomes.
pub fn matrix_by_head(
    name: &str,
    outcomes: &[PatchOutcome],
    n_layers: usize,
    n_heads: usize,
    keep_contradictions: bool,
) -> ResultMatrix {
    let samples = outcomes
        .iter()
        .filter(|o| o.usable(keep_contradictions))
        .filter_map(|o| Some((o.site.layer, o.site.head?, o.ndiff? as f64)));
    ResultMatrix::from_samples(name, "layer", layer_labels(n_layers), layer_labels(n_heads), samples)
}

/// Layer × position matrix from single-position outcomes.
pub fn matrix_by_position(
    name: &str,
    outcomes: &[PatchOutcome],
    n_layers: usize,
    keep_contradictions: bool,
) -> ResultMatrix {
    let width = outcomes.iter().filter_map(PatchOutcome::position).max().map_or(0, |m| m + 1);
    let samples = outcomes
        .iter()
        .filter(|o| o.usable(keep_contradictions))
        .filter_map(|o| Some((o.site.layer, o.position()?, o.ndiff? as f64)));
    ResultMatrix::from_samples(name, "layer", layer_labels(n_layers), layer_labels(width), samples)
}

fn check_nonempty(triples: &[DiagnosticTriple]) -> Result<(), PatchError> {
    if triples.is_empty() {
        Err(PatchError::EmptyDataset)
    } else {
        Ok(())
    }
}

/// Patches a non-head site kind per (layer, position) and averages ndiff
/// by token type.
pub fn sweep_residual(
    model: &Model,
    triples: &[DiagnosticTriple],
    kind: HookKind,
    opts: &SweepOptions,
) -> Result<Sweep, PatchError> {
    check_nonempty(triples)?;
    if kind.per_head() {
        return Err(PatchError::InvalidSpec(format!("{} is a per-head site", kind.as_str())));
    }
    let spec = PatchSpec::new(SiteSelection::sweep(kind), PositionSelector::All, Granularity::PerSiteAndPosition);
    let outcomes = run_dataset(model, triples, &spec, opts.source.into())?;
    let matrix = matrix_by_type(
        kind.as_str(),
        &outcomes,
        model.config().n_layers,
        &dataset_types(triples),
        opts.keep_contradictions,
    );
    Ok(Sweep { outcomes, matrix })
}

/// Patches every head's output at all positions.
pub fn sweep_heads(model: &Model, triples: &[DiagnosticTriple], opts: &SweepOptions) -> Result<Sweep, PatchError> {
    check_nonempty(triples)?;
    let spec = PatchSpec::new(SiteSelection::sweep(HookKind::HeadOut), PositionSelector::All, Granularity::PerSite);
    let outcomes = run_dataset(model, triples, &spec, opts.source.into())?;
    let cfg = model.config();
    let matrix = matrix_by_head("heads", &outcomes, cfg.n_layers, cfg.n_heads, opts.keep_contradictions);
    Ok(Sweep { outcomes, matrix })
}

/// Per query, the top and bottom `⌈fraction·K⌉` triples by unperturbed
/// score, `K` being the query's triple count.
pub fn split_by_relevance(
    triples: &[DiagnosticTriple],
    fraction: f64,
) -> Result<(Vec<DiagnosticTriple>, Vec<DiagnosticTriple>), PatchError> {
    if !(fraction > 0.0 && fraction <= 0.5) {
        return Err(PatchError::InvalidFraction(fraction));
    }
    let mut qids: Vec<&str> = Vec::new();
    for t in triples {
        if !qids.contains(&t.qid.as_str()) {
            qids.push(&t.qid);
        }
    }
    let (mut top, mut bottom) = (Vec::new(), Vec::new());
    for qid in qids {
        let mut group: Vec<(f32, &DiagnosticTriple)> = triples
            .iter()
            .filter(|t| t.qid == qid)
            .map(|t| t.original_score.map(|s| (s, t)).ok_or_else(|| PatchError::MissingScore(t.id.clone())))
            .collect::<Result<_, _>>()?;
        group.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(a.1.candidate_rank.cmp(&b.1.candidate_rank))
                .then(a.1.id.cmp(&b.1.id))
        });
        let k = group.len();
        let exact = fraction * k as f64;
        if exact < 1.0 {
            log::warn!("query {qid}: {fraction}·{k} < 1, taking one document per side");
        }
        let n = (exact.ceil() as usize).max(1).min(k);
        top.extend(group[..n].iter().map(|(_, t)| (*t).clone()));
        bottom.extend(group[k - n..].iter().map(|(_, t)| (*t).clone()));
    }
    Ok((top, bottom))
}

/// Runs `f` on a pool of `threads` workers, or the global pool for `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ndiff_endpoints_and_guard() {
        assert_eq!(ndiff(1.0, 1.0, 3.0), Some(0.0));
        assert_eq!(ndiff(3.0, 1.0, 3.0), Some(1.0));
        assert_eq!(ndiff(5.0, 1.0, 3.0), Some(2.0));
        assert_eq!(ndiff(-1.0, 1.0, 3.0), Some(-1.0));
        assert_eq!(ndiff(2.0, 1.0, 1.0 + 5e-7), None);
        // relative guard scales with |s_high|
        assert!(degenerate(1000.0, 1000.0 - 5e-4));
        assert!(!degenerate(1000.0, 1000.0 - 5e-3));
    }

    #[test]
    fn units_by_granularity() {
        use TokenType::*;
        let labels = [Cls, Other, Inj, Inj, Other, Sep];
        let spec = |p, g| PatchSpec::new(SiteSelection::sweep(HookKind::ResidPre), p, g);
        assert_eq!(units(&spec(PositionSelector::All, Granularity::PerSite), &labels).unwrap().len(), 1);
        let by_type = units(&spec(PositionSelector::All, Granularity::PerSiteAndType), &labels).unwrap();
        assert_eq!(by_type.len(), 4);
        assert_eq!(by_type[1].positions, Positions::Only(vec![2, 3]));
        assert_eq!(units(&spec(PositionSelector::All, Granularity::PerSiteAndPosition), &labels).unwrap().len(), 6);
        let inj = units(&spec(PositionSelector::TokenType(Inj), Granularity::PerSite), &labels).unwrap();
        assert_eq!(inj[0].positions, Positions::Only(vec![2, 3]));
        assert_eq!(inj[0].label, PatchedPositions::Type(Inj));
        assert!(units(&spec(PositionSelector::TokenType(QtermPlus), Granularity::PerSite), &labels)
            .unwrap()
            .is_empty());
        assert!(units(&spec(PositionSelector::Positions(vec![6]), Granularity::PerSite), &labels).is_err());
    }
}
