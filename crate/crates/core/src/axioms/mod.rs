// SPDX-License-Identifier: MIT OR Apache-2.0

//! TFC1 diagnostic triples: perturbation, token-type labeling, query
//! curation and synthetic corpora.

mod io;
mod perturb;
mod select;
mod synth;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{
    read_dataset, read_queries, read_run, read_tsv_corpus, write_dataset, write_queries, write_run,
    write_tsv_corpus, Doc, Query, RunEntry,
};
pub use perturb::{label_positions, label_token_types, Perturber};
pub use select::{eligible_terms, select_queries, triple_seed, CurationParams, Curated, QueryStat, Scorer, STOPWORDS};
pub use synth::{content_words, synth_corpus, SynthCorpus, SynthParams, MIN_CONTENT_WORDS};

use crate::model::ModelError;
use crate::tokenizer::TokenizedText;

#[derive(Debug, Error)]
pub enum AxiomError {
    #[error("{term:?} is not a word of the query {query:?}")]
    NotQueryTerm { term: String, query: String },
    #[error("term {0:?} tokenizes to zero pieces")]
    EmptyTerm(String),
    #[error("perturbed document has {len} tokens, over max_positions {max}")]
    TooLong { len: usize, max: usize },
    #[error("term {0:?} does not occur in the document")]
    NotApplicable(String),
    #[error("filler {0:?} must tokenize to exactly one known piece")]
    BadFiller(String),
    #[error("vocabulary has {found} usable content tokens, need at least {need}")]
    VocabTooSmall { found: usize, need: usize },
    #[error("normalized position {0} outside [0, 1]")]
    BadPosition(f32),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axiom {
    #[serde(rename = "TFC1_I")]
    Tfc1I,
    #[serde(rename = "TFC1_R")]
    Tfc1R,
    #[serde(rename = "TFC1_A")]
    Tfc1A,
}

impl FromStr for Axiom {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "tfc1-i" => Ok(Axiom::Tfc1I),
            "tfc1-r" => Ok(Axiom::Tfc1R),
            "tfc1-a" => Ok(Axiom::Tfc1A),
            _ => Err(format!("unknown axiom {s:?} (expected tfc1-i, tfc1-r or tfc1-a)")),
        }
    }
}

/// Where injected terms go.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    End,
    Begin,
    RandomPosition,
    /// Word index `round(f · n_words)`, `f ∈ [0, 1]`.
    NormalizedPosition(f32),
}

impl FromStr for Location {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "end" => Ok(Location::End),
            "begin" => Ok(Location::Begin),
            "random" => Ok(Location::RandomPosition),
            other => other
                .parse::<f32>()
                .ok()
                .filter(|f| (0.0..=1.0).contains(f))
                .map(Location::NormalizedPosition)
                .ok_or_else(|| format!("unknown location {s:?} (end, begin, random or a number in [0,1])")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationKind {
    pub axiom: Axiom,
    /// Injection location; `None` for TFC1-R.
    pub location: Option<Location>,
}

impl PerturbationKind {
    pub fn inject(location: Location) -> Self {
        Self {
            axiom: Axiom::Tfc1I,
            location: Some(location),
        }
    }

    pub fn replace() -> Self {
        Self {
            axiom: Axiom::Tfc1R,
            location: None,
        }
    }

    pub fn random_inject() -> Self {
        Self {
            axiom: Axiom::Tfc1A,
            location: Some(Location::RandomPosition),
        }
    }

    /// Canonical form: TFC1-R carries no location, TFC1-A always injects at
    /// a random position.
    pub fn new(axiom: Axiom, location: Location) -> Self {
        match axiom {
            Axiom::Tfc1I => Self::inject(location),
            Axiom::Tfc1R => Self::replace(),
            Axiom::Tfc1A => Self::random_inject(),
        }
    }

    pub fn expected_higher(&self) -> Side {
        match self.axiom {
            Axiom::Tfc1I | Axiom::Tfc1A => Side::Perturbed,
            Axiom::Tfc1R => Side::Baseline,
        }
    }

    pub fn injects(&self) -> bool {
        self.axiom != Axiom::Tfc1R
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Baseline,
    Perturbed,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Baseline => Side::Perturbed,
            Side::Perturbed => Side::Baseline,
        }
    }
}

/// Token-type label of a document position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TokenType {
    #[serde(rename = "CLS")]
    Cls,
    #[serde(rename = "INJ")]
    Inj,
    #[serde(rename = "QTERM_PLUS")]
    QtermPlus,
    #[serde(rename = "QTERM_MINUS")]
    QtermMinus,
    #[serde(rename = "OTHER")]
    Other,
    #[serde(rename = "SEP")]
    Sep,
}

impl TokenType {
    pub const ALL: [TokenType; 6] = [
        TokenType::Cls,
        TokenType::Inj,
        TokenType::QtermPlus,
        TokenType::QtermMinus,
        TokenType::Other,
        TokenType::Sep,
    ];

    /// Types present in documents of an axiom family.
    pub fn for_axiom(axiom: Axiom) -> Vec<TokenType> {
        match axiom {
            Axiom::Tfc1R => Self::ALL
                .into_iter()
                .filter(|t| *t != TokenType::Inj)
                .collect(),
            _ => Self::ALL.to_vec(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TokenType::Cls => "CLS",
            TokenType::Inj => "INJ",
            TokenType::QtermPlus => "QTERM_PLUS",
            TokenType::QtermMinus => "QTERM_MINUS",
            TokenType::Other => "OTHER",
            TokenType::Sep => "SEP",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TokenType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TokenType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_uppercase().replace('-', "_");
        let norm = match norm.as_str() {
            "QTERM+" => "QTERM_PLUS".to_string(),
            "QTERM-" => "QTERM_MINUS".to_string(),
            _ => norm,
        };
        TokenType::ALL
            .into_iter()
            .find(|t| t.as_str() == norm)
            .ok_or_else(|| format!("unknown token type {s:?}"))
    }
}

/// Where a document position came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Special,
    Original,
    Injected,
    Filler,
}

/// A query with a baseline and a perturbed document of equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticTriple {
    pub id: String,
    pub qid: String,
    pub docid: String,
    pub query_text: String,
    pub query_ids: TokenizedText,
    pub baseline_ids: TokenizedText,
    pub perturbed_ids: TokenizedText,
    pub baseline_origin: Vec<Origin>,
    pub perturbed_origin: Vec<Origin>,
    pub selected_term: String,
    pub selected_term_pieces: Vec<u32>,
    pub kind: PerturbationKind,
    pub expected_higher: Side,
    pub token_types_baseline: Vec<TokenType>,
    pub token_types_perturbed: Vec<TokenType>,
    /// Rank of the source document in the candidate list, if curated.
    #[serde(default)]
    pub candidate_rank: Option<usize>,
    /// Score of the unperturbed source document.
    #[serde(default)]
    pub original_score: Option<f32>,
    #[serde(default)]
    pub baseline_score: Option<f32>,
    #[serde(default)]
    pub perturbed_score: Option<f32>,
    /// Realized score order contradicts `expected_higher`.
    #[serde(default)]
    pub contradiction: bool,
    pub seed: u64,
}

impl DiagnosticTriple {
    pub fn side(&self, side: Side) -> &TokenizedText {
        match side {
            Side::Baseline => &self.baseline_ids,
            Side::Perturbed => &self.perturbed_ids,
        }
    }

    pub fn labels(&self, side: Side) -> &[TokenType] {
        match side {
            Side::Baseline => &self.token_types_baseline,
            Side::Perturbed => &self.token_types_perturbed,
        }
    }

    /// Whether the source document already contained the selected term.
    pub fn original_has_term(&self) -> bool {
        let (ids, origin) = match self.kind.axiom {
            Axiom::Tfc1R => (&self.baseline_ids, &self.baseline_origin),
            _ => (&self.perturbed_ids, &self.perturbed_origin),
        };
        ids.words
            .iter()
            .zip(&ids.word_spans)
            .any(|(w, &(s, _))| origin[s] == Origin::Original && *w == self.selected_term)
    }

    /// Records realized scores and sets the contradiction flag.
    pub fn set_scores(&mut self, baseline: f32, perturbed: f32) {
        self.baseline_score = Some(baseline);
        self.perturbed_score = Some(perturbed);
        self.contradiction = match self.expected_higher {
            Side::Perturbed => perturbed < baseline,
            Side::Baseline => baseline < perturbed,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names() {
        assert_eq!("tfc1-i".parse::<Axiom>().unwrap(), Axiom::Tfc1I);
        assert_eq!("TFC1_R".parse::<Axiom>().unwrap(), Axiom::Tfc1R);
        assert_eq!("0.25".parse::<Location>().unwrap(), Location::NormalizedPosition(0.25));
        assert!("1.5".parse::<Location>().is_err());
        assert_eq!("inj".parse::<TokenType>().unwrap(), TokenType::Inj);
        assert_eq!("qterm+".parse::<TokenType>().unwrap(), TokenType::QtermPlus);
    }

    #[test]
    fn canonical_kinds() {
        assert_eq!(PerturbationKind::new(Axiom::Tfc1R, Location::Begin).location, None);
        assert_eq!(
            PerturbationKind::new(Axiom::Tfc1A, Location::End).location,
            Some(Location::RandomPosition)
        );
        assert_eq!(PerturbationKind::replace().expected_higher(), Side::Baseline);
        assert_eq!(PerturbationKind::random_inject().expected_higher(), Side::Perturbed);
        assert_eq!(TokenType::for_axiom(Axiom::Tfc1R).len(), 5);
        assert_eq!(TokenType::for_axiom(Axiom::Tfc1I).len(), 6);
    }

    #[test]
    fn kind_serializes_compactly() {
        let k = PerturbationKind::inject(Location::NormalizedPosition(0.5));
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(s, r#"{"axiom":"TFC1_I","location":{"normalized_position":0.5}}"#);
        assert_eq!(serde_json::from_str::<PerturbationKind>(&s).unwrap(), k);
    }
}
