// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::Rng;

use super::{AxiomError, DiagnosticTriple, Location, Origin, PerturbationKind, Side, TokenType};
use crate::tokenizer::{self, TokenizedText, TokenizerMode, Vocab};

/// Builds TFC1 triples against a fixed vocabulary and tokenizer mode.
#[derive(Debug, Clone)]
pub struct Perturber<'v> {
    pub vocab: &'v Vocab,
    pub mode: TokenizerMode,
    pub filler: String,
    pub max_positions: usize,
}

type Words = Vec<(String, Vec<(u32, String)>)>;

impl<'v> Perturber<'v> {
    pub fn new(vocab: &'v Vocab, mode: TokenizerMode, filler: &str, max_positions: usize) -> Result<Self, AxiomError> {
        let p = Self {
            vocab,
            mode,
            filler: filler.to_lowercase(),
            max_positions,
        };
        p.filler_piece()?;
        Ok(p)
    }

    fn filler_piece(&self) -> Result<(u32, String), AxiomError> {
        match self.vocab.word_pieces(&self.filler, self.mode).as_slice() {
            [(id, piece)] if *id != self.vocab.unk_id() => Ok((*id, piece.clone())),
            _ => Err(AxiomError::BadFiller(self.filler.clone())),
        }
    }

    fn filler_words(&self, n: usize) -> Result<Words, AxiomError> {
        let piece = self.filler_piece()?;
        Ok((0..n).map(|_| (self.filler.clone(), vec![piece.clone()])).collect())
    }

    pub fn query_words(&self, query: &str) -> Vec<String> {
        tokenizer::normalize_words(query, self.mode)
    }

    /// Pieces of a single term word.
    pub fn term_pieces(&self, term: &str) -> Result<(String, Vec<(u32, String)>), AxiomError> {
        let words = tokenizer::normalize_words(term, self.mode);
        let [word] = words.as_slice() else {
            return Err(AxiomError::EmptyTerm(term.to_string()));
        };
        let pieces = self.vocab.word_pieces(word, self.mode);
        if pieces.is_empty() {
            return Err(AxiomError::EmptyTerm(term.to_string()));
        }
        Ok((word.clone(), pieces))
    }

    fn check_term(&self, query: &str, term: &str) -> Result<(String, Vec<(u32, String)>), AxiomError> {
        let (word, pieces) = self.term_pieces(term)?;
        if !self.query_words(query).contains(&word) {
            return Err(AxiomError::NotQueryTerm {
                term: term.to_string(),
                query: query.to_string(),
            });
        }
        Ok((word, pieces))
    }

    fn check_len(&self, t: &TokenizedText) -> Result<(), AxiomError> {
        if t.len() > self.max_positions {
            return Err(AxiomError::TooLong {
                len: t.len(),
                max: self.max_positions,
            });
        }
        Ok(())
    }

    /// Word index at which `location` inserts into a document of `n_words`.
    pub fn insertion_index<R: Rng>(location: Location, n_words: usize, rng: &mut R) -> Result<usize, AxiomError> {
        Ok(match location {
            Location::End => n_words,
            Location::Begin => 0,
            Location::RandomPosition => rng.gen_range(0..=n_words),
            Location::NormalizedPosition(f) => {
                if !(0.0..=1.0).contains(&f) {
                    return Err(AxiomError::BadPosition(f));
                }
                ((f as f64 * n_words as f64).round() as usize).min(n_words)
            }
        })
    }

    /// TFC1-I / TFC1-A: inserts `copies` of the term at `location` in the
    /// perturbed document and as many filler pieces at the same place in the
    /// baseline.
    #[allow(clippy::too_many_arguments)]
    pub fn inject<R: Rng>(
        &self,
        kind: PerturbationKind,
        query: &str,
        doc: &str,
        term: &str,
        copies: usize,
        seed: u64,
        rng: &mut R,
    ) -> Result<DiagnosticTriple, AxiomError> {
        let location = kind.location.unwrap_or(Location::End);
        let (word, pieces) = self.check_term(query, term)?;
        let original = tokenizer::tokenize(doc, self.vocab, self.mode);
        let words = original.word_pieces();
        let at = Self::insertion_index(location, words.len(), rng)?;

        let inserted: Words = (0..copies).map(|_| (word.clone(), pieces.clone())).collect();
        let fillers = self.filler_words(pieces.len() * copies)?;

        let (perturbed, perturbed_origin) = self.splice(&words, at..at, inserted, Origin::Injected);
        let (baseline, baseline_origin) = self.splice(&words, at..at, fillers, Origin::Filler);
        self.check_len(&perturbed)?;
        self.check_len(&baseline)?;

        Ok(self.finish(
            kind, query, word, pieces, baseline, baseline_origin, perturbed, perturbed_origin, seed,
        ))
    }

    /// TFC1-R: replaces every occurrence of the term with piece-count matched
    /// filler; the original document is the baseline.
    pub fn replace(&self, query: &str, doc: &str, term: &str, seed: u64) -> Result<DiagnosticTriple, AxiomError> {
        let (word, pieces) = self.check_term(query, term)?;
        let original = tokenizer::tokenize(doc, self.vocab, self.mode);
        self.check_len(&original)?;
        let words = original.word_pieces();
        if !words.iter().any(|(w, _)| *w == word) {
            return Err(AxiomError::NotApplicable(word));
        }
        let filler = self.filler_piece()?;
        let mut replaced = Vec::with_capacity(words.len());
        let mut origin_per_word = Vec::with_capacity(words.len());
        for (w, wp) in &words {
            if *w == word {
                for _ in 0..wp.len() {
                    replaced.push((self.filler.clone(), vec![filler.clone()]));
                    origin_per_word.push(Origin::Filler);
                }
            } else {
                replaced.push((w.clone(), wp.clone()));
                origin_per_word.push(Origin::Original);
            }
        }
        let perturbed = TokenizedText::from_words(self.vocab, replaced);
        let perturbed_origin = expand_origin(&perturbed, &origin_per_word);
        let baseline_origin = expand_origin(&original, &vec![Origin::Original; words.len()]);
        Ok(self.finish(
            PerturbationKind::replace(),
            query,
            word,
            pieces,
            original,
            baseline_origin,
            perturbed,
            perturbed_origin,
            seed,
        ))
    }

    fn splice(
        &self,
        words: &Words,
        at: std::ops::Range<usize>,
        insert: Words,
        origin: Origin,
    ) -> (TokenizedText, Vec<Origin>) {
        let mut out = words.clone();
        let n_ins = insert.len();
        out.splice(at.clone(), insert);
        let mut word_origin = vec![Origin::Original; out.len()];
        for o in &mut word_origin[at.start..at.start + n_ins] {
            *o = origin;
        }
        let t = TokenizedText::from_words(self.vocab, out);
        let origin = expand_origin(&t, &word_origin);
        (t, origin)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        kind: PerturbationKind,
        query: &str,
        term: String,
        pieces: Vec<(u32, String)>,
        baseline: TokenizedText,
        baseline_origin: Vec<Origin>,
        perturbed: TokenizedText,
        perturbed_origin: Vec<Origin>,
        seed: u64,
    ) -> DiagnosticTriple {
        let query_words = self.query_words(query);
        let token_types_baseline = label_positions(&baseline, &baseline_origin, &term, &query_words);
        let token_types_perturbed = label_positions(&perturbed, &perturbed_origin, &term, &query_words);
        DiagnosticTriple {
            id: String::new(),
            qid: String::new(),
            docid: String::new(),
            query_text: query.to_string(),
            query_ids: tokenizer::tokenize(query, self.vocab, self.mode),
            baseline_ids: baseline,
            perturbed_ids: perturbed,
            baseline_origin,
            perturbed_origin,
            selected_term: term,
            selected_term_pieces: pieces.into_iter().map(|(id, _)| id).collect(),
            kind,
            expected_higher: kind.expected_higher(),
            token_types_baseline,
            token_types_perturbed,
            candidate_rank: None,
            original_score: None,
            baseline_score: None,
            perturbed_score: None,
            contradiction: false,
            seed,
        }
    }
}

fn expand_origin(t: &TokenizedText, per_word: &[Origin]) -> Vec<Origin> {
    let mut out = vec![Origin::Special; t.len()];
    for (&(s, e), &o) in t.word_spans.iter().zip(per_word) {
        for slot in &mut out[s..e] {
            *slot = o;
        }
    }
    out
}

/// Labels every position of one document.
pub fn label_positions(
    t: &TokenizedText,
    origin: &[Origin],
    selected_term: &str,
    query_words: &[String],
) -> Vec<TokenType> {
    let mut out = vec![TokenType::Other; t.len()];
    if let Some(first) = out.first_mut() {
        *first = TokenType::Cls;
    }
    if let Some(last) = out.last_mut() {
        *last = TokenType::Sep;
    }
    for (word, &(s, e)) in t.words.iter().zip(&t.word_spans) {
        let label = match origin[s] {
            Origin::Injected => TokenType::Inj,
            Origin::Filler | Origin::Special => TokenType::Other,
            Origin::Original if word == selected_term => TokenType::QtermPlus,
            Origin::Original if query_words.contains(word) => TokenType::QtermMinus,
            Origin::Original => TokenType::Other,
        };
        for slot in &mut out[s..e] {
            *slot = label;
        }
    }
    out
}

/// Recomputes `(baseline, perturbed)` labels of a triple.
pub fn label_token_types(triple: &DiagnosticTriple, mode: TokenizerMode) -> (Vec<TokenType>, Vec<TokenType>) {
    let qw = tokenizer::normalize_words(&triple.query_text, mode);
    let label = |side: Side| {
        let (t, o) = match side {
            Side::Baseline => (&triple.baseline_ids, &triple.baseline_origin),
            Side::Perturbed => (&triple.perturbed_ids, &triple.perturbed_origin),
        };
        label_positions(t, o, &triple.selected_term, &qw)
    };
    (label(Side::Baseline), label(Side::Perturbed))
}
