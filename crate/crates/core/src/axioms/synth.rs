// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded synthetic corpora with controlled query-term frequencies.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::select::STOPWORDS;
use super::{write_queries, write_run, write_tsv_corpus, AxiomError, Doc, Query, RunEntry};
use crate::tokenizer::{Vocab, CONTINUATION};

/// Minimum number of usable content words.
pub const MIN_CONTENT_WORDS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub seed: u64,
    pub n_queries: usize,
    pub n_docs_per_query: usize,
    /// Inclusive range of occurrences per query word per document.
    pub tf_range: (usize, usize),
    /// Inclusive range of query lengths in words.
    pub query_len: (usize, usize),
    /// Distinct non-query words per document.
    pub background_words: usize,
    /// Words never used (the filler, typically).
    pub exclude: Vec<String>,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 0,
            n_queries: 16,
            n_docs_per_query: 10,
            tf_range: (0, 3),
            query_len: (2, 4),
            background_words: 12,
            exclude: vec!["a".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCorpus {
    pub docs: Vec<Doc>,
    pub queries: Vec<Query>,
    pub run: Vec<RunEntry>,
    /// Per document, the occurrence count of each query word in query order.
    pub term_counts: BTreeMap<String, Vec<(String, usize)>>,
}

impl SynthCorpus {
    /// Writes `corpus.tsv`, `queries.tsv` and `run.trec` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), AxiomError> {
        write_tsv_corpus(&dir.join("corpus.tsv"), &self.docs)?;
        write_queries(&dir.join("queries.tsv"), &self.queries)?;
        write_run(&dir.join("run.trec"), &self.run)
    }
}

/// Vocabulary words usable in synthetic text: whole-word, non-special,
/// alphabetic, not a stopword, not excluded.
pub fn content_words(vocab: &Vocab, exclude: &[String]) -> Vec<String> {
    vocab
        .tokens()
        .iter()
        .enumerate()
        .filter(|(id, t)| {
            !vocab.is_special(*id as u32)
                && !t.starts_with(CONTINUATION)
                && t.chars().all(|c| c.is_alphabetic())
                && !STOPWORDS.contains(&t.as_str())
                && !exclude.contains(t)
        })
        .map(|(_, t)| t.clone())
        .collect()
}

pub fn synth_corpus(params: &SynthParams, vocab: &Vocab) -> Result<SynthCorpus, AxiomError> {
    let words = content_words(vocab, &params.exclude);
    if words.len() < MIN_CONTENT_WORDS {
        return Err(AxiomError::VocabTooSmall {
            found: words.len(),
            need: MIN_CONTENT_WORDS,
        });
    }
    let (qmin, qmax) = params.query_len;
    let (tmin, tmax) = params.tf_range;
    if qmin == 0 || qmin > qmax || tmin > tmax || qmax + params.background_words > words.len() {
        return Err(AxiomError::VocabTooSmall {
            found: words.len(),
            need: qmax + params.background_words,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut out = SynthCorpus {
        docs: Vec::new(),
        queries: Vec::new(),
        run: Vec::new(),
        term_counts: BTreeMap::new(),
    };
    for qi in 0..params.n_queries {
        let qid = format!("q{qi}");
        let n_terms = rng.gen_range(qmin..=qmax);
        let mut shuffled = words.clone();
        shuffled.shuffle(&mut rng);
        let (terms, rest) = shuffled.split_at(n_terms);
        out.queries.push(Query {
            qid: qid.clone(),
            text: terms.join(" "),
        });

        let mut ranked = Vec::new();
        for di in 0..params.n_docs_per_query {
            let docid = format!("{qid}_d{di}");
            let mut doc_words: Vec<&str> = rest
                .choose_multiple(&mut rng, params.background_words)
                .map(String::as_str)
                .collect();
            let mut counts = Vec::with_capacity(n_terms);
            for t in terms {
                let tf = rng.gen_range(tmin..=tmax);
                doc_words.extend(std::iter::repeat_n(t.as_str(), tf));
                counts.push((t.clone(), tf));
            }
            doc_words.shuffle(&mut rng);
            let total: usize = counts.iter().map(|c| c.1).sum();
            ranked.push((total, di, docid.clone()));
            out.docs.push(Doc {
                docid: docid.clone(),
                text: doc_words.join(" "),
            });
            out.term_counts.insert(docid, counts);
        }
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for (rank, (total, _, docid)) in ranked.into_iter().enumerate() {
            out.run.push(RunEntry {
                qid: qid.clone(),
                docid,
                rank: rank + 1,
                score: total as f32,
                tag: "synth".into(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyforge::ToySpec;

    fn vocab() -> Vocab {
        Vocab::from_tokens(ToySpec::default().vocab_tokens()).unwrap()
    }

    #[test]
    fn honors_requested_tf() {
        let v = vocab();
        let c = synth_corpus(&SynthParams { seed: 3, ..Default::default() }, &v).unwrap();
        assert_eq!(c.queries.len(), 16);
        assert_eq!(c.docs.len(), 160);
        assert_eq!(c.run.len(), 160);
        for d in &c.docs {
            let words: Vec<&str> = d.text.split(' ').collect();
            for (term, tf) in &c.term_counts[&d.docid] {
                assert_eq!(words.iter().filter(|w| *w == term).count(), *tf);
                assert!((0..=3).contains(tf));
            }
            assert!(!words.contains(&"a"));
            let mut uniq = words.clone();
            uniq.sort();
            uniq.dedup();
            let dups: usize = c.term_counts[&d.docid].iter().map(|(_, tf)| tf.saturating_sub(1)).sum();
            assert_eq!(words.len() - uniq.len(), dups, "background words are distinct");
        }
        for q in &c.queries {
            let n = q.text.split(' ').count();
            assert!((2..=4).contains(&n));
        }
    }

    #[test]
    fn seeded() {
        let v = vocab();
        let p = SynthParams { seed: 11, ..Default::default() };
        assert_eq!(synth_corpus(&p, &v).unwrap(), synth_corpus(&p, &v).unwrap());
        let other = synth_corpus(&SynthParams { seed: 12, ..p }, &v).unwrap();
        assert_ne!(synth_corpus(&SynthParams { seed: 11, ..Default::default() }, &v).unwrap(), other);
    }

    #[test]
    fn run_ranked_by_total_tf() {
        let c = synth_corpus(&SynthParams::default(), &vocab()).unwrap();
        for q in &c.queries {
            let scores: Vec<f32> = c.run.iter().filter(|e| e.qid == q.qid).map(|e| e.score).collect();
            assert!(scores.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn small_vocab_rejected() {
        let v = Vocab::from_tokens(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "x", "y"]).unwrap();
        assert!(matches!(
            synth_corpus(&SynthParams::default(), &v),
            Err(AxiomError::VocabTooSmall { found: 2, .. })
        ));
    }
}
