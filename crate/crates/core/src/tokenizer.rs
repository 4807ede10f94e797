// SPDX-License-Identifier: MIT OR Apache-2.0

//! WordPiece and whitespace tokenization against a line-per-token vocabulary.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const UNK: &str = "[UNK]";
pub const PAD: &str = "[PAD]";
pub const CONTINUATION: &str = "##";

/// Words longer than this many characters become UNK.
pub const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("vocabulary is missing special token {0}")]
    MissingSpecial(&'static str),
    #[error("token {token:?} appears on lines {first} and {second}")]
    Duplicate {
        token: String,
        first: usize,
        second: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerMode {
    #[default]
    WordPiece,
    Whitespace,
}

/// Token string to id mapping; ids are line numbers of `vocab.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    cls: u32,
    sep: u32,
    unk: u32,
    pad: u32,
}

impl Vocab {
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if let Some(prev) = index.insert(t.clone(), i as u32) {
                return Err(VocabError::Duplicate {
                    token: t.clone(),
                    first: prev as usize,
                    second: i,
                });
            }
        }
        let special = |name: &'static str| index.get(name).copied().ok_or(VocabError::MissingSpecial(name));
        Ok(Self {
            cls: special(CLS)?,
            sep: special(SEP)?,
            unk: special(UNK)?,
            pad: special(PAD)?,
            tokens,
            index,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, VocabError> {
        let text = std::fs::read_to_string(path).map_err(|e| VocabError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r')))
    }

    /// One token per line, line number = id.
    pub fn to_file_contents(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn cls_id(&self) -> u32 {
        self.cls
    }

    pub fn sep_id(&self) -> u32 {
        self.sep
    }

    pub fn unk_id(&self) -> u32 {
        self.unk
    }

    pub fn pad_id(&self) -> u32 {
        self.pad
    }

    pub fn is_special(&self, id: u32) -> bool {
        id == self.cls || id == self.sep || id == self.unk || id == self.pad
    }

    /// Pieces of a single already-normalized word.
    pub fn word_pieces(&self, word: &str, mode: TokenizerMode) -> Vec<(u32, String)> {
        let unk = || vec![(self.unk, UNK.to_string())];
        if word.chars().count() > MAX_WORD_CHARS {
            return unk();
        }
        if mode == TokenizerMode::Whitespace {
            return match self.id(word) {
                Some(id) => vec![(id, word.to_string())],
                None => unk(),
            };
        }
        // greedy longest-match-first
        let chars: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut candidate: String = chars[start..end].iter().collect();
                if start > 0 {
                    candidate.insert_str(0, CONTINUATION);
                }
                if let Some(id) = self.id(&candidate) {
                    found = Some((id, candidate));
                    break;
                }
                end -= 1;
            }
            match found {
                Some(piece) => out.push(piece),
                None => return unk(),
            }
            start = end;
        }
        out
    }
}

/// A tokenized text wrapped in CLS/SEP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedText {
    pub ids: Vec<u32>,
    pub pieces: Vec<String>,
    /// Normalized source words, one per span.
    pub words: Vec<String>,
    /// Half-open piece ranges `[start, end)` per word, indexed into `ids`.
    pub word_spans: Vec<(usize, usize)>,
}

impl TokenizedText {
    /// Assembles CLS + words + SEP from per-word piece lists.
    pub fn from_words(vocab: &Vocab, words: Vec<(String, Vec<(u32, String)>)>) -> Self {
        let mut ids = vec![vocab.cls_id()];
        let mut pieces = vec![CLS.to_string()];
        let mut spans = Vec::with_capacity(words.len());
        let mut texts = Vec::with_capacity(words.len());
        for (word, wp) in words {
            let start = ids.len();
            for (id, p) in wp {
                ids.push(id);
                pieces.push(p);
            }
            spans.push((start, ids.len()));
            texts.push(word);
        }
        ids.push(vocab.sep_id());
        pieces.push(SEP.to_string());
        Self {
            ids,
            pieces,
            words: texts,
            word_spans: spans,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    /// Per-word `(text, pieces)` pairs, the inverse of [`TokenizedText::from_words`].
    pub fn word_pieces(&self) -> Vec<(String, Vec<(u32, String)>)> {
        self.words
            .iter()
            .zip(&self.word_spans)
            .map(|(w, &(s, e))| {
                let wp = (s..e).map(|i| (self.ids[i], self.pieces[i].clone())).collect();
                (w.clone(), wp)
            })
            .collect()
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2010}'..='\u{2027}' | '\u{3000}'..='\u{303F}' | '¡' | '¿' | '«' | '»'
        )
}

/// Lowercases and splits on whitespace and punctuation; each punctuation
/// character becomes its own word.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let lower = chunk.to_lowercase();
        let mut cur = String::new();
        for c in lower.chars() {
            if is_punct(c) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            } else {
                cur.push(c);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Normalized words of `text` as the given mode sees them.
pub fn normalize_words(text: &str, mode: TokenizerMode) -> Vec<String> {
    match mode {
        TokenizerMode::WordPiece => split_words(text),
        TokenizerMode::Whitespace => text.split_whitespace().map(str::to_lowercase).collect(),
    }
}

pub fn tokenize(text: &str, vocab: &Vocab, mode: TokenizerMode) -> TokenizedText {
    let words = normalize_words(text, mode)
        .into_iter()
        .map(|w| {
            let wp = vocab.word_pieces(&w, mode);
            (w, wp)
        })
        .collect();
    TokenizedText::from_words(vocab, words)
}

/// Rejoins pieces into text: specials dropped, `##` pieces glued to the
/// preceding piece, everything else space-separated.
pub fn detokenize(t: &TokenizedText) -> String {
    let mut out = String::new();
    for p in &t.pieces {
        if matches!(p.as_str(), CLS | SEP | PAD) {
            continue;
        }
        if let Some(rest) = p.strip_prefix(CONTINUATION) {
            out.push_str(rest);
        } else {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(p);
        }
    }
    out
}
