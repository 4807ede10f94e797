// SPDX-License-Identifier: MIT OR Apache-2.0

//! Corpus, query and run-file formats, plus the JSONL dataset.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AxiomError, DiagnosticTriple};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Doc {
    pub docid: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub qid: String,
    pub text: String,
}

/// One line of a TREC run: `qid Q0 docid rank score tag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub qid: String,
    pub docid: String,
    pub rank: usize,
    pub score: f32,
    pub tag: String,
}

fn read(path: &Path) -> Result<String, AxiomError> {
    fs::read_to_string(path).map_err(|source| AxiomError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, contents: &[u8]) -> Result<(), AxiomError> {
    let io = |source| AxiomError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(contents).map_err(io)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> AxiomError {
    AxiomError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn clean(text: &str) -> String {
    text.replace(['\t', '\n', '\r'], " ")
}

fn parse_pairs(path: &Path, contents: &str) -> Result<Vec<(String, String)>, AxiomError> {
    let mut out = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, i + 1, "expected `id<TAB>text`"))?;
        let id = id.trim();
        if id.is_empty() {
            return Err(parse_err(path, i + 1, "empty id"));
        }
        out.push((id.to_string(), text.to_string()));
    }
    Ok(out)
}

/// Corpus TSV: `docid<TAB>text`.
pub fn read_tsv_corpus(path: &Path) -> Result<Vec<Doc>, AxiomError> {
    Ok(parse_pairs(path, &read(path)?)?
        .into_iter()
        .map(|(docid, text)| Doc { docid, text })
        .collect())
}

pub fn write_tsv_corpus(path: &Path, docs: &[Doc]) -> Result<(), AxiomError> {
    let mut s = String::new();
    for d in docs {
        s.push_str(&format!("{}\t{}\n", d.docid, clean(&d.text)));
    }
    write(path, s.as_bytes())
}

/// Queries TSV: `qid<TAB>text`.
pub fn read_queries(path: &Path) -> Result<Vec<Query>, AxiomError> {
    Ok(parse_pairs(path, &read(path)?)?
        .into_iter()
        .map(|(qid, text)| Query { qid, text })
        .collect())
}

pub fn write_queries(path: &Path, queries: &[Query]) -> Result<(), AxiomError> {
    let mut s = String::new();
    for q in queries {
        s.push_str(&format!("{}\t{}\n", q.qid, clean(&q.text)));
    }
    write(path, s.as_bytes())
}

pub fn read_run(path: &Path) -> Result<Vec<RunEntry>, AxiomError> {
    let mut out = Vec::new();
    for (i, line) in read(path)?.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [qid, _q0, docid, rank, score, tag] = fields.as_slice() else {
            return Err(parse_err(path, i + 1, format!("expected 6 fields, found {}", fields.len())));
        };
        let rank = rank
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad rank {rank:?}")))?;
        let score = score
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad score {score:?}")))?;
        out.push(RunEntry {
            qid: qid.to_string(),
            docid: docid.to_string(),
            rank,
            score,
            tag: tag.to_string(),
        });
    }
    Ok(out)
}

pub fn write_run(path: &Path, run: &[RunEntry]) -> Result<(), AxiomError> {
    let mut s = String::new();
    for e in run {
        s.push_str(&format!("{} Q0 {} {} {} {}\n", e.qid, e.docid, e.rank, e.score, e.tag));
    }
    write(path, s.as_bytes())
}

/// Dataset JSONL: one triple per line.
pub fn read_dataset(path: &Path) -> Result<Vec<DiagnosticTriple>, AxiomError> {
    let mut out = Vec::new();
    for (i, line) in read(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: DiagnosticTriple =
            serde_json::from_str(line).map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        if t.baseline_ids.len() != t.perturbed_ids.len() {
            return Err(parse_err(path, i + 1, "baseline and perturbed lengths differ"));
        }
        if t.token_types_baseline.len() != t.baseline_ids.len()
            || t.token_types_perturbed.len() != t.perturbed_ids.len()
        {
            return Err(parse_err(path, i + 1, "label count differs from token count"));
        }
        out.push(t);
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, triples: &[DiagnosticTriple]) -> Result<(), AxiomError> {
    let mut s = String::new();
    for t in triples {
        s.push_str(&serde_json::to_string(t).expect("triple serializes"));
        s.push('\n');
    }
    write(path, s.as_bytes())
}
