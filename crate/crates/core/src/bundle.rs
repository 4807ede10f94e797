// SPDX-License-Identifier: MIT OR Apache-2.0

//! A model directory: `config.json`, `model.axir` and `vocab.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{Model, ModelConfig, ModelError, WeightContainer};
use crate::tokenizer::{Vocab, VocabError};

pub const CONFIG_FILE: &str = "config.json";
pub const WEIGHTS_FILE: &str = "model.axir";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("vocab.txt has {found} entries, config says vocab_size {expected}")]
    VocabSize { expected: usize, found: usize },
}

pub struct Bundle {
    pub model: Model,
    pub vocab: Vocab,
}

pub fn paths(dir: &Path) -> [PathBuf; 3] {
    [dir.join(CONFIG_FILE), dir.join(WEIGHTS_FILE), dir.join(VOCAB_FILE)]
}

pub fn write_bundle(
    dir: &Path,
    config: &ModelConfig,
    weights: &WeightContainer,
    vocab: &Vocab,
) -> Result<(), BundleError> {
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| BundleError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let [c, w, v] = paths(dir);
    let json = serde_json::to_string_pretty(config).expect("config serializes") + "\n";
    fs::write(&c, json).map_err(io(&c))?;
    weights.write(&w)?;
    fs::write(&v, vocab.to_file_contents()).map_err(io(&v))?;
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<Bundle, BundleError> {
    let [c, w, v] = paths(dir);
    let model = Model::load(&c, &w)?;
    let vocab = Vocab::from_file(&v)?;
    if vocab.len() != model.config().vocab_size {
        return Err(BundleError::VocabSize {
            expected: model.config().vocab_size,
            found: vocab.len(),
        });
    }
    Ok(Bundle { model, vocab })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyforge::{build_duplicate_head_model, ToySpec};

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let toy = build_duplicate_head_model(&ToySpec::default()).unwrap();
        write_bundle(dir.path(), &toy.config, &toy.weights, &toy.vocab).unwrap();
        let b = load_bundle(dir.path()).unwrap();
        assert_eq!(b.model.config(), &toy.config);
        assert_eq!(b.vocab, toy.vocab);

        fs::write(dir.path().join(VOCAB_FILE), "[PAD]\n[UNK]\n[CLS]\n[SEP]\n").unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(BundleError::VocabSize { .. })));
    }
}
