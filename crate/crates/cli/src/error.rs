// SPDX-License-Identifier: MIT OR Apache-2.0

use axir::analysis::AnalysisError;
use axir::axioms::AxiomError;
use axir::bundle::BundleError;
use axir::model::ModelError;
use axir::patching::PatchError;
use axir::toyforge::ToyError;
use axir::tokenizer::VocabError;

/// Failure classes, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad or missing arguments: exit 1.
    #[error("{0}")]
    Usage(String),
    /// Unreadable or invalid inputs: exit 2.
    #[error("{0}")]
    Data(String),
    /// Degenerate or non-finite numerics: exit 3.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_error!(AxiomError, BundleError, ModelError, VocabError, ToyError, AnalysisError);

impl From<PatchError> for CliError {
    fn from(e: PatchError) -> Self {
        match e {
            PatchError::InvalidSpec(_) | PatchError::InvalidFraction(_) => CliError::Usage(e.to_string()),
            PatchError::EmptyDataset => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}
