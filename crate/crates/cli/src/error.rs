use std::path::PathBuf;

use edlx_core::evaluator::EvalError;
use edlx_core::ingest::IngestError;
use edlx_core::jsonl::SchemaError;
use edlx_core::model::ModelError;
use edlx_core::sections::DictionaryError;
use edlx_core::trainer::TrainError;

use crate::config::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("training failed: {0}")]
    Train(#[from] TrainError),
    #[error("{path}: {source}")]
    Pdf { path: PathBuf, source: IngestError },
    #[error("{path}: {source}")]
    Schema { path: PathBuf, source: SchemaError },
    #[error("loading weights: {0}")]
    Model(#[from] ModelError),
    #[error("section dictionary: {0}")]
    Dictionary(#[from] DictionaryError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Train(_) => 3,
            CliError::Pdf { .. } | CliError::Schema { .. } | CliError::Eval(_) => 4,
            CliError::Model(_) => 5,
            CliError::Dictionary(_) => 6,
            CliError::Io { .. } => 1,
        }
    }
}

/// Attaches a path or action to an I/O error.
pub trait IoContext<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|source| CliError::Io {
            context: what(),
            source,
        })
    }
}
