use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: dfsq_core::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl HarnessError {
    /// Stable tag for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Core { source, .. } => source.kind(),
            HarnessError::Config(_) => "invalid-config",
            HarnessError::Io { .. } => "io",
        }
    }
}

/// Attaches experiment context to core errors.
pub trait Context<T> {
    fn context(self, what: impl Into<String>) -> Result<T, HarnessError>;
}

impl<T> Context<T> for dfsq_core::Result<T> {
    fn context(self, what: impl Into<String>) -> Result<T, HarnessError> {
        self.map_err(|source| HarnessError::Core {
            context: what.into(),
            source,
        })
    }
}
