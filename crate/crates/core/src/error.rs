//! Error taxonomy shared by every module.
//!
//! Variants map onto the CLI exit codes: config errors exit 2, missing
//! artifacts exit 3, numerical failures exit 4, everything else 1.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape or dimension mismatch between tensors.
    #[error("dimension error: {0}")]
    Dim(String),

    /// A caller violated an operation contract (empty batch, non-scalar loss, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// Invalid configuration value or unparseable config file.
    #[error("config error: {0}")]
    Config(String),

    /// A required artifact from a prior pipeline stage is missing.
    #[error("missing dependency: {what} (produce it with `{stage}` first)")]
    MissingArtifact { what: String, stage: String },

    /// Numerical breakdown: non-finite values, non-PSD matrices, diverged runs.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Scene generation could not satisfy placement constraints.
    #[error("generation error: {0}")]
    Generation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dim(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn generation(msg: impl Into<String>) -> Self {
        Error::Generation(msg.into())
    }

    pub fn missing_artifact(what: impl Into<String>, stage: impl Into<String>) -> Self {
        Error::MissingArtifact {
            what: what.into(),
            stage: stage.into(),
        }
    }

    /// Process exit code for the CLI layer.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::MissingArtifact { .. } => 3,
            Error::Numerical(_) => 4,
            _ => 1,
        }
    }
}
