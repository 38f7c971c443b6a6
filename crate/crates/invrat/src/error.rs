//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("document {id:?} is empty after tokenization")]
    EmptyAfterTokenization { id: String },

    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,

    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("{path}:{line}: unknown label {value:?} (expected 0, 1, toxic or non-toxic)")]
    UnknownLabel {
        path: String,
        line: usize,
        value: String,
    },

    #[error("split fractions must be positive and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),

    #[error("the {name} split would be empty under the requested fractions")]
    EmptySplit { name: &'static str },

    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),

    #[error("invalid lexicon ({path}): {reason}")]
    InvalidLexicon { path: String, reason: String },

    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },

    #[error("environment index {0} out of range (0..=3)")]
    EnvOutOfRange(u8),

    #[error("input contains no non-PAD tokens")]
    AllPad,

    #[error("mask length {mask} does not match document length {doc}")]
    MaskLengthMismatch { mask: usize, doc: usize },

    #[error("temperature must be > 0, got {0}")]
    BadTemperature(f64),

    #[error("non-finite loss: {context}")]
    NonFiniteLoss { context: String },

    #[error("document {id:?} has no environment id (required in invrat mode)")]
    MissingEnvironment { id: String },

    #[error("train split is empty")]
    EmptyTrainSplit,

    #[error("invalid training config: {0}")]
    BadConfig(String),

    #[error("prediction/gold length mismatch: {preds} predictions vs {golds} golds")]
    PredictionLengthMismatch { preds: usize, golds: usize },

    #[error("cannot select a checkpoint from an empty report list")]
    NoReports,

    #[error("checkpoint was trained in {mode} mode and holds no rationale generator")]
    NoGenerator { mode: String },

    #[error("unsupported checkpoint version {0}")]
    BadCheckpointVersion(u32),

    #[error("input digest mismatch for {name}: manifest records {expected}, file has {actual}")]
    DigestMismatch {
        name: String,
        expected: String,
        actual: String,
    },

    #[error("output path {0} already exists (pass --force to overwrite)")]
    OutputExists(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    Cli(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 3 for integrity failures, 2 for
    /// everything else (usage and input errors).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DigestMismatch { .. } => 3,
            _ => 2,
        }
    }
}
