//! Crate-wide error type.
//!
//! Every fallible operation returns [`Error`]. The CLI maps variants to exit
//! codes: usage and input problems exit 2, evaluation and constraint failures
//! exit 1.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: JSON parse error at byte {offset} (line {line}, column {column}): {message}")]
    JsonParse {
        path: PathBuf,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    /// Annotations referencing image ids (or category ids) absent from the file.
    #[error("{path}: {kind} annotations reference unknown ids: {}", format_ids(.offenders))]
    ReferentialIntegrity {
        path: PathBuf,
        kind: &'static str,
        offenders: Vec<u64>,
    },

    #[error("RLE counts sum to {got}, expected width*height = {expected}")]
    RleSizeMismatch { expected: usize, got: usize },

    #[error("polygon has {points} points, need at least 3")]
    DegeneratePolygon { points: usize },

    #[error("unsupported segmentation encoding: {0}")]
    UnsupportedSegmentation(String),

    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),

    #[error("pool has {available} {gender} images, need {needed}")]
    PoolCapacity {
        gender: &'static str,
        available: usize,
        needed: usize,
    },

    #[error("split quotas unsatisfiable: category {category} would drop below {min_train} train images")]
    SplitConstraint { category: u64, min_train: usize },

    #[error("cannot evaluate an image whose gold label is 'discard'")]
    DiscardedGold,

    #[error("divergence undefined for a zero outcome vector")]
    ZeroOutcomeVector,

    #[error("attention grid has zero total mass")]
    ZeroAttention,

    #[error("attention grid must be normalized to sum 1 (got sum {0})")]
    UnnormalizedAttention(f64),

    #[error("zero probability at target token (step {step}, token {token})")]
    ZeroTargetProbability { step: usize, token: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),
}

fn format_ids(ids: &[u64]) -> String {
    let shown: Vec<String> = ids.iter().take(10).map(u64::to_string).collect();
    if ids.len() > 10 {
        format!("{} (+{} more)", shown.join(", "), ids.len() - 10)
    } else {
        shown.join(", ")
    }
}

impl Error {
    /// Exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::PoolCapacity { .. } | Error::SplitConstraint { .. } => 1,
            _ => 2,
        }
    }
}
