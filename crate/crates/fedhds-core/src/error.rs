//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by feature ingestion, reduction, clustering, the
/// selection protocol and the federated round loop.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("malformed archive header: {0}")]
    MalformedHeader(String),

    #[error("truncated archive payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },

    #[error("archive payload has {extra} trailing bytes past the declared records")]
    TrailingBytes { extra: u64 },

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("degenerate affinities: all pairwise distances are zero")]
    DegenerateAffinities,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
