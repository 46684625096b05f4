use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by graph construction, model validation, weight synthesis,
/// and experiment plumbing.
#[derive(Debug, Error)]
pub enum Error {
    /// A size or count parameter is out of range (zero agents, empty matrix,
    /// mismatched dimension, ...).
    #[error("invalid size: {0}")]
    InvalidSize(String),

    /// An edge list refers to unknown agents, contains self-loops or
    /// duplicates, or does not describe a connected graph.
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    /// Random graph generation exhausted its retry budget.
    #[error("graph generation failed: {0}")]
    GenerationFailure(String),

    /// The graph does not decompose into clique cells glued tree-fashion at
    /// single agents.
    #[error("not a cell tree: {0}")]
    NotACellTree(String),

    /// A scale or variance parameter is non-positive or otherwise unusable.
    #[error("invalid scale: {0}")]
    InvalidScale(String),

    /// A covariance failed its symmetry or positivity check.
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    /// A sliding-window depth is too small for the network diameter, or
    /// otherwise unusable.
    #[error("invalid window: {0}")]
    InvalidWindow(String),

    /// Generic bad input: an index out of range, a trace too short for the
    /// requested time, an inconsistent argument combination.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The requested operation needs a zero prior mean.
    #[error("unsupported prior: {0}")]
    UnsupportedPrior(String),

    /// An operation that only works on trees was given a graph with a cycle.
    #[error("not a tree: {0}")]
    NotATree(String),

    /// Weight synthesis hit a numerically unusable system (ill-conditioned
    /// solve, wildly asymmetric covariance, ...).
    #[error("weight synthesis failed: {0}")]
    BuildFailure(String),

    /// Reports cannot be compared (mismatched horizon, trial count, or seed).
    #[error("invalid comparison: {0}")]
    InvalidComparison(String),

    /// An experiment or file configuration is inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A schedule or report file could not be parsed.
    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
