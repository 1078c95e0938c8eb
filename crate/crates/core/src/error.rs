use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the operator construction and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error(
        "Sinkhorn did not converge: marginal error {marginal_error:.3e} after {iterations} iterations"
    )]
    SinkhornNotConverged {
        marginal_error: f64,
        iterations: usize,
    },

    #[error("eigensolver converged only {converged} of {requested} requested eigenpairs")]
    EigenNotConverged { converged: usize, requested: usize },

    #[error("non-finite state while integrating point {index}")]
    NonFiniteState { index: usize },

    #[error("normalization constant underflowed in row {row}; try a larger epsilon")]
    KernelUnderflow { row: usize },

    #[error("matrix is numerically singular (estimated rank {rank} of {size}); use a positive ridge sigma")]
    Singular { rank: usize, size: usize },

    #[error("wave vector {k:?} lies outside the lattice index set for n = {n}")]
    Aliasing { k: Vec<i64>, n: usize },

    #[error("epsilon {epsilon} outside the validity range (0, {limit})")]
    EpsilonOutOfRange { epsilon: f64, limit: f64 },

    #[error("not enough frames: need at least {required}, have {available}")]
    InsufficientFrames { required: usize, available: usize },

    #[error(transparent)]
    Load(#[from] LoadError),
}

/// Failures while reading trajectory files.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad header at byte {offset}: {reason}")]
    MalformedHeader { offset: u64, reason: String },

    #[error("line {line}, field {field}: cannot parse {text:?} as a number")]
    NonNumeric {
        line: usize,
        field: usize,
        text: String,
    },

    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("truncated payload: expected {expected} bytes after byte {offset}, found {found}")]
    Truncated {
        offset: u64,
        expected: u64,
        found: u64,
    },

    #[error("dataset contains no frames")]
    EmptyDataset,

    #[error("dataset has {frames} frame(s); at least 2 are required")]
    TooFewFrames { frames: usize },

    #[error("non-finite value at frame {frame}, column {column}")]
    NonFinite { frame: usize, column: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
