//! Error type shared across the crate.

use crate::network::NeuronId;

/// Errors produced by analysis, synthesis, training and persistence.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A vector or matrix had the wrong length for the operation.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A neuron address does not name a hidden neuron of the network.
    #[error("invalid neuron address {id}: {reason}")]
    Address { id: NeuronId, reason: String },

    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Spectrum analysis could not run (e.g. no inputs left after class filtering).
    #[error("analysis error: {0}")]
    Analysis(String),

    /// Input synthesis could not run or was called on an unsuitable input.
    #[error("synthesis error: {0}")]
    Synthesis(String),

    /// An operation was called with a measure it does not support.
    #[error("usage error: {0}")]
    Usage(String),

    /// A model file could not be decoded; `path` is the JSON field path.
    #[error("model load error at `{path}`: {reason}")]
    ModelFormat { path: String, reason: String },

    /// A dataset file could not be decoded; `offset` is the byte position.
    #[error("parse error at offset {offset}: {reason}")]
    DataFormat { offset: u64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
