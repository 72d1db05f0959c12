//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Crate-wide error enum. Variants map one-to-one onto the failure modes of
/// the public operations; the CLI translates them into process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    InvalidMatrix,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("value outside the admissible loss domain: {0}")]
    Domain(String),

    #[error("gradient target outside the range of the loss derivative; largest feasible scale {max_feasible_scale}")]
    Range { max_feasible_scale: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("all residual gradients vanish; the zero set is the whole line")]
    DegenerateResidual,

    #[error("inconsistent embedding step: {0}")]
    Embedding(String),

    #[error("activation unsupported for this construction: {0}")]
    Activation(String),

    #[error("insufficient samples: kernel is trivial, need at least n = {required} (got {got})")]
    InsufficientSamples { required: usize, got: usize },

    #[error("retry budget exhausted: {0}")]
    MaxRetries(String),

    #[error("certification failed: {0}")]
    CertificationFailed(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
