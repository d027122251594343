use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount { line: usize, expected: usize, found: usize },

    #[error("cannot whiten column {column}: zero variance")]
    ZeroVariance { column: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },

    #[error("probability {0} is outside the open interval (0, 1)")]
    Probability(f64),

    #[error("invalid model name {name:?}: {reason}")]
    ModelName { name: String, reason: String },

    #[error("{0}")]
    Invalid(String),

    #[error("every initial live point has zero likelihood")]
    ZeroLikelihood,

    #[error("slice sampling collapsed {0} times in a row")]
    SliceCollapse(usize),
}
