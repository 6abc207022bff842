use thiserror::Error;

/// Errors produced by the clustering pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input values (non-finite coordinates, non-numeric fields, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Dimension or count mismatch.
    #[error("size error: {0}")]
    Size(String),

    /// A caller-supplied parameter is out of its declared range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Objects that do not belong together were combined.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("eigensolver did not converge on a {n}x{n} matrix")]
    EigenNonConvergence { n: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
