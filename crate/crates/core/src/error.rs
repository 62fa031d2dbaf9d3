use thiserror::Error;

/// Errors produced by the segmentation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A segment bound or length violates `0 <= s < e < T`.
    #[error("invalid segment [{start}, {end}] for length {len}")]
    InvalidSegment {
        start: usize,
        end: usize,
        len: usize,
    },

    /// A multiplicative input took a negative or non-finite value.
    #[error("domain error: value {value} at index {index} is not a finite nonnegative number")]
    Domain { index: usize, value: f64 },

    /// The input sums to zero on the requested segment, so the CUSUM normaliser is undefined.
    #[error("degenerate input: sequence sums to zero on [{start}, {end}]")]
    Degenerate { start: usize, end: usize },

    /// A panel sequence is identically zero on the root segment.
    #[error("sequence {sequence} is degenerate (identically zero) on the root segment")]
    DegenerateSequence { sequence: usize },

    /// A calibration source series has zero variance.
    #[error("degenerate series for {what}: zero variance")]
    DegenerateSeries { what: String },

    /// Dimensions or shapes do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A configuration value falls outside its admissible range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A correlation matrix piece is not positive semidefinite.
    #[error("correlation matrix at scale {scale}, piece {piece} is not positive semidefinite (min eigenvalue {min_eigenvalue})")]
    NotPsd {
        scale: i32,
        piece: usize,
        min_eigenvalue: f64,
    },

    /// A linear system in the spectral transforms could not be solved.
    #[error("singular inner-product matrix at truncation {0}")]
    Singular(usize),

    /// The generator could not satisfy its moment constraints.
    #[error("generator failed: {0}")]
    Generator(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
