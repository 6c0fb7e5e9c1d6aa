use thiserror::Error;

use crate::types::FlareClass;

pub type Result<T, E = FlareError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FlareError {
    #[error("empty evaluation set")]
    EmptyEvaluationSet,

    #[error("empty class: no samples of class {0}")]
    EmptyClass(FlareClass),

    #[error("degenerate climatology: {0}")]
    DegenerateClimatology(String),

    #[error("undefined TSS: observed set contains only one side of the >=M threshold")]
    UndefinedTss,

    #[error("degenerate climatology for BSS: event base rate is {0}")]
    DegenerateBssClimatology(f64),

    #[error("harmonic mean undefined for non-positive input ({0}, {1})")]
    HarmonicMeanUndefined(f64, f64),

    #[error("invalid probability distribution: {0}")]
    InvalidProbability(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("diverged: {0}")]
    Diverged(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("gradient check failed: {0}")]
    GradientCheck(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl FlareError {
    /// True for failures of the numerics (divergence, failed gradient checks)
    /// rather than of inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(self, FlareError::Diverged(_) | FlareError::GradientCheck(_))
    }

    /// True for errors caused by reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            FlareError::Io { .. } | FlareError::Csv { .. } | FlareError::Parse { .. }
        )
    }
}
