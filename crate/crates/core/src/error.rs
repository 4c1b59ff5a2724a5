use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("numerical blow-up at t={time}: |x[{index}]| = {value:e} exceeds bound {bound:e}")]
    NumericalBlowup {
        time: f64,
        index: usize,
        value: f64,
        bound: f64,
    },

    #[error("invalid cutoff {0}: must lie strictly between 0 and 0.5")]
    InvalidCutoff(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("insufficient history: period {index} needs at least {needed} preceding bits")]
    InsufficientHistory { index: usize, needed: usize },

    #[error("invalid probability {0}")]
    InvalidProbability(f64),

    #[error("degenerate utterance {0}: zero variance or fewer than two samples")]
    DegenerateUtterance(String),

    #[error("span [{start}, {end}] lies outside the envelope time range [{lo}, {hi}]")]
    SpanOutOfRange { start: f64, end: f64, lo: f64, hi: f64 },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalBlowup { .. } | Error::SolveFailure(_) => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    /// Tags the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

/// Adds a stage name to the error of a fallible step.
pub trait StageExt<T> {
    fn stage(self, name: &str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, name: &str) -> Result<T> {
        self.map_err(|e| e.in_stage(name))
    }
}
