use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed header in {source_name}: missing column {column}")]
    MalformedHeader { source_name: String, column: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty objective: no usable matches")]
    EmptyObjective,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty climatology: no shots recorded")]
    EmptyClimatology,

    #[error("unrated team: {0}")]
    UnratedTeam(String),

    #[error("degenerate outcome set: {0}")]
    DegenerateOutcomes(String),

    #[error("invalid probability vector: {0}")]
    InvalidSimplex(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("no bets placed")]
    NoBetsPlaced,

    #[error("missing outcome for bet on {0}")]
    MissingOutcome(String),

    #[error("look-ahead: {0}")]
    LookAhead(String),

    #[error("empty report: {0}")]
    EmptyReport(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than the configuration.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Config(_) | Error::InvalidArgument(_))
    }
}

/// Non-fatal condition raised by a fitting routine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FitWarning {
    /// Iteration budget exhausted; the best point seen is returned.
    NotConverged { iterations: usize },
    /// Outcomes carry no information about the parameters (all successes or similar).
    Degenerate(String),
    /// Coefficients hit the magnitude cap.
    Separation { cap: f64 },
    /// Fewer samples than the minimum; fallback values returned.
    Fallback(String),
}

/// A fitted parameter value together with any warning raised while fitting it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fitted<P> {
    pub params: P,
    pub warning: Option<FitWarning>,
}

impl<P> Fitted<P> {
    pub fn ok(params: P) -> Self {
        Fitted {
            params,
            warning: None,
        }
    }

    pub fn warn(params: P, warning: FitWarning) -> Self {
        Fitted {
            params,
            warning: Some(warning),
        }
    }
}
