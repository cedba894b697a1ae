//! Pre-match shot-success forecasting for football.
//!
//! Teams get attack and defence shot-conversion ratings fitted by
//! half-life-weighted maximum likelihood. The resulting probabilities are
//! calibrated, multiplied by GAP-rating shot predictions into expected goals,
//! and mapped to match-outcome and over/under 2.5 forecasts that are scored and
//! bet against historical odds.

pub mod betting;
pub mod calibration;
pub mod error;
pub mod evaluation;
pub mod gap;
pub mod ingest;
pub mod optim;
pub mod outcome;
pub mod pipeline;
pub mod report;
pub mod shot_model;
pub mod sim;

pub use error::{Error, FitWarning, Fitted, Result};
pub use ingest::{MatchRecord, Outcome};
