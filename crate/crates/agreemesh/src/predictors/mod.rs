//! Online sequential predictors behind the conversing agents: the
//! bias-balancing scalar forecaster ([`AosaState`]), its unknown-horizon
//! doubling wrapper ([`AostState`]), and the event-conditionally unbiased
//! vector forecaster ([`UnbiasedPredictor`]).
//!
//! All three follow a strict predict/observe cadence: each emitted
//! prediction must be resolved by exactly one observed outcome before the
//! next prediction for that instance.

mod aosa;
mod aost;
mod games;
mod unbiased;

pub use aosa::AosaState;
pub use aost::{aost_cal_dist_bound, AostState};
pub use unbiased::{unbiased_bias_bound, PredictionCells, UnbiasedPredictor};

use thiserror::Error;

use crate::types::DomainError;

/// Misuse or configuration failures of the predictor state machines.
#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("observe called with no pending prediction")]
    ObserveWithoutPredict,
    #[error("predict called while a prediction still awaits its outcome")]
    PredictWithoutObserve,
    #[error("outcome value {0} outside [0, 1]")]
    OutcomeOutOfRange(f64),
    #[error("outcome has dimension {got}, predictor expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("context index {0} outside the configured event family")]
    UnknownContext(usize),
    #[error("context index {0} listed twice in one step")]
    DuplicateContext(usize),
    #[error("no prediction cell admits a feasible value")]
    NoFeasibleCell,
    #[error("invalid predictor configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}
