//! Agreement protocols between online-calibrated interactive agents.
//!
//! Two or more agents exchange predictions (or action recommendations) about
//! an unknown outcome until an epsilon-agreement condition closes the
//! conversation; outcomes are revealed at day close. The crate provides the
//! protocol engines, the conversation-calibration reductions and sequential
//! predictors behind them, exact Bayesian reference agents, calibration
//! auditors with exact distance-to-calibration oracles at desk scale, and an
//! experiment harness that checks the convergence and accuracy bounds.

pub mod agents;
pub mod calibration;
pub mod harness;
pub mod predictors;
pub mod protocol;
pub mod transcript;
pub mod types;

pub use transcript::{Conversation, Day, SettingKind, Transcript};
pub use types::{ActionId, Bucketing, Feature, Message, Outcome, Prediction};
