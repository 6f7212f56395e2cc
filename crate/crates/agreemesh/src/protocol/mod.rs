//! Agreement conditions, utility specifications, and the engines that drive
//! turn-taking conversations over days: speakers alternate, each message is
//! followed by an agreement check, and outcomes are revealed at day close.

mod config;
mod sources;

pub use config::{
    AgentSpec, BaseModelSpec, OutcomeSourceSpec, PredictorKind, ProtocolConfig,
    DEFAULT_MAX_ROUNDS,
};
pub use sources::{
    DayInstance, DriftingBinarySource, DriftingCategoricalSource, DriftingCoordinatesSource,
    FixedSource, OutcomeSource,
};

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transcript::{Conversation, Day, SettingKind, Transcript, TranscriptError};
use crate::types::{speaker_of_round, ActionId, DomainError, Feature, Message, Outcome, Prediction};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid utility specification: {0}")]
    BadUtility(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("round {round}: expected a {expected} message")]
    MessageKind { round: usize, expected: &'static str },
    #[error("round {round}: prediction has dimension {got}, outcome has {expected}")]
    PredictionDim { round: usize, expected: usize, got: usize },
    #[error("round {round}: action id {action} out of range for {n_actions} actions")]
    UnknownAction { round: usize, action: ActionId, n_actions: usize },
    #[error("agreement check received {got} parties, expected {expected}")]
    PartyCount { expected: usize, got: usize },
    #[error("outcome source exhausted at day {t}")]
    SourceExhausted { t: usize },
    #[error("day {t}: source produced {got} features for {expected} agents")]
    FeatureCount { t: usize, expected: usize, got: usize },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error("config file")]
    Io(#[from] std::io::Error),
    #[error("config parse")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent spoke out of turn at round {round}")]
    OutOfTurn { round: usize },
    #[error("agent needs a counterpart message at round {round}")]
    MissingCounterpart { round: usize },
    #[error("script exhausted at round {round}")]
    ScriptExhausted { round: usize },
    #[error("observed message inconsistent with every live world: {0}")]
    InconsistentObservation(String),
    #[error("agent cannot operate in this setting: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Predictor(#[from] crate::predictors::PredictorError),
}

/// Linear utility over actions: U(a, y) = sum_j M(a, j) * y[j]. Entries lie
/// in [0, 1] so U(a, y) lands in [0, 1] whenever y is a distribution over the
/// d payoff states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilitySpec {
    actions: Vec<String>,
    matrix: Vec<Vec<f64>>,
}

impl UtilitySpec {
    pub fn new(actions: Vec<String>, matrix: Vec<Vec<f64>>) -> Result<Self, ProtocolError> {
        if actions.is_empty() {
            return Err(ProtocolError::BadUtility("empty action set".into()));
        }
        if matrix.len() != actions.len() {
            return Err(ProtocolError::BadUtility(format!(
                "{} actions but {} payoff rows",
                actions.len(),
                matrix.len()
            )));
        }
        let d = matrix[0].len();
        if d == 0 {
            return Err(ProtocolError::BadUtility("empty payoff row".into()));
        }
        for (a, row) in matrix.iter().enumerate() {
            if row.len() != d {
                return Err(ProtocolError::BadUtility(format!(
                    "payoff row {a} has width {}, expected {d}",
                    row.len()
                )));
            }
            for &v in row {
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    return Err(ProtocolError::BadUtility(format!(
                        "payoff entry {v} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(UtilitySpec { actions, matrix })
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn dim(&self) -> usize {
        self.matrix[0].len()
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.actions[a]
    }

    pub fn utility(&self, a: ActionId, y: &[f64]) -> f64 {
        self.matrix[a].iter().zip(y).map(|(m, v)| m * v).sum()
    }

    pub fn payoff_row(&self, a: ActionId) -> &[f64] {
        &self.matrix[a]
    }

    /// Largest payoff spread within one action: max over a, j1, j2 of
    /// M(a, j1) - M(a, j2). This is the Lipschitz constant of U(a, .) in the
    /// L1 norm over distributions.
    pub fn lipschitz(&self) -> f64 {
        self.matrix
            .iter()
            .map(|row| {
                let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Utility-maximizing action under the forecast; ties go to the lowest
    /// action index.
    pub fn best_response(&self, yhat: &[f64]) -> ActionId {
        let mut best = 0;
        let mut best_value = self.utility(0, yhat);
        for a in 1..self.n_actions() {
            let value = self.utility(a, yhat);
            if value > best_value {
                best = a;
                best_value = value;
            }
        }
        best
    }
}

impl<'de> Deserialize<'de> for UtilitySpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Wire {
            actions: Vec<String>,
            matrix: Vec<Vec<f64>>,
        }
        let wire = Wire::deserialize(deserializer)?;
        UtilitySpec::new(wire.actions, wire.matrix).map_err(serde::de::Error::custom)
    }
}

/// Which agreement test closes a conversation.
#[derive(Debug, Clone, PartialEq)]
pub enum AgreementVariant {
    /// Scalar predictions agree when |p - q| < epsilon (strict).
    Canonical,
    /// Vector predictions agree when max_j |p[j] - q[j]| < epsilon (strict).
    Ddim,
    /// Each party finds the other's proposed action within epsilon of its
    /// own best response, under its own forecast (non-strict).
    Action(UtilitySpec),
    /// All other agents pass the inner check at epsilon/2 against agent 1.
    NAgree(Box<AgreementVariant>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementCondition {
    pub variant: AgreementVariant,
    pub epsilon: f64,
}

impl AgreementCondition {
    pub fn new(variant: AgreementVariant, epsilon: f64) -> Result<Self, ProtocolError> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(ProtocolError::BadConfig(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(AgreementCondition { variant, epsilon })
    }
}

fn check_pair(
    variant: &AgreementVariant,
    epsilon: f64,
    first: (&Message, &Prediction),
    second: (&Message, &Prediction),
) -> Result<bool, ProtocolError> {
    match variant {
        AgreementVariant::Canonical => {
            let p = numeric_values(first.0)?;
            let q = numeric_values(second.0)?;
            Ok((p[0] - q[0]).abs() < epsilon)
        }
        AgreementVariant::Ddim => {
            let p = numeric_values(first.0)?;
            let q = numeric_values(second.0)?;
            if p.len() != q.len() {
                return Err(ProtocolError::PredictionDim {
                    round: 0,
                    expected: p.len(),
                    got: q.len(),
                });
            }
            let linf = p
                .iter()
                .zip(q)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            Ok(linf < epsilon)
        }
        AgreementVariant::Action(u) => {
            let a1 = action_id(first.0)?;
            let a2 = action_id(second.0)?;
            let y1 = first.1.values();
            let y2 = second.1.values();
            let first_accepts = u.utility(a2, y1) >= u.utility(a1, y1) - epsilon;
            let second_accepts = u.utility(a1, y2) >= u.utility(a2, y2) - epsilon;
            Ok(first_accepts && second_accepts)
        }
        AgreementVariant::NAgree(_) => Err(ProtocolError::BadConfig(
            "nested n-agent agreement".into(),
        )),
    }
}

fn numeric_values(message: &Message) -> Result<&[f64], ProtocolError> {
    message
        .as_numeric()
        .map(|p| p.values())
        .ok_or(ProtocolError::MessageKind { round: 0, expected: "numeric" })
}

fn action_id(message: &Message) -> Result<ActionId, ProtocolError> {
    message
        .as_action()
        .ok_or(ProtocolError::MessageKind { round: 0, expected: "action" })
}

/// Evaluates the day-closing test on each party's latest state. Two-party
/// variants take exactly two (message, prediction) pairs; the n-agent variant
/// takes all n with agent 1 first and passes iff every other agent clears the
/// inner check at epsilon/2 against agent 1.
pub fn check_agreement(
    condition: &AgreementCondition,
    latest: &[(&Message, &Prediction)],
) -> Result<bool, ProtocolError> {
    match &condition.variant {
        AgreementVariant::NAgree(inner) => {
            if latest.len() < 2 {
                return Err(ProtocolError::PartyCount { expected: 2, got: latest.len() });
            }
            for other in &latest[1..] {
                if !check_pair(inner, condition.epsilon / 2.0, latest[0], *other)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        variant => {
            if latest.len() != 2 {
                return Err(ProtocolError::PartyCount { expected: 2, got: latest.len() });
            }
            check_pair(variant, condition.epsilon, latest[0], latest[1])
        }
    }
}

/// One interactive party. Engines call `begin_day`, then `speak` on the
/// agent's turns with the day's messages so far, then `day_closed` with the
/// complete conversation, then `observe_outcome` once the day closes.
pub trait Agent {
    fn begin_day(&mut self, t: usize, feature: &Feature) -> Result<(), AgentError>;
    fn speak(&mut self, round: usize, history: &[Message]) -> Result<(Message, Prediction), AgentError>;
    /// Delivers the full day conversation before the outcome reveal. Agents
    /// that only read messages on their own turns can ignore it; agents that
    /// reconstruct a counterpart's state need the tail they never spoke
    /// after.
    fn day_closed(&mut self, _messages: &[Message]) -> Result<(), AgentError> {
        Ok(())
    }
    fn observe_outcome(&mut self, outcome: &Outcome) -> Result<(), AgentError>;
}

fn validate_turn(
    condition: &AgreementCondition,
    round: usize,
    message: &Message,
    prediction: &Prediction,
    outcome_dim: usize,
) -> Result<(), ProtocolError> {
    if prediction.dim() != outcome_dim {
        return Err(ProtocolError::PredictionDim {
            round,
            expected: outcome_dim,
            got: prediction.dim(),
        });
    }
    let mut variant = &condition.variant;
    if let AgreementVariant::NAgree(inner) = variant {
        variant = inner;
    }
    match variant {
        AgreementVariant::Action(u) => match message {
            Message::Action(a) if *a < u.n_actions() => Ok(()),
            Message::Action(a) => Err(ProtocolError::UnknownAction {
                round,
                action: *a,
                n_actions: u.n_actions(),
            }),
            Message::Numeric(_) => Err(ProtocolError::MessageKind { round, expected: "action" }),
        },
        _ => match message {
            Message::Numeric(p) if p.dim() == outcome_dim => Ok(()),
            Message::Numeric(p) => Err(ProtocolError::PredictionDim {
                round,
                expected: outcome_dim,
                got: p.dim(),
            }),
            Message::Action(_) => Err(ProtocolError::MessageKind { round, expected: "numeric" }),
        },
    }
}

/// Runs one day: speakers take turns in round order, each message triggers an
/// agreement check (from round 2 with two agents; on agent 1's turns once
/// everyone has spoken with more), and the day closes on agreement or at the
/// round cap. The outcome is revealed to every agent either way.
pub fn run_day(
    condition: &AgreementCondition,
    max_rounds: usize,
    t: usize,
    features: &[Feature],
    outcome: &Outcome,
    agents: &mut [Box<dyn Agent>],
) -> Result<Day, ProtocolError> {
    let n = agents.len();
    if features.len() != n {
        return Err(ProtocolError::FeatureCount { t, expected: n, got: features.len() });
    }
    for (agent, feature) in agents.iter_mut().zip(features) {
        agent.begin_day(t, feature)?;
    }
    let mut messages: Vec<Message> = Vec::new();
    let mut predictions: Vec<Prediction> = Vec::new();
    let mut latest: Vec<Option<(Message, Prediction)>> = vec![None; n];
    let mut agreed = false;
    for k in 1..=max_rounds {
        let speaker = speaker_of_round(k, n);
        let (message, prediction) = agents[speaker - 1].speak(k, &messages)?;
        validate_turn(condition, k, &message, &prediction, outcome.dim())?;
        latest[speaker - 1] = Some((message.clone(), prediction.clone()));
        messages.push(message);
        predictions.push(prediction);
        let check_now = if n == 2 {
            k >= 2
        } else {
            speaker == 1 && latest.iter().all(Option::is_some)
        };
        if check_now {
            let mut parties = Vec::with_capacity(n);
            for slot in &latest {
                let (m, p) = slot.as_ref().expect("all parties have spoken");
                parties.push((m, p));
            }
            if check_agreement(condition, &parties)? {
                agreed = true;
                break;
            }
        }
    }
    for agent in agents.iter_mut() {
        agent.day_closed(&messages)?;
    }
    for agent in agents.iter_mut() {
        agent.observe_outcome(outcome)?;
    }
    Ok(Day {
        conversation: Conversation::new(messages, predictions, agreed)?,
        outcome: outcome.clone(),
    })
}

/// Runs a full horizon of days, pulling each day's features and outcome from
/// the source. Deterministic given the agents' and source's seeds.
pub fn run_experiment(
    setting: SettingKind,
    condition: &AgreementCondition,
    days: usize,
    max_rounds: usize,
    source: &mut dyn OutcomeSource,
    agents: &mut [Box<dyn Agent>],
) -> Result<Transcript, ProtocolError> {
    let mut recorded = Vec::with_capacity(days);
    for t in 1..=days {
        let instance = source.next_day(t)?;
        recorded.push(run_day(
            condition,
            max_rounds,
            t,
            &instance.features,
            &instance.outcome,
            agents,
        )?);
    }
    Ok(Transcript::new(setting, condition.epsilon, agents.len(), recorded))
}

/// Summary of one run: agreement rate and length profile, emitted alongside
/// transcripts so consumers need not re-derive the setting.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub setting: SettingKind,
    pub epsilon: f64,
    pub seed: u64,
    pub days: usize,
    pub agreed_days: usize,
    pub cap_days: usize,
    pub mean_length: f64,
    pub max_length: usize,
    pub clamped_predictions: usize,
}

impl RunSummary {
    pub fn from_transcript(transcript: &Transcript, seed: u64) -> RunSummary {
        let days = transcript.len();
        let agreed_days = transcript.days().iter().filter(|d| d.conversation.agreed()).count();
        let lengths: Vec<usize> = transcript.lengths().collect();
        let total: usize = lengths.iter().sum();
        RunSummary {
            setting: transcript.setting(),
            epsilon: transcript.epsilon(),
            seed,
            days,
            agreed_days,
            cap_days: days - agreed_days,
            mean_length: if days == 0 { 0.0 } else { total as f64 / days as f64 },
            max_length: lengths.into_iter().max().unwrap_or(0),
            clamped_predictions: 0,
        }
    }
}

impl Serialize for RunSummary {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("RunSummary", 9)?;
        s.serialize_field("setting", &self.setting)?;
        s.serialize_field("epsilon", &self.epsilon)?;
        s.serialize_field("seed", &self.seed)?;
        s.serialize_field("days", &self.days)?;
        s.serialize_field("agreed_days", &self.agreed_days)?;
        s.serialize_field("cap_days", &self.cap_days)?;
        s.serialize_field("mean_length", &self.mean_length)?;
        s.serialize_field("max_length", &self.max_length)?;
        s.serialize_field("clamped_predictions", &self.clamped_predictions)?;
        s.end()
    }
}
