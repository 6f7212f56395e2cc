//! Conversation-calibrated reduction agents for the numeric settings. The
//! first speaking turn of each day passes the static base model through;
//! every later turn either adopts the anchor agent's latest message (when it
//! is already within tolerance of the agent's own previous message) or
//! consults a sequential predictor instance keyed by the round and bucket of
//! that anchor message. Exactly the instances consulted during a day are
//! updated when the outcome is revealed.

use std::collections::BTreeMap;

use super::BaseModel;
use crate::predictors::{AosaState, AostState};
use crate::protocol::{Agent, AgentError, PredictorKind, ProtocolError};
use crate::types::{speaker_of_round, Bucketing, Feature, Message, Outcome, Prediction};

/// Exact integer ceiling of sqrt(n).
pub(crate) fn ceil_sqrt(n: usize) -> usize {
    let mut m = (n.max(1) as f64).sqrt().ceil() as usize;
    while m * m < n {
        m += 1;
    }
    while m > 1 && (m - 1) * (m - 1) >= n {
        m -= 1;
    }
    m
}

/// One lazily created scalar predictor slot, wrapping either sequential
/// algorithm behind a common predict/observe face.
#[derive(Debug, Clone)]
struct ScalarInstance {
    kind: InstanceKind,
    steps: usize,
}

#[derive(Debug, Clone)]
enum InstanceKind {
    Aosa(AosaState),
    Aost(AostState),
}

impl ScalarInstance {
    fn new(kind: PredictorKind, horizon: usize) -> Result<Self, AgentError> {
        let kind = match kind {
            PredictorKind::Aosa => InstanceKind::Aosa(AosaState::new(ceil_sqrt(horizon))?),
            PredictorKind::Aost => InstanceKind::Aost(AostState::new()),
        };
        Ok(ScalarInstance { kind, steps: 0 })
    }

    fn predict(&mut self) -> f64 {
        match &mut self.kind {
            InstanceKind::Aosa(s) => s.predict(),
            InstanceKind::Aost(s) => s.predict(),
        }
    }

    fn observe(&mut self, y: f64) -> Result<(), AgentError> {
        match &mut self.kind {
            InstanceKind::Aosa(s) => s.observe(y)?,
            InstanceKind::Aost(s) => s.observe(y)?,
        }
        self.steps += 1;
        Ok(())
    }
}

fn scalar_at(history: &[Message], round: usize, current: usize) -> Result<f64, AgentError> {
    let msg = history
        .get(round - 1)
        .ok_or(AgentError::MissingCounterpart { round: current })?;
    msg.scalar().ok_or_else(|| {
        AgentError::Unsupported(format!("round {round} message is not numeric"))
    })
}

fn numeric_at(
    history: &[Message],
    round: usize,
    current: usize,
) -> Result<&Prediction, AgentError> {
    let msg = history
        .get(round - 1)
        .ok_or(AgentError::MissingCounterpart { round: current })?;
    msg.as_numeric().ok_or_else(|| {
        AgentError::Unsupported(format!("round {round} message is not numeric"))
    })
}

/// Scalar reduction agent. In a two-party roster either seat may run it; in
/// an n-party roster it fills seats 2..n, always anchoring on agent 1's
/// latest message. Cross-day state is a deterministic function of public
/// history, which is what lets a Bayesian counterpart simulate it.
#[derive(Debug, Clone)]
pub struct ConverseAgent {
    base: BaseModel,
    predictor: PredictorKind,
    position: usize,
    n_agents: usize,
    horizon: usize,
    epsilon: f64,
    bucketing: Bucketing,
    instances: BTreeMap<(usize, usize), ScalarInstance>,
    scratch: Vec<(usize, usize)>,
    feature: Option<Feature>,
}

impl ConverseAgent {
    pub fn new(
        base: BaseModel,
        predictor: PredictorKind,
        position: usize,
        n_agents: usize,
        horizon: usize,
        epsilon: f64,
        bucket_width: f64,
    ) -> Result<Self, ProtocolError> {
        if n_agents < 2 {
            return Err(ProtocolError::BadConfig(
                "converse agents need at least two parties".into(),
            ));
        }
        if position == 0 || position > n_agents {
            return Err(ProtocolError::BadConfig(format!(
                "position {position} outside roster of {n_agents}"
            )));
        }
        if n_agents > 2 && position == 1 {
            return Err(ProtocolError::BadConfig(
                "the first seat of an n-party roster anchors the others; use converse-many".into(),
            ));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(ProtocolError::BadConfig(format!(
                "tolerance {epsilon} must be positive"
            )));
        }
        let bucketing = Bucketing::from_width(bucket_width)?;
        Ok(ConverseAgent {
            base,
            predictor,
            position,
            n_agents,
            horizon,
            epsilon,
            bucketing,
            instances: BTreeMap::new(),
            scratch: Vec::new(),
            feature: None,
        })
    }

    /// Round whose message this agent reacts to when speaking at `round`:
    /// the anchor's latest turn, which is the previous round in a two-party
    /// conversation and agent 1's latest turn otherwise.
    fn anchor_round(&self, round: usize) -> usize {
        if self.position == 1 {
            round - 1
        } else {
            round - (self.position - 1)
        }
    }

    /// Keys of every instance created so far, as (anchor round, bucket).
    pub fn instance_keys(&self) -> Vec<(usize, usize)> {
        self.instances.keys().copied().collect()
    }

    /// Number of outcome updates the given instance has absorbed.
    pub fn instance_steps(&self, key: (usize, usize)) -> Option<usize> {
        self.instances.get(&key).map(|i| i.steps)
    }

    /// Instance keys consulted so far in the current day.
    pub fn consulted_today(&self) -> &[(usize, usize)] {
        &self.scratch
    }
}

impl Agent for ConverseAgent {
    fn begin_day(&mut self, _t: usize, feature: &Feature) -> Result<(), AgentError> {
        if !self.scratch.is_empty() {
            return Err(AgentError::InconsistentObservation(
                "previous day closed without an outcome".into(),
            ));
        }
        self.feature = Some(feature.clone());
        Ok(())
    }

    fn speak(
        &mut self,
        round: usize,
        history: &[Message],
    ) -> Result<(Message, Prediction), AgentError> {
        if speaker_of_round(round, self.n_agents) != self.position {
            return Err(AgentError::OutOfTurn { round });
        }
        if history.len() + 1 < round {
            return Err(AgentError::MissingCounterpart { round });
        }
        let feature = self
            .feature
            .clone()
            .ok_or(AgentError::OutOfTurn { round })?;
        if round == self.position {
            let p = self.base.predict(&feature);
            return Ok((Message::Numeric(p.clone()), p));
        }
        let anchor_round = self.anchor_round(round);
        let anchor = scalar_at(history, anchor_round, round)?;
        let own_prev = scalar_at(history, round - self.n_agents, round)?;
        if (anchor - own_prev).abs() < self.epsilon {
            let p = Prediction::scalar(anchor)?;
            return Ok((Message::Numeric(p.clone()), p));
        }
        let key = (anchor_round, self.bucketing.bucket_of(anchor)?);
        if !self.instances.contains_key(&key) {
            self.instances
                .insert(key, ScalarInstance::new(self.predictor, self.horizon)?);
        }
        let v = self.instances.get_mut(&key).expect("just inserted").predict();
        self.scratch.push(key);
        let p = Prediction::scalar(v)?;
        Ok((Message::Numeric(p.clone()), p))
    }

    fn observe_outcome(&mut self, outcome: &Outcome) -> Result<(), AgentError> {
        if outcome.dim() != 1 {
            return Err(AgentError::Unsupported(format!(
                "scalar agent observed a {}-dimensional outcome",
                outcome.dim()
            )));
        }
        let y = outcome.values()[0];
        for key in std::mem::take(&mut self.scratch) {
            self.instances
                .get_mut(&key)
                .expect("consulted instances exist")
                .observe(y)?;
        }
        self.feature = None;
        Ok(())
    }
}

/// d-dimensional two-party reduction agent: one scalar instance per
/// (counterpart round, bucket, coordinate), consulted coordinate by
/// coordinate. A coordinate already within tolerance of the agent's own
/// previous message echoes the counterpart's value without consulting.
#[derive(Debug, Clone)]
pub struct ConverseDdimAgent {
    base: BaseModel,
    predictor: PredictorKind,
    position: usize,
    dim: usize,
    horizon: usize,
    epsilon: f64,
    bucketing: Bucketing,
    instances: BTreeMap<(usize, usize, usize), ScalarInstance>,
    scratch: Vec<(usize, usize, usize)>,
    feature: Option<Feature>,
}

impl ConverseDdimAgent {
    pub fn new(
        base: BaseModel,
        predictor: PredictorKind,
        position: usize,
        dim: usize,
        horizon: usize,
        epsilon: f64,
        bucket_width: f64,
    ) -> Result<Self, ProtocolError> {
        if !(position == 1 || position == 2) {
            return Err(ProtocolError::BadConfig(
                "coordinatewise reduction agents run in two-party settings".into(),
            ));
        }
        if dim == 0 {
            return Err(ProtocolError::BadConfig("dimension must be positive".into()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(ProtocolError::BadConfig(format!(
                "tolerance {epsilon} must be positive"
            )));
        }
        let bucketing = Bucketing::from_width(bucket_width)?;
        Ok(ConverseDdimAgent {
            base,
            predictor,
            position,
            dim,
            horizon,
            epsilon,
            bucketing,
            instances: BTreeMap::new(),
            scratch: Vec::new(),
            feature: None,
        })
    }

    /// Keys of every instance created so far, as (counterpart round, bucket,
    /// 1-based coordinate).
    pub fn instance_keys(&self) -> Vec<(usize, usize, usize)> {
        self.instances.keys().copied().collect()
    }

    /// Number of outcome updates the given instance has absorbed.
    pub fn instance_steps(&self, key: (usize, usize, usize)) -> Option<usize> {
        self.instances.get(&key).map(|i| i.steps)
    }
}

impl Agent for ConverseDdimAgent {
    fn begin_day(&mut self, _t: usize, feature: &Feature) -> Result<(), AgentError> {
        if !self.scratch.is_empty() {
            return Err(AgentError::InconsistentObservation(
                "previous day closed without an outcome".into(),
            ));
        }
        self.feature = Some(feature.clone());
        Ok(())
    }

    fn speak(
        &mut self,
        round: usize,
        history: &[Message],
    ) -> Result<(Message, Prediction), AgentError> {
        if speaker_of_round(round, 2) != self.position {
            return Err(AgentError::OutOfTurn { round });
        }
        if history.len() + 1 < round {
            return Err(AgentError::MissingCounterpart { round });
        }
        let feature = self
            .feature
            .clone()
            .ok_or(AgentError::OutOfTurn { round })?;
        if round == self.position {
            let p = self.base.predict(&feature);
            return Ok((Message::Numeric(p.clone()), p));
        }
        let counter = numeric_at(history, round - 1, round)?.values().to_vec();
        let own_prev = numeric_at(history, round - 2, round)?.values().to_vec();
        if counter.len() != self.dim || own_prev.len() != self.dim {
            return Err(AgentError::Unsupported(format!(
                "round {round} messages are not {}-dimensional",
                self.dim
            )));
        }
        let mut values = Vec::with_capacity(self.dim);
        for j in 0..self.dim {
            if (counter[j] - own_prev[j]).abs() < self.epsilon {
                values.push(counter[j]);
                continue;
            }
            let key = (round - 1, self.bucketing.bucket_of(counter[j])?, j + 1);
            if !self.instances.contains_key(&key) {
                self.instances
                    .insert(key, ScalarInstance::new(self.predictor, self.horizon)?);
            }
            values.push(self.instances.get_mut(&key).expect("just inserted").predict());
            self.scratch.push(key);
        }
        let p = Prediction::new(values)?;
        Ok((Message::Numeric(p.clone()), p))
    }

    fn observe_outcome(&mut self, outcome: &Outcome) -> Result<(), AgentError> {
        if outcome.dim() != self.dim {
            return Err(AgentError::Unsupported(format!(
                "{}-dimensional agent observed a {}-dimensional outcome",
                self.dim,
                outcome.dim()
            )));
        }
        for key in std::mem::take(&mut self.scratch) {
            let y = outcome.values()[key.2 - 1];
            self.instances
                .get_mut(&key)
                .expect("consulted instances exist")
                .observe(y)?;
        }
        self.feature = None;
        Ok(())
    }
}
