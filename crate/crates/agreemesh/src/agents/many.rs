//! Reduction agent for the first seat of an n-party roster. Its own turns
//! either repeat its previous message (when every other party has already
//! come within half the tolerance of it) or consult an unbiased forecaster
//! whose contexts are (party, bucketed latest message) pairs, one active
//! context per other party, and whose cells bucket the agent's own emission
//! at a finer width.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::BaseModel;
use crate::predictors::{PredictionCells, UnbiasedPredictor};
use crate::protocol::{Agent, AgentError, ProtocolError};
use crate::types::{derive_seed, speaker_of_round, Bucketing, Feature, Message, Outcome, Prediction};

/// First-seat n-party reduction agent; seats 2..n run the scalar
/// [`ConverseAgent`](super::ConverseAgent) against it.
pub struct ConverseManyAgent {
    base: BaseModel,
    n_agents: usize,
    horizon: usize,
    epsilon: f64,
    alpha: f64,
    seed: u64,
    msg_buckets: Bucketing,
    cell_buckets: Bucketing,
    instances: BTreeMap<usize, UnbiasedPredictor>,
    scratch: Vec<usize>,
    feature: Option<Feature>,
}

impl ConverseManyAgent {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        base: BaseModel,
        n_agents: usize,
        horizon: usize,
        epsilon: f64,
        alpha: f64,
        seed: u64,
        msg_width: f64,
        cell_width: f64,
    ) -> Result<Self, ProtocolError> {
        if n_agents < 2 {
            return Err(ProtocolError::BadConfig(
                "an n-party roster needs at least two parties".into(),
            ));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(ProtocolError::BadConfig(format!(
                "tolerance {epsilon} must be positive"
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ProtocolError::BadConfig(format!(
                "failure probability {alpha} outside (0, 1)"
            )));
        }
        Ok(ConverseManyAgent {
            base,
            n_agents,
            horizon: horizon.max(1),
            epsilon,
            alpha,
            seed,
            msg_buckets: Bucketing::from_width(msg_width)?,
            cell_buckets: Bucketing::from_width(cell_width)?,
            instances: BTreeMap::new(),
            scratch: Vec::new(),
            feature: None,
        })
    }

    /// Own rounds with an instantiated forecaster.
    pub fn instance_rounds(&self) -> Vec<usize> {
        self.instances.keys().copied().collect()
    }

    /// Forecaster backing the given own round, if consulted before.
    pub fn instance(&self, round: usize) -> Option<&UnbiasedPredictor> {
        self.instances.get(&round)
    }

    /// Context index encoding (party s, bucket of its latest message).
    fn context_of(&self, s: usize, bucket: usize) -> usize {
        (s - 2) * self.msg_buckets.count() + (bucket - 1)
    }
}

impl Agent for ConverseManyAgent {
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
        if speaker_of_round(round, self.n_agents) != 1 {
            return Err(AgentError::OutOfTurn { round });
        }
        if history.len() + 1 < round {
            return Err(AgentError::MissingCounterpart { round });
        }
        let feature = self
            .feature
            .clone()
            .ok_or(AgentError::OutOfTurn { round })?;
        if round == 1 {
            let p = self.base.predict(&feature);
            return Ok((Message::Numeric(p.clone()), p));
        }
        let scalar_at = |r: usize| -> Result<f64, AgentError> {
            history
                .get(r - 1)
                .ok_or(AgentError::MissingCounterpart { round })?
                .scalar()
                .ok_or_else(|| {
                    AgentError::Unsupported(format!("round {r} message is not numeric"))
                })
        };
        let own_prev = scalar_at(round - self.n_agents)?;
        let mut latest = Vec::with_capacity(self.n_agents - 1);
        for s in 2..=self.n_agents {
            latest.push(scalar_at(round - self.n_agents + s - 1)?);
        }
        if latest.iter().all(|v| (v - own_prev).abs() < self.epsilon / 2.0) {
            let p = Prediction::scalar(own_prev)?;
            return Ok((Message::Numeric(p.clone()), p));
        }
        let mut contexts = Vec::with_capacity(self.n_agents - 1);
        for (i, v) in latest.iter().enumerate() {
            contexts.push(self.context_of(i + 2, self.msg_buckets.bucket_of(*v)?));
        }
        if !self.instances.contains_key(&round) {
            let rng = ChaCha12Rng::seed_from_u64(derive_seed(self.seed, round as u64));
            let forecaster = UnbiasedPredictor::new(
                1,
                self.horizon,
                (self.n_agents - 1) * self.msg_buckets.count(),
                PredictionCells::Buckets(self.cell_buckets),
                self.alpha,
                rng,
            )?;
            self.instances.insert(round, forecaster);
        }
        let v = self
            .instances
            .get_mut(&round)
            .expect("just inserted")
            .predict(&contexts)?;
        self.scratch.push(round);
        let p = Prediction::scalar(v[0])?;
        Ok((Message::Numeric(p.clone()), p))
    }

    fn observe_outcome(&mut self, outcome: &Outcome) -> Result<(), AgentError> {
        if outcome.dim() != 1 {
            return Err(AgentError::Unsupported(format!(
                "scalar agent observed a {}-dimensional outcome",
                outcome.dim()
            )));
        }
        for round in std::mem::take(&mut self.scratch) {
            self.instances
                .get_mut(&round)
                .expect("consulted instances exist")
                .observe(outcome.values())?;
        }
        self.feature = None;
        Ok(())
    }
}
