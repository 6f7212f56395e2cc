//! Decision-calibrated reduction agent for the action setting. Messages are
//! recommended actions; the agent's own turns sample an unbiased forecaster
//! whose contexts are the counterpart's last action and whose cells are
//! best-response regions, then recommend the best response to the sampled
//! forecast.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::BaseModel;
use crate::predictors::{PredictionCells, UnbiasedPredictor};
use crate::protocol::{Agent, AgentError, ProtocolError, UtilitySpec};
use crate::types::{derive_seed, speaker_of_round, Feature, Message, Outcome, Prediction};

/// Two-party action-setting reduction agent. One unbiased forecaster per own
/// round index, created lazily with a seed derived from the agent seed and
/// the round, so instance randomness is independent of when the round is
/// first reached.
pub struct ConverseActionAgent {
    base: BaseModel,
    utility: UtilitySpec,
    position: usize,
    dim: usize,
    horizon: usize,
    alpha: f64,
    seed: u64,
    instances: BTreeMap<usize, UnbiasedPredictor>,
    scratch: Vec<usize>,
    feature: Option<Feature>,
}

impl ConverseActionAgent {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        base: BaseModel,
        utility: UtilitySpec,
        position: usize,
        dim: usize,
        horizon: usize,
        alpha: f64,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        if !(position == 1 || position == 2) {
            return Err(ProtocolError::BadConfig(
                "action reduction agents run in two-party settings".into(),
            ));
        }
        if utility.dim() != dim {
            return Err(ProtocolError::BadConfig(format!(
                "utility over {} payoff states in a dimension-{dim} run",
                utility.dim()
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ProtocolError::BadConfig(format!(
                "failure probability {alpha} outside (0, 1)"
            )));
        }
        Ok(ConverseActionAgent {
            base,
            utility,
            position,
            dim,
            horizon: horizon.max(1),
            alpha,
            seed,
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
}

impl Agent for ConverseActionAgent {
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
            let a = self.utility.best_response(p.values());
            return Ok((Message::Action(a), p));
        }
        let counter = history
            .get(round - 2)
            .ok_or(AgentError::MissingCounterpart { round })?
            .as_action()
            .ok_or_else(|| {
                AgentError::Unsupported(format!("round {} message is not an action", round - 1))
            })?;
        if counter >= self.utility.n_actions() {
            return Err(AgentError::Unsupported(format!(
                "action {counter} outside the utility's {} actions",
                self.utility.n_actions()
            )));
        }
        if !self.instances.contains_key(&round) {
            let rng = ChaCha12Rng::seed_from_u64(derive_seed(self.seed, round as u64));
            let forecaster = UnbiasedPredictor::new(
                self.dim,
                self.horizon,
                self.utility.n_actions(),
                PredictionCells::BestResponse(self.utility.clone()),
                self.alpha,
                rng,
            )?;
            self.instances.insert(round, forecaster);
        }
        let v = self
            .instances
            .get_mut(&round)
            .expect("just inserted")
            .predict(&[counter])?;
        self.scratch.push(round);
        let a = self.utility.best_response(&v);
        // Vertex solutions can drift below 0 or above 1 by a rounding ulp;
        // the stored prediction is clamped while the best response uses the
        // forecaster's raw value.
        let (p, _) = Prediction::clamped(v);
        Ok((Message::Action(a), p))
    }

    fn observe_outcome(&mut self, outcome: &Outcome) -> Result<(), AgentError> {
        if outcome.dim() != self.dim {
            return Err(AgentError::Unsupported(format!(
                "{}-dimensional agent observed a {}-dimensional outcome",
                self.dim,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::BaseModelSpec;

    fn pick_one_utility() -> UtilitySpec {
        // Action j pays exactly coordinate j of the outcome.
        UtilitySpec::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap()
    }

    fn agent(position: usize, seed: u64) -> ConverseActionAgent {
        let base = BaseModel::new(
            BaseModelSpec::Constant { value: vec![0.7, 0.3] },
            2,
        )
        .unwrap();
        ConverseActionAgent::new(base, pick_one_utility(), position, 2, 100, 0.05, seed).unwrap()
    }

    #[test]
    fn first_round_recommends_best_response_to_base_model() {
        let mut a = agent(1, 7);
        a.begin_day(1, &String::from("x")).unwrap();
        let (m, p) = a.speak(1, &[]).unwrap();
        assert_eq!(m.as_action(), Some(0));
        assert_eq!(p.values(), &[0.7, 0.3]);
        assert!(a.instance_rounds().is_empty());
    }

    #[test]
    fn later_rounds_consult_one_forecaster_per_round() {
        let mut a = agent(1, 7);
        a.begin_day(1, &String::from("x")).unwrap();
        a.speak(1, &[]).unwrap();
        let (m, p) = a
            .speak(3, &[Message::Action(0), Message::Action(1)])
            .unwrap();
        // The recommendation is the best response to the emitted forecast.
        assert_eq!(m.as_action(), Some(pick_one_utility().best_response(p.values())));
        assert_eq!(a.instance_rounds(), vec![3]);
        a.observe_outcome(&Outcome::new(vec![1.0, 0.0]).unwrap()).unwrap();
        assert_eq!(a.instance(3).unwrap().steps(), 1);

        // A second day reuses the same forecaster for round 3.
        a.begin_day(2, &String::from("x")).unwrap();
        a.speak(1, &[]).unwrap();
        a.speak(3, &[Message::Action(0), Message::Action(0)]).unwrap();
        a.observe_outcome(&Outcome::new(vec![0.0, 1.0]).unwrap()).unwrap();
        assert_eq!(a.instance_rounds(), vec![3]);
        assert_eq!(a.instance(3).unwrap().steps(), 2);
    }

    #[test]
    fn replay_is_deterministic_per_seed() {
        let run = |seed: u64| {
            let mut a = agent(2, seed);
            let mut out = Vec::new();
            for t in 1..=40 {
                a.begin_day(t, &String::from("x")).unwrap();
                let first = Message::Action(usize::from(t % 2 == 0));
                let (m2, p2) = a.speak(2, std::slice::from_ref(&first)).unwrap();
                let (m4, p4) = a
                    .speak(4, &[first, m2.clone(), Message::Action(t % 2)])
                    .unwrap();
                out.push((m2, p2, m4, p4));
                let y = if t % 3 == 0 { vec![1.0, 0.0] } else { vec![0.0, 1.0] };
                a.observe_outcome(&Outcome::new(y).unwrap()).unwrap();
            }
            out
        };
        assert_eq!(run(11), run(11));
    }

    #[test]
    fn rejects_numeric_messages_and_unknown_actions() {
        let mut a = agent(1, 7);
        a.begin_day(1, &String::from("x")).unwrap();
        a.speak(1, &[]).unwrap();
        let numeric = Message::Numeric(Prediction::new(vec![0.5, 0.5]).unwrap());
        assert!(matches!(
            a.speak(3, &[Message::Action(0), numeric]),
            Err(AgentError::Unsupported(_))
        ));
        assert!(matches!(
            a.speak(3, &[Message::Action(0), Message::Action(9)]),
            Err(AgentError::Unsupported(_))
        ));
    }
}
