//! Exact Bayesian agents over finite common priors. Each turn emits the
//! posterior expectation of the outcome (or the best response to it in the
//! action setting) given the agent's own feature and everything the
//! counterpart's messages reveal, computed by simulating the full dialogue at
//! every world in the prior's support and discarding worlds inconsistent
//! with what was actually said.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::converse::ConverseAgent;
use crate::protocol::{
    Agent, AgentError, DayInstance, OutcomeSource, ProtocolError, UtilitySpec,
};
use crate::types::{speaker_of_round, Feature, Message, Outcome, Prediction};

/// Mass a prior's probabilities may miss 1 by before it is rejected.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// One support point of a common prior: the human-side feature, the
/// model-side feature, the outcome, and the point's probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorWorld {
    pub xh: Feature,
    pub xm: Feature,
    pub y: Vec<f64>,
    pub p: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorTableWire {
    worlds: Vec<PriorWorld>,
}

/// A validated finite common prior over (features, outcome).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorTable {
    worlds: Vec<PriorWorld>,
}

impl PriorTable {
    pub fn new(worlds: Vec<PriorWorld>) -> Result<Self, ProtocolError> {
        if worlds.is_empty() {
            return Err(ProtocolError::BadConfig("prior has no worlds".into()));
        }
        let dim = worlds[0].y.len();
        let mut mass = 0.0;
        for (i, w) in worlds.iter().enumerate() {
            if w.y.len() != dim {
                return Err(ProtocolError::BadConfig(format!(
                    "world {i} outcome has dimension {}, world 0 has {dim}",
                    w.y.len()
                )));
            }
            Outcome::new(w.y.clone())
                .map_err(|e| ProtocolError::BadConfig(format!("world {i}: {e}")))?;
            if !(w.p.is_finite() && w.p >= 0.0) {
                return Err(ProtocolError::BadConfig(format!(
                    "world {i} probability {} invalid",
                    w.p
                )));
            }
            mass += w.p;
        }
        if (mass - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(ProtocolError::BadConfig(format!(
                "prior mass {mass} differs from 1 beyond tolerance"
            )));
        }
        Ok(PriorTable { worlds })
    }

    pub fn from_json(s: &str) -> Result<Self, ProtocolError> {
        let wire: PriorTableWire = serde_json::from_str(s)?;
        PriorTable::new(wire.worlds)
    }

    pub fn from_path(path: &Path) -> Result<Self, ProtocolError> {
        PriorTable::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn worlds(&self) -> &[PriorWorld] {
        &self.worlds
    }

    pub fn len(&self) -> usize {
        self.worlds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.worlds.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.worlds[0].y.len()
    }

    /// Probability-weighted mean outcome over a world subset. A subset with
    /// no prior mass falls back to the unweighted mean; that only arises for
    /// hypothetical zero-probability worlds inside the dialogue table, never
    /// for an agent's actual live set.
    fn mean_over(&self, idx: &[usize]) -> Vec<f64> {
        let dim = self.dim();
        let mut acc = vec![0.0; dim];
        let mut mass = 0.0;
        for &i in idx {
            let w = &self.worlds[i];
            mass += w.p;
            for (a, v) in acc.iter_mut().zip(&w.y) {
                *a += w.p * v;
            }
        }
        if mass > 0.0 {
            for a in &mut acc {
                *a /= mass;
            }
            return acc;
        }
        let mut acc = vec![0.0; dim];
        for &i in idx {
            for (a, v) in acc.iter_mut().zip(&self.worlds[i].y) {
                *a += v;
            }
        }
        for a in &mut acc {
            *a /= idx.len() as f64;
        }
        acc
    }
}

/// Draws i.i.d. worlds from a prior table. Features are handed to the roster
/// in seat order: the model-side feature to seat 1, the human-side feature
/// to seat 2.
pub struct PriorSource {
    table: PriorTable,
    rng: ChaCha12Rng,
}

impl PriorSource {
    pub fn new(table: PriorTable, seed: u64) -> Self {
        PriorSource { table, rng: ChaCha12Rng::seed_from_u64(seed) }
    }
}

impl OutcomeSource for PriorSource {
    fn next_day(&mut self, _t: usize) -> Result<DayInstance, ProtocolError> {
        let mut draw = self.rng.random::<f64>();
        let worlds = self.table.worlds();
        let mut pick = worlds.len() - 1;
        for (i, w) in worlds.iter().enumerate() {
            if draw < w.p {
                pick = i;
                break;
            }
            draw -= w.p;
        }
        let w = &worlds[pick];
        Ok(DayInstance {
            features: vec![w.xm.clone(), w.xh.clone()],
            outcome: Outcome::new(w.y.clone())?,
        })
    }
}

/// Seeded random prior for experiments: probabilities from a symmetric
/// Dirichlet with concentration 1, feature symbols drawn uniformly from
/// `h0..h{n_symbols-1}` and `m0..`, outcomes uniform in the unit cube.
pub fn sample_prior(
    seed: u64,
    n_worlds: usize,
    n_symbols: usize,
    dim: usize,
) -> Result<PriorTable, ProtocolError> {
    if n_worlds == 0 || n_worlds > 64 {
        return Err(ProtocolError::BadConfig(format!(
            "world count {n_worlds} outside 1..=64"
        )));
    }
    if n_symbols == 0 || n_symbols > 8 {
        return Err(ProtocolError::BadConfig(format!(
            "symbol count {n_symbols} outside 1..=8"
        )));
    }
    if dim == 0 || dim > 10 {
        return Err(ProtocolError::BadConfig(format!("dimension {dim} outside 1..=10")));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..n_worlds)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut worlds = Vec::with_capacity(n_worlds);
    for w in &weights {
        let xh = format!("h{}", rng.random_range(0..n_symbols));
        let xm = format!("m{}", rng.random_range(0..n_symbols));
        let y: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        worlds.push(PriorWorld { xh, xm, y, p: w / total });
    }
    PriorTable::new(worlds)
}

/// How a Bayesian agent simulates its counterpart inside the dialogue table.
#[derive(Debug)]
pub enum CounterpartModel {
    /// The counterpart runs the same posterior computation over the shared
    /// prior; both sides of the table are posterior expectations.
    Bayesian,
    /// The counterpart's messages do not depend on the hidden world, so
    /// observing them never filters the live set.
    Uninformative,
    /// The counterpart runs the scalar reduction. Its cross-day state is a
    /// deterministic function of public history, so a shadow copy replayed
    /// on each day's closing conversation stays in sync with the real agent,
    /// and per-world clones of the shadow supply the table's messages.
    Converse(Box<ConverseAgent>),
}

/// Exact Bayesian over a finite common prior, for two-party settings.
#[derive(Debug)]
pub struct BayesianAgent {
    table: PriorTable,
    position: usize,
    utility: Option<UtilitySpec>,
    counterpart: CounterpartModel,
    day: usize,
    feature: Option<Feature>,
    live: Vec<usize>,
    filtered_upto: usize,
    sim: Vec<Vec<Message>>,
    clones: Vec<ConverseAgent>,
    final_history: Vec<Message>,
}

impl BayesianAgent {
    pub fn new(
        table: PriorTable,
        position: usize,
        utility: Option<UtilitySpec>,
        counterpart: CounterpartModel,
        dim: usize,
    ) -> Result<Self, ProtocolError> {
        if !(position == 1 || position == 2) {
            return Err(ProtocolError::BadConfig(
                "bayesian agents run in two-party settings".into(),
            ));
        }
        if table.dim() != dim {
            return Err(ProtocolError::BadConfig(format!(
                "prior outcomes have dimension {}, run uses {dim}",
                table.dim()
            )));
        }
        if let Some(u) = &utility {
            if u.dim() != dim {
                return Err(ProtocolError::BadConfig(format!(
                    "utility over {} payoff states in a dimension-{dim} run",
                    u.dim()
                )));
            }
        }
        if matches!(counterpart, CounterpartModel::Converse(_)) {
            if dim != 1 {
                return Err(ProtocolError::BadConfig(
                    "a scalar reduction counterpart implies a one-dimensional run".into(),
                ));
            }
            if utility.is_some() {
                return Err(ProtocolError::BadConfig(
                    "a scalar reduction counterpart exchanges numeric messages, not actions"
                        .into(),
                ));
            }
        }
        Ok(BayesianAgent {
            table,
            position,
            utility,
            counterpart,
            day: 0,
            feature: None,
            live: Vec::new(),
            filtered_upto: 0,
            sim: Vec::new(),
            clones: Vec::new(),
            final_history: Vec::new(),
        })
    }

    /// Indices of worlds still consistent with the agent's feature and the
    /// counterpart's messages so far today.
    pub fn live_worlds(&self) -> &[usize] {
        &self.live
    }

    fn side_feature<'a>(&self, w: &'a PriorWorld, position: usize) -> &'a Feature {
        if position == 1 {
            &w.xm
        } else {
            &w.xh
        }
    }

    fn emit_value(&self, mean: Vec<f64>) -> (Message, Prediction) {
        let prediction = Prediction::clamped(mean).0;
        let message = match &self.utility {
            Some(u) => Message::Action(u.best_response(prediction.values())),
            None => Message::Numeric(prediction.clone()),
        };
        (message, prediction)
    }

    /// Worlds a speaker at `round` holding world `w`'s speaker-side feature
    /// cannot distinguish from `w` after hearing the other side's simulated
    /// messages before `round`.
    fn table_live_set(&self, w: usize, round: usize) -> Vec<usize> {
        let speaker = speaker_of_round(round, 2);
        let target = self.side_feature(&self.table.worlds()[w], speaker);
        (0..self.table.len())
            .filter(|&w2| {
                self.side_feature(&self.table.worlds()[w2], speaker) == target
                    && (1..round)
                        .filter(|&r| speaker_of_round(r, 2) != speaker)
                        .all(|r| self.sim[w2][r - 1] == self.sim[w][r - 1])
            })
            .collect()
    }

    /// Extends every world's simulated conversation up to `upto` rounds.
    /// Own-side rounds and a Bayesian counterpart's rounds come from the
    /// dialogue table; a reduction counterpart speaks through its per-world
    /// clone; an uninformative counterpart echoes what was actually said.
    fn extend_sim(&mut self, upto: usize, history: &[Message]) -> Result<(), AgentError> {
        let n_worlds = self.table.len();
        let done = self.sim.first().map_or(0, Vec::len);
        for r in done + 1..=upto {
            let speaker = speaker_of_round(r, 2);
            let table_side =
                speaker == self.position || matches!(self.counterpart, CounterpartModel::Bayesian);
            let mut new_msgs = Vec::with_capacity(n_worlds);
            if table_side {
                for w in 0..n_worlds {
                    let idx = self.table_live_set(w, r);
                    let mean = self.table.mean_over(&idx);
                    new_msgs.push(self.emit_value(mean).0);
                }
            } else {
                match &mut self.counterpart {
                    CounterpartModel::Uninformative => {
                        let observed = history
                            .get(r - 1)
                            .ok_or(AgentError::MissingCounterpart { round: r })?;
                        new_msgs.resize(n_worlds, observed.clone());
                    }
                    CounterpartModel::Converse(_) => {
                        for w in 0..n_worlds {
                            let (m, _) = self.clones[w].speak(r, &self.sim[w])?;
                            new_msgs.push(m);
                        }
                    }
                    CounterpartModel::Bayesian => unreachable!("handled as table side"),
                }
            }
            for (w, m) in new_msgs.into_iter().enumerate() {
                self.sim[w].push(m);
            }
        }
        Ok(())
    }
}

impl Agent for BayesianAgent {
    fn begin_day(&mut self, t: usize, feature: &Feature) -> Result<(), AgentError> {
        self.day = t;
        self.feature = Some(feature.clone());
        self.live = (0..self.table.len())
            .filter(|&w| self.side_feature(&self.table.worlds()[w], self.position) == feature)
            .collect();
        if self.live.is_empty() {
            return Err(AgentError::InconsistentObservation(format!(
                "feature {feature:?} has no support in the prior"
            )));
        }
        self.filtered_upto = 0;
        self.sim = vec![Vec::new(); self.table.len()];
        self.final_history.clear();
        if let CounterpartModel::Converse(shadow) = &self.counterpart {
            let other = 3 - self.position;
            self.clones = (0..self.table.len())
                .map(|w| {
                    let mut clone = (**shadow).clone();
                    let f = self.side_feature(&self.table.worlds()[w], other).clone();
                    clone.begin_day(t, &f)?;
                    Ok(clone)
                })
                .collect::<Result<_, AgentError>>()?;
        }
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
        if self.feature.is_none() {
            return Err(AgentError::OutOfTurn { round });
        }
        self.extend_sim(round - 1, history)?;
        for r in self.filtered_upto + 1..round {
            if speaker_of_round(r, 2) != self.position {
                let observed = &history[r - 1];
                let sim = &self.sim;
                self.live.retain(|&w| sim[w][r - 1] == *observed);
                if self.live.is_empty() {
                    return Err(AgentError::InconsistentObservation(format!(
                        "round {r} message matches no live world"
                    )));
                }
            }
        }
        self.filtered_upto = round - 1;
        let mass: f64 = self.live.iter().map(|&w| self.table.worlds()[w].p).sum();
        if mass <= 0.0 {
            return Err(AgentError::InconsistentObservation(
                "live worlds carry no prior mass".into(),
            ));
        }
        let mean = self.table.mean_over(&self.live);
        Ok(self.emit_value(mean))
    }

    fn day_closed(&mut self, messages: &[Message]) -> Result<(), AgentError> {
        self.final_history = messages.to_vec();
        Ok(())
    }

    fn observe_outcome(&mut self, outcome: &Outcome) -> Result<(), AgentError> {
        if let CounterpartModel::Converse(shadow) = &mut self.counterpart {
            // Replay the real counterpart's day on the shadow. The feature
            // only shapes the stateless first-turn emission, which is
            // discarded, so a placeholder keeps the instance state exact.
            let other = 3 - self.position;
            shadow.begin_day(self.day, &Feature::new())?;
            for r in 1..=self.final_history.len() {
                if speaker_of_round(r, 2) == other {
                    shadow.speak(r, &self.final_history[..r - 1])?;
                }
            }
            shadow.observe_outcome(outcome)?;
        }
        self.feature = None;
        self.live.clear();
        self.sim.clear();
        self.clones.clear();
        self.final_history.clear();
        self.filtered_upto = 0;
        Ok(())
    }
}
