//! Day instance generators: fixed streams and seeded synthetic streams whose
//! outcome distributions drift over time while each side's feature stays
//! informative.

use std::f64::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::{OutcomeSourceSpec, ProtocolError};
use crate::types::{Feature, Outcome};

/// What one day hands the protocol: per-agent features and the outcome
/// revealed at day close.
#[derive(Debug, Clone)]
pub struct DayInstance {
    pub features: Vec<Feature>,
    pub outcome: Outcome,
}

/// Supplies each day's instance in day order.
pub trait OutcomeSource {
    fn next_day(&mut self, t: usize) -> Result<DayInstance, ProtocolError>;
}

/// Replays an explicit list of days.
pub struct FixedSource {
    days: Vec<DayInstance>,
    next: usize,
}

impl FixedSource {
    pub fn new(days: Vec<DayInstance>) -> FixedSource {
        FixedSource { days, next: 0 }
    }
}

impl OutcomeSource for FixedSource {
    fn next_day(&mut self, t: usize) -> Result<DayInstance, ProtocolError> {
        let instance = self
            .days
            .get(self.next)
            .cloned()
            .ok_or(ProtocolError::SourceExhausted { t })?;
        self.next += 1;
        Ok(instance)
    }
}

fn sign_bit(rng: &mut ChaCha12Rng) -> (f64, Feature) {
    if rng.random_bool(0.5) {
        (1.0, "1".to_string())
    } else {
        (-1.0, "0".to_string())
    }
}

fn bernoulli(rng: &mut ChaCha12Rng, p: f64) -> f64 {
    if rng.random_bool(p.clamp(0.0, 1.0)) {
        1.0
    } else {
        0.0
    }
}

/// Binary outcomes whose base rate follows a slow sinusoid; each agent's
/// feature bit shifts the rate by a side-specific amount, so every side's
/// feature is informative but none determines the outcome.
pub struct DriftingBinarySource {
    rng: ChaCha12Rng,
    period: usize,
    n_agents: usize,
}

impl DriftingBinarySource {
    pub fn new(seed: u64, period: usize, n_agents: usize) -> DriftingBinarySource {
        DriftingBinarySource {
            rng: ChaCha12Rng::seed_from_u64(seed),
            period: period.max(1),
            n_agents,
        }
    }
}

impl OutcomeSource for DriftingBinarySource {
    fn next_day(&mut self, t: usize) -> Result<DayInstance, ProtocolError> {
        let mut features = Vec::with_capacity(self.n_agents);
        let mut p = 0.5 + 0.3 * (TAU * t as f64 / self.period as f64).sin();
        let mut weight = 0.15;
        for _ in 0..self.n_agents {
            let (sign, feature) = sign_bit(&mut self.rng);
            p += sign * weight;
            weight /= 2.0;
            features.push(feature);
        }
        let y = bernoulli(&mut self.rng, p.clamp(0.02, 0.98));
        Ok(DayInstance { features, outcome: Outcome::scalar(y)? })
    }
}

/// Independent binary coordinates with phase-shifted drifting rates; the two
/// agents' feature bits shift all coordinates by different amounts.
pub struct DriftingCoordinatesSource {
    rng: ChaCha12Rng,
    period: usize,
    d: usize,
}

impl DriftingCoordinatesSource {
    pub fn new(seed: u64, period: usize, d: usize) -> DriftingCoordinatesSource {
        DriftingCoordinatesSource {
            rng: ChaCha12Rng::seed_from_u64(seed),
            period: period.max(1),
            d,
        }
    }
}

impl OutcomeSource for DriftingCoordinatesSource {
    fn next_day(&mut self, t: usize) -> Result<DayInstance, ProtocolError> {
        let (s1, f1) = sign_bit(&mut self.rng);
        let (s2, f2) = sign_bit(&mut self.rng);
        let phase = TAU * t as f64 / self.period as f64;
        let mut y = Vec::with_capacity(self.d);
        for j in 0..self.d {
            let p = 0.5
                + 0.3 * (phase + TAU * j as f64 / self.d as f64).sin()
                + 0.12 * s1
                + 0.06 * s2;
            y.push(bernoulli(&mut self.rng, p.clamp(0.02, 0.98)));
        }
        Ok(DayInstance {
            features: vec![f1, f2],
            outcome: Outcome::new(y)?,
        })
    }
}

/// One-hot outcomes over d classes drawn from a drifting categorical; the
/// agents' feature bits tilt the weights of two reference classes.
pub struct DriftingCategoricalSource {
    rng: ChaCha12Rng,
    period: usize,
    d: usize,
}

impl DriftingCategoricalSource {
    pub fn new(seed: u64, period: usize, d: usize) -> DriftingCategoricalSource {
        DriftingCategoricalSource {
            rng: ChaCha12Rng::seed_from_u64(seed),
            period: period.max(1),
            d: d.max(1),
        }
    }
}

impl OutcomeSource for DriftingCategoricalSource {
    fn next_day(&mut self, t: usize) -> Result<DayInstance, ProtocolError> {
        let (s1, f1) = sign_bit(&mut self.rng);
        let (s2, f2) = sign_bit(&mut self.rng);
        let phase = TAU * t as f64 / self.period as f64;
        let mut weights = Vec::with_capacity(self.d);
        for j in 0..self.d {
            let mut logit = (phase + TAU * j as f64 / self.d as f64).sin();
            if j == 0 {
                logit += 0.5 * s1;
            }
            if j == 1 % self.d {
                logit += 0.25 * s2;
            }
            weights.push(logit.exp());
        }
        let total: f64 = weights.iter().sum();
        let mut draw = self.rng.random::<f64>() * total;
        let mut class = self.d - 1;
        for (j, w) in weights.iter().enumerate() {
            if draw < *w {
                class = j;
                break;
            }
            draw -= w;
        }
        let mut y = vec![0.0; self.d];
        y[class] = 1.0;
        Ok(DayInstance {
            features: vec![f1, f2],
            outcome: Outcome::new(y)?,
        })
    }
}

impl OutcomeSourceSpec {
    /// Builds the described source. Prior-backed sources need the loaded
    /// prior table and are constructed by the harness instead.
    pub fn build(
        &self,
        d: usize,
        n_agents: usize,
        seed: u64,
    ) -> Result<Box<dyn OutcomeSource>, ProtocolError> {
        match self {
            OutcomeSourceSpec::Fixed { days } => {
                let mut instances = Vec::with_capacity(days.len());
                for day in days {
                    instances.push(DayInstance {
                        features: day.features.clone(),
                        outcome: Outcome::new(day.outcome.clone())?,
                    });
                }
                Ok(Box::new(FixedSource::new(instances)))
            }
            OutcomeSourceSpec::DriftingBinary { period } => {
                Ok(Box::new(DriftingBinarySource::new(seed, *period, n_agents)))
            }
            OutcomeSourceSpec::DriftingCoordinates { period } => {
                Ok(Box::new(DriftingCoordinatesSource::new(seed, *period, d)))
            }
            OutcomeSourceSpec::DriftingCategorical { period } => {
                Ok(Box::new(DriftingCategoricalSource::new(seed, *period, d)))
            }
            OutcomeSourceSpec::Prior { .. } => Err(ProtocolError::BadConfig(
                "prior-backed sources are built with a loaded prior table".into(),
            )),
        }
    }
}
