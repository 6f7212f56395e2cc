//! Shared domain values: outcomes, predictions, messages, and the bucketing
//! of the prediction space.
//!
//! Day and round indices are 1-based everywhere in this crate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of an agent's feature observation. Features are opaque symbols
/// drawn from a finite alphabet per experiment.
pub type Feature = String;

/// Index into the experiment's action set.
pub type ActionId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("coordinate {index} is {value}, outside [0,1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("vector must have at least one coordinate")]
    Empty,
    #[error("bucket count must be at least 1")]
    ZeroBuckets,
    #[error("bucketed value {0} lies outside [0,1]")]
    UnbucketableValue(f64),
}

fn check_unit_vector(values: &[f64]) -> Result<(), DomainError> {
    if values.is_empty() {
        return Err(DomainError::Empty);
    }
    for (index, &value) in values.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(DomainError::OutOfRange { index, value });
        }
    }
    Ok(())
}

/// Revealed label for one day: a vector in [0,1]^d with d fixed per
/// experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome(Vec<f64>);

impl Outcome {
    pub fn new(values: Vec<f64>) -> Result<Self, DomainError> {
        check_unit_vector(&values)?;
        Ok(Self(values))
    }

    /// Binary scalar outcome, the canonical setting's common case.
    pub fn scalar(value: f64) -> Result<Self, DomainError> {
        Self::new(vec![value])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// An agent's underlying prediction of the outcome expectation, a vector in
/// [0,1]^d (d = 1 in the canonical setting).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction(Vec<f64>);

impl Prediction {
    pub fn new(values: Vec<f64>) -> Result<Self, DomainError> {
        check_unit_vector(&values)?;
        Ok(Self(values))
    }

    pub fn scalar(value: f64) -> Result<Self, DomainError> {
        Self::new(vec![value])
    }

    /// Builds a prediction from raw agent output, clamping coordinates into
    /// [0,1] and reporting how many were clamped. Floating-point drift in an
    /// agent must not crash storage or audits.
    pub fn clamped(values: Vec<f64>) -> (Self, usize) {
        let mut clamps = 0;
        let values = values
            .into_iter()
            .map(|v| {
                if (0.0..=1.0).contains(&v) {
                    v
                } else {
                    clamps += 1;
                    v.clamp(0.0, 1.0)
                }
            })
            .collect();
        (Self(values), clamps)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// One turn's payload: the announced prediction in full-feedback settings, or
/// the recommended action in the action-feedback setting.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Numeric(Prediction),
    Action(ActionId),
}

impl Message {
    pub fn as_numeric(&self) -> Option<&Prediction> {
        match self {
            Message::Numeric(p) => Some(p),
            Message::Action(_) => None,
        }
    }

    pub fn as_action(&self) -> Option<ActionId> {
        match self {
            Message::Numeric(_) => None,
            Message::Action(a) => Some(*a),
        }
    }

    /// Scalar numeric payload, the canonical setting's common case.
    pub fn scalar(&self) -> Option<f64> {
        self.as_numeric().map(|p| p.values()[0])
    }
}

/// Partition of [0,1] into n buckets B(i) = [(i-1)/n, i/n) for i < n, with
/// the last bucket closed: B(n) = [(n-1)/n, 1].
///
/// Boundaries are the double values of i/n, so membership is exact in
/// floating point and the buckets partition [0,1] with no gaps or overlaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bucketing {
    n: usize,
}

impl Bucketing {
    pub fn new(n: usize) -> Result<Self, DomainError> {
        if n == 0 {
            return Err(DomainError::ZeroBuckets);
        }
        Ok(Self { n })
    }

    /// Bucket count for a width function value g, the finest bucketing with
    /// width at most g.
    pub fn from_width(g: f64) -> Result<Self, DomainError> {
        if !(g > 0.0) {
            return Err(DomainError::ZeroBuckets);
        }
        Self::new((1.0 / g).ceil() as usize)
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> f64 {
        1.0 / self.n as f64
    }

    fn boundary(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    /// The unique 1-based index i with v in B(i).
    pub fn bucket_of(&self, v: f64) -> Result<usize, DomainError> {
        if !(0.0..=1.0).contains(&v) {
            return Err(DomainError::UnbucketableValue(v));
        }
        // The multiplication only guesses; the boundary comparisons decide.
        let mut i = ((v * self.n as f64).floor() as usize + 1).min(self.n);
        while i > 1 && v < self.boundary(i - 1) {
            i -= 1;
        }
        while i < self.n && v >= self.boundary(i) {
            i += 1;
        }
        Ok(i)
    }
}

/// Speaker of a 1-based round in a roster of `n_agents`: round k is spoken by
/// agent ((k-1) mod n) + 1, so round 1 belongs to agent 1 (the model in the
/// two-agent protocols) and round 2 to agent 2 (the human).
pub fn speaker_of_round(k: usize, n_agents: usize) -> usize {
    debug_assert!(k >= 1 && n_agents >= 1);
    (k - 1) % n_agents + 1
}

/// Derives an independent seed for a numbered stream from a base seed, using
/// a splitmix64 finalizer. One run seed fans out to per-agent, per-instance,
/// and per-replication seeds without correlated streams.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
