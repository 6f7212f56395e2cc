//! Shared fixtures for the integration suites: seeded numeric lemma checkers
//! and the experiment configurations the bound checks run on.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use agreemesh::calibration::{cal_dist_exact, cal_dist_upper, sqe};
use agreemesh::protocol::{
    AgentSpec, BaseModelSpec, OutcomeSourceSpec, PredictorKind, ProtocolConfig, UtilitySpec,
};
use agreemesh::transcript::SettingKind;

pub const LEMMA_TOLERANCE: f64 = 1e-9;

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Constant-versus-mean squared error gap: SQE(x, y) - SQE(mean(y), y) must
/// equal T * (x - mean(y))^2. Returns how many random instances broke the
/// identity by more than the tolerance.
pub fn squares_diff_failures(instances: usize, seed: u64) -> usize {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..instances {
        let t = rng.random_range(1..=50);
        let y: Vec<f64> = (0..t).map(|_| rng.random::<f64>()).collect();
        let x: f64 = rng.random();
        let m = mean(&y);
        let lhs = sqe(&vec![x; t], &y).unwrap() - sqe(&vec![m; t], &y).unwrap();
        let rhs = t as f64 * (x - m) * (x - m);
        if (lhs - rhs).abs() > LEMMA_TOLERANCE {
            failures += 1;
        }
    }
    failures
}

/// A sequence q within l1 distance gamma of a perfectly calibrated p incurs
/// at most 3 * gamma extra squared error. Instances build p as the exact
/// level-set means of randomly grouped outcomes.
pub fn bound_error_diff_failures(instances: usize, seed: u64) -> usize {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..instances {
        let t = rng.random_range(1..=40);
        let groups = rng.random_range(1..=5usize);
        let assignment: Vec<usize> = (0..t).map(|_| rng.random_range(0..groups)).collect();
        let y: Vec<f64> = (0..t).map(|_| rng.random::<f64>()).collect();
        let p: Vec<f64> = assignment
            .iter()
            .map(|&g| {
                let members: Vec<f64> = y
                    .iter()
                    .zip(&assignment)
                    .filter(|(_, &a)| a == g)
                    .map(|(&v, _)| v)
                    .collect();
                mean(&members)
            })
            .collect();
        let q: Vec<f64> = p
            .iter()
            .map(|&v| (v + rng.random_range(-0.3..=0.3)).clamp(0.0, 1.0))
            .collect();
        let gamma: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
        let diff = sqe(&q, &y).unwrap() - sqe(&p, &y).unwrap();
        if diff > 3.0 * gamma + LEMMA_TOLERANCE {
            failures += 1;
        }
    }
    failures
}

/// Replacing in-bucket values by the bucket's upper edge costs at most
/// (2g + g^2) * T in squared error: for values v in [(i-1)*g, i*g], each
/// term (v - y)^2 - (i*g - y)^2 is at least (1 - 2i) * g^2, and bucket
/// indices run up to ceil(1/g).
pub fn bucket_edge_failures(instances: usize, seed: u64) -> usize {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..instances {
        let g: f64 = rng.random_range(0.05..=0.5);
        let buckets = (1.0 / g).ceil() as usize;
        let i = rng.random_range(1..=buckets);
        let lo = (i as f64 - 1.0) * g;
        let hi = (i as f64 * g).min(1.0);
        let edge = i as f64 * g;
        let t = rng.random_range(1..=40);
        let mut gap = 0.0;
        for _ in 0..t {
            let v: f64 = rng.random_range(lo..=hi);
            let y: f64 = rng.random();
            gap += (v - y) * (v - y) - (edge - y) * (edge - y);
        }
        let per_term = (1.0 - 2.0 * i as f64) * g * g;
        let closed_form = -(2.0 * g + g * g);
        if gap < per_term * t as f64 - LEMMA_TOLERANCE
            || gap < closed_form * t as f64 - LEMMA_TOLERANCE
        {
            failures += 1;
        }
    }
    failures
}

/// The exact calibration distance never exceeds the bucketed-ECE surrogate
/// plus T over the bucket count, on binary oracle-scale instances.
pub fn caldist_bucket_failures(instances: usize, seed: u64) -> usize {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..instances {
        let t = rng.random_range(1..=64);
        let resolution = rng.random_range(1..=10usize);
        let p: Vec<f64> = (0..t)
            .map(|_| rng.random_range(0..=resolution) as f64 / resolution as f64)
            .collect();
        let y: Vec<f64> = (0..t).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let n = rng.random_range(1..=t);
        let exact = cal_dist_exact(&p, &y).unwrap();
        let upper = cal_dist_upper(&p, &y, n).unwrap();
        if exact > upper + LEMMA_TOLERANCE {
            failures += 1;
        }
    }
    failures
}

fn scalar_table(low: f64, high: f64) -> BaseModelSpec {
    BaseModelSpec::Table {
        default: vec![0.5],
        map: [("0".to_string(), vec![low]), ("1".to_string(), vec![high])]
            .into_iter()
            .collect(),
    }
}

fn vector_table(on_zero: Vec<f64>, on_one: Vec<f64>) -> BaseModelSpec {
    BaseModelSpec::Table {
        default: vec![0.5; on_zero.len()],
        map: [("0".to_string(), on_zero), ("1".to_string(), on_one)]
            .into_iter()
            .collect(),
    }
}

/// Two scalar reduction agents with distinct informative base models over a
/// drifting binary stream.
pub fn canonical_pair_config(days: usize, seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        setting: SettingKind::Canonical,
        epsilon: 0.25,
        days,
        max_rounds: 512,
        agents: vec![
            AgentSpec::Converse { base: scalar_table(0.3, 0.7), predictor: PredictorKind::Aost },
            AgentSpec::Converse { base: scalar_table(0.45, 0.55), predictor: PredictorKind::Aost },
        ],
        outcome_source: OutcomeSourceSpec::DriftingBinary { period: 4096 },
        seed,
        d: 1,
        utility: None,
    }
}

/// Vector reduction pair over independently drifting binary coordinates.
pub fn ddim_pair_config(d: usize, days: usize, seed: u64) -> ProtocolConfig {
    let spread = |lo: f64, hi: f64| -> (Vec<f64>, Vec<f64>) {
        let step = (hi - lo) / d as f64;
        let zero = (0..d).map(|j| lo + step * j as f64).collect();
        let one = (0..d).map(|j| hi - step * j as f64).collect();
        (zero, one)
    };
    let (a_zero, a_one) = spread(0.2, 0.8);
    let (b_zero, b_one) = spread(0.35, 0.65);
    ProtocolConfig {
        setting: SettingKind::Ddim,
        epsilon: 0.25,
        days,
        max_rounds: 1024,
        agents: vec![
            AgentSpec::ConverseDdim {
                base: vector_table(a_zero, a_one),
                predictor: PredictorKind::Aost,
            },
            AgentSpec::ConverseDdim {
                base: vector_table(b_zero, b_one),
                predictor: PredictorKind::Aost,
            },
        ],
        outcome_source: OutcomeSourceSpec::DriftingCoordinates { period: 4096 },
        seed,
        d,
        utility: None,
    }
}

/// Utility over three actions that each pick one coordinate of a
/// three-class outcome distribution.
pub fn pick_coordinate_utility() -> UtilitySpec {
    UtilitySpec::new(
        vec!["a0".into(), "a1".into(), "a2".into()],
        vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ],
    )
    .unwrap()
}

/// Action-feedback reduction pair over drifting one-hot outcomes. The base
/// models favor different coordinates so opening recommendations clash.
pub fn action_pair_config(days: usize, seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        setting: SettingKind::Action,
        epsilon: 0.2,
        days,
        max_rounds: 64,
        agents: vec![
            AgentSpec::ConverseAction {
                base: vector_table(vec![0.7, 0.2, 0.1], vec![0.1, 0.2, 0.7]),
            },
            AgentSpec::ConverseAction {
                base: vector_table(vec![0.15, 0.7, 0.15], vec![0.2, 0.6, 0.2]),
            },
        ],
        outcome_source: OutcomeSourceSpec::DriftingCategorical { period: 2048 },
        seed,
        d: 3,
        utility: Some(pick_coordinate_utility()),
    }
}

/// Three-party roster: the anchor reduction in seat one, scalar reductions
/// in the rest, over a drifting binary stream.
pub fn three_party_config(days: usize, seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        setting: SettingKind::NAgent,
        epsilon: 0.3,
        days,
        max_rounds: 512,
        agents: vec![
            AgentSpec::ConverseMany { base: scalar_table(0.4, 0.6) },
            AgentSpec::Converse { base: scalar_table(0.3, 0.7), predictor: PredictorKind::Aost },
            AgentSpec::Converse { base: scalar_table(0.45, 0.55), predictor: PredictorKind::Aost },
        ],
        outcome_source: OutcomeSourceSpec::DriftingBinary { period: 4096 },
        seed,
        d: 1,
        utility: None,
    }
}
