//! Benchmarks for the hot paths: sequential predictor steps, the exact
//! distance-to-calibration oracle, and whole conversation days.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use agreemesh::calibration::cal_dist_exact;
use agreemesh::harness::run_config_seeded;
use agreemesh::predictors::{AosaState, AostState};
use agreemesh::protocol::ProtocolConfig;

fn random_bits(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n).map(|_| if rng.random_bool(0.6) { 1.0 } else { 0.0 }).collect()
}

fn bench_predictor_steps(c: &mut Criterion) {
    let outcomes = random_bits(256, 17);

    c.bench_function("aosa_step_x256", |b| {
        b.iter(|| {
            let mut state = AosaState::new(16).unwrap();
            for &y in &outcomes {
                let p = state.predict();
                black_box(p);
                state.observe(y).unwrap();
            }
        })
    });

    c.bench_function("aost_step_x256", |b| {
        b.iter(|| {
            let mut state = AostState::new();
            for &y in &outcomes {
                let p = state.predict();
                black_box(p);
                state.observe(y).unwrap();
            }
        })
    });
}

fn bench_cal_dist_oracle(c: &mut Criterion) {
    let outcomes = random_bits(64, 29);
    let mut rng = ChaCha12Rng::seed_from_u64(31);
    let predictions: Vec<f64> = outcomes
        .iter()
        .map(|&y| (0.7 * y + 0.3 * rng.random::<f64>()).clamp(0.0, 1.0))
        .collect();

    c.bench_function("cal_dist_exact_64", |b| {
        b.iter(|| cal_dist_exact(black_box(&predictions), black_box(&outcomes)).unwrap())
    });
}

const DAY_LOOP_CONFIG: &str = r#"{
    "setting": "canonical",
    "epsilon": 0.2,
    "days": 64,
    "max_rounds": 64,
    "agents": [
        {"kind": "converse", "base": {"kind": "table", "default": [0.5], "map": {"0": [0.3], "1": [0.7]}}},
        {"kind": "converse", "base": {"kind": "table", "default": [0.5], "map": {"0": [0.4], "1": [0.6]}}}
    ],
    "outcome_source": {"kind": "drifting-binary", "period": 16},
    "seed": 11
}"#;

fn bench_conversation_days(c: &mut Criterion) {
    let config = ProtocolConfig::from_json(DAY_LOOP_CONFIG).unwrap();
    c.bench_function("converse_days_x64", |b| {
        b.iter(|| run_config_seeded(black_box(&config), 11).unwrap())
    });
}

criterion_group!(benches, bench_predictor_steps, bench_cal_dist_oracle, bench_conversation_days);
criterion_main!(benches);
