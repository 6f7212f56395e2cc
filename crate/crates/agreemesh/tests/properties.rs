//! Randomized cross-module properties: metric orderings against the exact
//! oracle, predictor robustness over long horizons, and audit bookkeeping.

mod common;

use proptest::collection::vec;
use proptest::prelude::*;

use agreemesh::calibration::{
    audit_decision_calibration, cal_dist_exact, cal_dist_upper, ece, EventDescriptor,
};
use agreemesh::harness::run_config_seeded;
use agreemesh::predictors::AosaState;

fn grid_values(t: usize) -> impl Strategy<Value = Vec<f64>> {
    (1..=10usize).prop_flat_map(move |r| {
        vec((0..=r).prop_map(move |i| i as f64 / r as f64), t..=t)
    })
}

fn binary_outcomes(t: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(prop::bool::ANY.prop_map(|b| if b { 1.0 } else { 0.0 }), t..=t)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn exact_distance_is_below_every_surrogate(
        (p, y) in (1..=20usize).prop_flat_map(|t| (grid_values(t), binary_outcomes(t)))
    ) {
        let exact = cal_dist_exact(&p, &y).unwrap();
        for n in 1..=p.len() {
            let upper = cal_dist_upper(&p, &y, n).unwrap();
            prop_assert!(exact <= upper + 1e-9, "exact {exact} > upper {upper} at n={n}");
        }
        let ece_value = ece(&p, &y).unwrap();
        prop_assert!(exact <= ece_value + 1e-9, "exact {exact} > ece {ece_value}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 60, ..ProptestConfig::default() })]

    #[test]
    fn orderings_hold_for_fractional_outcomes(
        (p, y) in (1..=8usize).prop_flat_map(|t| (grid_values(t), vec(0.0..=1.0f64, t..=t)))
    ) {
        let exact = cal_dist_exact(&p, &y).unwrap();
        let ece_value = ece(&p, &y).unwrap();
        prop_assert!(exact <= ece_value + 1e-9);
        let n = p.len().div_ceil(2);
        prop_assert!(exact <= cal_dist_upper(&p, &y, n).unwrap() + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn ece_dominates_exact_distance_at_oracle_scale(
        (p, y) in (1..=64usize).prop_flat_map(|t| (grid_values(t), binary_outcomes(t)))
    ) {
        let exact = cal_dist_exact(&p, &y).unwrap();
        let ece_value = ece(&p, &y).unwrap();
        prop_assert!(exact <= ece_value + 1e-9);
    }
}

#[test]
fn aosa_survives_an_adaptive_adversary_at_horizon_scale() {
    let horizon = 10_000;
    let mut state = AosaState::new(100).unwrap();
    for _ in 0..horizon {
        let p = state.predict();
        assert!((0.0..=1.0).contains(&p), "prediction {p} left the unit interval");
        let y = if p <= 0.5 { 1.0 } else { 0.0 };
        state.observe(y).unwrap();
    }
}

#[test]
fn aosa_survives_random_play_at_horizon_scale() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
    let mut state = AosaState::new(100).unwrap();
    for _ in 0..10_000 {
        let p = state.predict();
        assert!((0.0..=1.0).contains(&p));
        state.observe(rng.random::<f64>()).unwrap();
    }
}

#[test]
fn decision_audit_events_partition_each_round() {
    let config = common::action_pair_config(400, 5);
    let run = run_config_seeded(&config, 5).unwrap();
    let utility = config.utility.as_ref().unwrap();
    for side in [1, 2] {
        let report = audit_decision_calibration(&run.transcript, side, utility).unwrap();
        let mut by_round: std::collections::BTreeMap<usize, usize> = Default::default();
        for row in &report.rows {
            assert!(matches!(row.event, EventDescriptor::ActionPair { .. }));
            if row.coord == 1 {
                *by_round.entry(row.event.round()).or_default() += row.count;
            }
        }
        assert!(!by_round.is_empty(), "side {side} audit produced no events");
        for (&k, &total) in &by_round {
            let expected = run.transcript.round_subsequence(k).unwrap().len();
            assert_eq!(total, expected, "side {side} round {k} counts do not partition");
        }
    }
}
