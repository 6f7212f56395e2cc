//! Numeric inequalities the error-improvement analysis leans on, checked on
//! seeded random instances. Every check must hold on every instance.

mod common;

const INSTANCES: usize = 1000;

#[test]
fn constant_vs_mean_sqe_gap_is_exact() {
    assert_eq!(common::squares_diff_failures(INSTANCES, 101), 0);
}

#[test]
fn near_calibrated_excess_error_is_linear() {
    assert_eq!(common::bound_error_diff_failures(INSTANCES, 202), 0);
}

#[test]
fn bucket_edge_substitution_cost_is_bounded() {
    assert_eq!(common::bucket_edge_failures(INSTANCES, 303), 0);
}

#[test]
fn exact_distance_below_bucketed_surrogate() {
    assert_eq!(common::caldist_bucket_failures(INSTANCES, 404), 0);
}
