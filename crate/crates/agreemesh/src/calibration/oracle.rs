//! Exact distance to calibration for small instances.
//!
//! A perfectly calibrated competitor assigns every day a level value equal to
//! the empirical outcome mean of its level set, so the exact distance is a
//! minimum over set partitions of the days. Two search strategies cover the
//! oracle range:
//!
//! - exhaustive enumeration of set partitions for T <= 12, valid for any
//!   outcomes in [0,1];
//! - a dynamic program for binary outcomes up to the oracle cap. Swapping two
//!   same-label days whose assigned level values cross keeps every group's
//!   label composition (hence calibration) and never increases the l1 cost,
//!   so some optimal partition assigns level values monotonically in the
//!   prediction within each label class. Ordering groups by level value, such
//!   a partition consumes the label-sorted prediction arrays in simultaneous
//!   consecutive blocks, and the block DP below searches that family
//!   exhaustively. Every DP state is a feasible partition, so the minimum is
//!   exact.
//!
//! The two methods are cross-checked against each other on binary instances
//! with T <= 12.

use super::CalibrationError;

/// Largest instance the exact oracle accepts. Above this, callers should use
/// `cal_dist_upper`.
pub const ORACLE_CAP: usize = 64;

/// Exact minimum of ||p - q||_1 over perfectly calibrated q, for
/// one-dimensional instances within the oracle range: binary outcomes up to
/// T = `ORACLE_CAP`, arbitrary outcomes in [0,1] up to T = 12.
pub fn cal_dist_exact(predictions: &[f64], outcomes: &[f64]) -> Result<f64, CalibrationError> {
    cal_dist_exact_with_cap(predictions, outcomes, ORACLE_CAP)
}

/// [`cal_dist_exact`] with a caller-chosen cap no larger than `ORACLE_CAP`.
pub fn cal_dist_exact_with_cap(
    predictions: &[f64],
    outcomes: &[f64],
    cap: usize,
) -> Result<f64, CalibrationError> {
    let t = predictions.len();
    if t != outcomes.len() {
        return Err(CalibrationError::LengthMismatch {
            predictions: t,
            outcomes: outcomes.len(),
        });
    }
    let cap = cap.min(ORACLE_CAP);
    if t > cap {
        return Err(CalibrationError::OracleRefusal { t, cap });
    }
    for &v in predictions.iter().chain(outcomes) {
        if !(0.0..=1.0).contains(&v) {
            return Err(CalibrationError::ValueOutOfRange(v));
        }
    }
    if t == 0 {
        return Ok(0.0);
    }
    if outcomes.iter().all(|&y| y == 0.0 || y == 1.0) {
        Ok(binary_block_dp(predictions, outcomes))
    } else if t <= 12 {
        Ok(exhaustive_partitions(predictions, outcomes))
    } else {
        Err(CalibrationError::OracleRefusal { t, cap: 12 })
    }
}

/// Minimum cost over all set partitions, enumerated as restricted growth
/// assignments.
fn exhaustive_partitions(p: &[f64], y: &[f64]) -> f64 {
    let t = p.len();
    let mut assignment = vec![0usize; t];
    let mut group_sum = vec![0.0f64; t];
    let mut group_count = vec![0usize; t];
    let mut best = f64::INFINITY;

    fn recurse(
        day: usize,
        groups: usize,
        p: &[f64],
        y: &[f64],
        assignment: &mut [usize],
        group_sum: &mut [f64],
        group_count: &mut [usize],
        best: &mut f64,
    ) {
        if day == p.len() {
            let mut cost = 0.0;
            for (i, &g) in assignment.iter().enumerate() {
                let level = group_sum[g] / group_count[g] as f64;
                cost += (p[i] - level).abs();
            }
            if cost < *best {
                *best = cost;
            }
            return;
        }
        for g in 0..=groups.min(p.len() - 1) {
            assignment[day] = g;
            group_sum[g] += y[day];
            group_count[g] += 1;
            let next_groups = groups.max(g + 1);
            recurse(day + 1, next_groups, p, y, assignment, group_sum, group_count, best);
            group_sum[g] -= y[day];
            group_count[g] -= 1;
        }
    }

    recurse(
        0,
        0,
        p,
        y,
        &mut assignment,
        &mut group_sum,
        &mut group_count,
        &mut best,
    );
    best
}

/// Sum of |x - v| over `sorted[l..r]` using prefix sums.
fn deviation_cost(sorted: &[f64], prefix: &[f64], l: usize, r: usize, v: f64) -> f64 {
    let split = l + sorted[l..r].partition_point(|&x| x < v);
    let below_count = (split - l) as f64;
    let below_sum = prefix[split] - prefix[l];
    let above_count = (r - split) as f64;
    let above_sum = prefix[r] - prefix[split];
    v * below_count - below_sum + (above_sum - v * above_count)
}

fn prefix_sums(sorted: &[f64]) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(sorted.len() + 1);
    prefix.push(0.0);
    for &x in sorted {
        prefix.push(prefix.last().unwrap() + x);
    }
    prefix
}

/// Exact distance for binary outcomes via the simultaneous-block DP over
/// label-sorted predictions.
fn binary_block_dp(p: &[f64], y: &[f64]) -> f64 {
    let mut ones: Vec<f64> = p
        .iter()
        .zip(y)
        .filter(|(_, &yt)| yt == 1.0)
        .map(|(&pt, _)| pt)
        .collect();
    let mut zeros: Vec<f64> = p
        .iter()
        .zip(y)
        .filter(|(_, &yt)| yt == 0.0)
        .map(|(&pt, _)| pt)
        .collect();
    ones.sort_by(|a, b| a.total_cmp(b));
    zeros.sort_by(|a, b| a.total_cmp(b));
    let (a, b) = (ones.len(), zeros.len());
    let ones_prefix = prefix_sums(&ones);
    let zeros_prefix = prefix_sums(&zeros);

    let idx = |i: usize, j: usize| i * (b + 1) + j;
    let mut dp = vec![f64::INFINITY; (a + 1) * (b + 1)];
    dp[0] = 0.0;
    for i in 0..=a {
        for j in 0..=b {
            let here = dp[idx(i, j)];
            if !here.is_finite() {
                continue;
            }
            for di in 0..=(a - i) {
                for dj in 0..=(b - j) {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let level = di as f64 / (di + dj) as f64;
                    let cost = here
                        + deviation_cost(&ones, &ones_prefix, i, i + di, level)
                        + deviation_cost(&zeros, &zeros_prefix, j, j + dj, level);
                    let target = &mut dp[idx(i + di, j + dj)];
                    if cost < *target {
                        *target = cost;
                    }
                }
            }
        }
    }
    dp[idx(a, b)]
}
