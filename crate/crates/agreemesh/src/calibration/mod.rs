//! Calibration metrics over prediction/outcome sequences and the auditors
//! that evaluate them on transcripts.

mod audit;
mod oracle;

pub use audit::{
    audit_conversation_calibration, audit_decision_calibration, AuditMode, CalibrationReport,
    EventDescriptor, ReportRow,
};
pub use oracle::{cal_dist_exact, cal_dist_exact_with_cap, ORACLE_CAP};

use thiserror::Error;

use crate::protocol::UtilitySpec;
use crate::types::{ActionId, Bucketing, DomainError, Outcome, Prediction};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("{predictions} predictions against {outcomes} outcomes")]
    LengthMismatch { predictions: usize, outcomes: usize },
    #[error("value {0} outside [0,1]")]
    ValueOutOfRange(f64),
    #[error("instance size {t} above the exact-oracle cap {cap}; use cal_dist_upper")]
    OracleRefusal { t: usize, cap: usize },
    #[error("prediction/outcome dimension mismatch: {a} vs {b}")]
    DimMismatch { a: usize, b: usize },
    #[error("action index {action} outside the utility's {actions}-action set")]
    UnknownAction { action: ActionId, actions: usize },
    #[error("audit requires a {expected} transcript")]
    WrongSetting { expected: &'static str },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Transcript(#[from] crate::transcript::TranscriptError),
}

fn check_lengths(predictions: usize, outcomes: usize) -> Result<(), CalibrationError> {
    if predictions != outcomes {
        return Err(CalibrationError::LengthMismatch {
            predictions,
            outcomes,
        });
    }
    Ok(())
}

/// Expected calibration error: total absolute bias over the level sets of the
/// prediction sequence, grouping by exact double equality.
pub fn ece(predictions: &[f64], outcomes: &[f64]) -> Result<f64, CalibrationError> {
    check_lengths(predictions.len(), outcomes.len())?;
    let mut bias_by_level = std::collections::HashMap::new();
    for (&p, &y) in predictions.iter().zip(outcomes) {
        // +0.0 folds -0.0 into 0.0 so bit-keying matches value equality.
        *bias_by_level.entry((p + 0.0).to_bits()).or_insert(0.0f64) += p - y;
    }
    Ok(bias_by_level.values().map(|b| b.abs()).sum())
}

/// Bucketed expected calibration error with coarseness n: total absolute bias
/// over the buckets the predictions fall in.
pub fn bucketed_ece(predictions: &[f64], outcomes: &[f64], n: usize) -> Result<f64, CalibrationError> {
    check_lengths(predictions.len(), outcomes.len())?;
    let buckets = Bucketing::new(n).map_err(CalibrationError::Domain)?;
    let mut bias = vec![0.0f64; n];
    for (&p, &y) in predictions.iter().zip(outcomes) {
        let i = buckets.bucket_of(p)?;
        bias[i - 1] += p - y;
    }
    Ok(bias.iter().map(|b| b.abs()).sum())
}

/// Upper bound on the distance to calibration: bucketed ECE at coarseness n
/// plus the discretization cost T/n. Valid for any T.
pub fn cal_dist_upper(predictions: &[f64], outcomes: &[f64], n: usize) -> Result<f64, CalibrationError> {
    Ok(bucketed_ece(predictions, outcomes, n)? + predictions.len() as f64 / n as f64)
}

/// Squared error of a scalar prediction sequence.
pub fn sqe(predictions: &[f64], outcomes: &[f64]) -> Result<f64, CalibrationError> {
    check_lengths(predictions.len(), outcomes.len())?;
    Ok(predictions
        .iter()
        .zip(outcomes)
        .map(|(p, y)| (p - y) * (p - y))
        .sum())
}

/// Squared error of a vector prediction sequence: sum over days and
/// coordinates.
pub fn sqe_multi(predictions: &[&Prediction], outcomes: &[&Outcome]) -> Result<f64, CalibrationError> {
    check_lengths(predictions.len(), outcomes.len())?;
    let mut total = 0.0;
    for (p, y) in predictions.iter().zip(outcomes) {
        if p.dim() != y.dim() {
            return Err(CalibrationError::DimMismatch {
                a: p.dim(),
                b: y.dim(),
            });
        }
        total += p
            .values()
            .iter()
            .zip(y.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total)
}

/// Summed utility of an action sequence against revealed outcomes.
pub fn utility_sum(
    actions: &[ActionId],
    outcomes: &[&Outcome],
    utility: &UtilitySpec,
) -> Result<f64, CalibrationError> {
    check_lengths(actions.len(), outcomes.len())?;
    let mut total = 0.0;
    for (&a, y) in actions.iter().zip(outcomes) {
        if a >= utility.n_actions() {
            return Err(CalibrationError::UnknownAction {
                action: a,
                actions: utility.n_actions(),
            });
        }
        total += utility.utility(a, y.values());
    }
    Ok(total)
}

/// Snaps values to the grid {0, 1/m, ..., 1} when they sit within 1e-12 of a
/// grid point, for externally ingested transcripts whose text round trip may
/// have dirtied algorithmic grid values.
pub fn snap_to_grid(values: &mut [f64], m: usize) {
    if m == 0 {
        return;
    }
    for v in values {
        let snapped = (*v * m as f64).round() / m as f64;
        if (*v - snapped).abs() <= 1e-12 && (0.0..=1.0).contains(&snapped) {
            *v = snapped;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ece_cancels_within_level_sets() {
        assert_eq!(ece(&[0.5, 0.5], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(ece(&[0.5, 0.5], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(ece(&[], &[]).unwrap(), 0.0);
        assert!(ece(&[0.5], &[]).is_err());
    }

    #[test]
    fn ece_groups_by_exact_value() {
        // Distinct levels do not cancel against each other.
        let e = ece(&[0.2, 0.8], &[1.0, 0.0]).unwrap();
        assert!((e - 1.6).abs() < 1e-12);
        // -0.0 and 0.0 are the same level value.
        assert_eq!(ece(&[-0.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn bucketed_ece_examples() {
        let e = bucketed_ece(&[0.2, 0.8], &[0.0, 1.0], 1).unwrap();
        assert!(e.abs() < 1e-12);
        let e = bucketed_ece(&[0.2, 0.8], &[0.0, 1.0], 2).unwrap();
        assert!((e - 0.4).abs() < 1e-12);
        assert_eq!(bucketed_ece(&[0.0, 1.0], &[0.0, 1.0], 7).unwrap(), 0.0);
        assert!(bucketed_ece(&[0.5], &[1.0], 0).is_err());
    }

    #[test]
    fn cal_dist_upper_dominates_exact() {
        // Both predictions share a bucket at n=10, so the bucketed ECE is
        // |0.3 - 0 + 0.3 - 1| = 0.4 and the bound is 0.4 + 2/10.
        let p = [0.3, 0.3];
        let y = [0.0, 1.0];
        let upper = cal_dist_upper(&p, &y, 10).unwrap();
        assert!((upper - 0.6).abs() < 1e-12);
        let exact = cal_dist_exact(&p, &y).unwrap();
        assert!(upper >= exact);
        assert!((exact - 0.4).abs() < 1e-12);
        // Perfectly calibrated constant predictions with n=1 pay only T/n.
        let upper = cal_dist_upper(&[0.5, 0.5], &[0.0, 1.0], 1).unwrap();
        assert!((upper - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sqe_examples() {
        assert_eq!(sqe(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(sqe(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 2.0);
        let p = Prediction::new(vec![0.5, 0.5]).unwrap();
        let y = Outcome::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(sqe_multi(&[&p], &[&y]).unwrap(), 0.5);
    }

    #[test]
    fn utility_sum_examples() {
        let u = UtilitySpec::new(
            vec!["a1".into(), "a2".into()],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let y1 = Outcome::new(vec![0.7, 0.3]).unwrap();
        assert_eq!(utility_sum(&[0], &[&y1], &u).unwrap(), 0.7);
        assert_eq!(utility_sum(&[], &[], &u).unwrap(), 0.0);
        let y2 = Outcome::new(vec![1.0, 0.0]).unwrap();
        let y3 = Outcome::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(utility_sum(&[0, 1], &[&y2, &y3], &u).unwrap(), 2.0);
        assert!(utility_sum(&[2], &[&y2], &u).is_err());
    }

    #[test]
    fn snapping_cleans_near_grid_values() {
        let mut vals = vec![0.5 + 4e-13, 0.2499999, 1.0 - 1e-13];
        snap_to_grid(&mut vals, 4);
        assert_eq!(vals[0], 0.5);
        assert_eq!(vals[1], 0.2499999);
        assert_eq!(vals[2], 1.0);
    }
}
