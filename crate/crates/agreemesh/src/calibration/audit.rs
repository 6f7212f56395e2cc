//! Post-hoc auditors that measure conversation calibration and decision
//! calibration on closed transcripts, keyed by conditioning event.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{bucketed_ece, cal_dist_exact, cal_dist_upper, ece, CalibrationError};
use crate::protocol::UtilitySpec;
use crate::transcript::{SettingKind, Transcript};
use crate::types::{speaker_of_round, ActionId, Bucketing};

/// A conditioning event a calibration guarantee quantifies over: the day
/// subsequence at one round where the counterpart's previous message fell in
/// a bucket (scalar or per coordinate), or where a specific action pair was
/// exchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum EventDescriptor {
    CounterpartBucket { k: usize, bucket: usize },
    MarginalCoordinateBucket { k: usize, coord: usize, bucket: usize },
    ActionPair { k: usize, counterpart: ActionId, own: ActionId },
}

impl EventDescriptor {
    pub fn round(&self) -> usize {
        match *self {
            EventDescriptor::CounterpartBucket { k, .. }
            | EventDescriptor::MarginalCoordinateBucket { k, .. }
            | EventDescriptor::ActionPair { k, .. } => k,
        }
    }

    fn csv_label(&self) -> String {
        match *self {
            EventDescriptor::CounterpartBucket { bucket, .. } => format!("bucket:{bucket}"),
            EventDescriptor::MarginalCoordinateBucket { bucket, .. } => format!("bucket:{bucket}"),
            EventDescriptor::ActionPair { counterpart, own, .. } => {
                format!("actions:{counterpart}:{own}")
            }
        }
    }
}

/// Per-event audit figures. `coord` is 1-based; scalar audits use coord 1.
/// `caldist_exact` is present only when the event subsequence fits the exact
/// oracle.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub event: EventDescriptor,
    pub coord: usize,
    pub count: usize,
    pub bias: f64,
    pub ece: f64,
    pub caldist_upper: f64,
    pub caldist_exact: Option<f64>,
}

/// Audit output: one row per (event, coordinate), plus the unconditioned
/// bucketed ECE of the audited side's predictions per round. Raw counts are
/// always included so callers can evaluate any rate bound f(count).
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub rows: Vec<ReportRow>,
    pub ece_by_round: BTreeMap<usize, f64>,
}

impl CalibrationReport {
    /// CSV rendering, one row per (event, coordinate), in (round, event,
    /// coordinate) order. The exact-distance field is empty when the event is
    /// beyond the oracle.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,event,coord,count,bias,ece,caldist_upper,caldist_exact\n");
        for row in &self.rows {
            let exact = row
                .caldist_exact
                .map(|d| d.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.event.round(),
                row.event.csv_label(),
                row.coord,
                row.count,
                row.bias,
                row.ece,
                row.caldist_upper,
                exact
            ));
        }
        out
    }

    /// Structured mirror of the CSV rendering.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serialization cannot fail")
    }
}

/// Which conditioning family a conversation-calibration audit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditMode {
    /// Scalar predictions, events keyed by the counterpart's message bucket.
    Scalar,
    /// Vector predictions, events keyed per coordinate of the counterpart's
    /// message.
    MarginalD,
}

fn metric_row(
    event: EventDescriptor,
    coord: usize,
    p: &[f64],
    y: &[f64],
) -> Result<ReportRow, CalibrationError> {
    let count = p.len();
    let bias: f64 = p.iter().zip(y).map(|(a, b)| a - b).sum();
    let ece_value = ece(p, y)?;
    let n = (count as f64).sqrt().ceil().max(1.0) as usize;
    let caldist_upper_value = cal_dist_upper(p, y, n)?;
    let caldist_exact_value = cal_dist_exact(p, y).ok();
    Ok(ReportRow {
        event,
        coord,
        count,
        bias,
        ece: ece_value,
        caldist_upper: caldist_upper_value,
        caldist_exact: caldist_exact_value,
    })
}

fn require_two_agents(transcript: &Transcript) -> Result<(), CalibrationError> {
    if transcript.n_agents() != 2 {
        return Err(CalibrationError::WrongSetting { expected: "two-agent" });
    }
    Ok(())
}

/// Measures how close the audited side's round-k predictions are to
/// calibration on every subsequence where the counterpart's round-(k-1)
/// message fell in a fixed bucket of the width-g(T) bucketing.
///
/// Per-event rows use coarseness ceil(sqrt(count)) for the distance upper
/// bound and attach the exact distance when the event is oracle-sized.
pub fn audit_conversation_calibration(
    transcript: &Transcript,
    side: usize,
    g: impl Fn(usize) -> f64,
    mode: AuditMode,
) -> Result<CalibrationReport, CalibrationError> {
    if transcript.setting() == SettingKind::Action {
        return Err(CalibrationError::WrongSetting {
            expected: "full-feedback",
        });
    }
    require_two_agents(transcript)?;
    let t_days = transcript.len();
    let dim = transcript.dim().unwrap_or(1);
    if mode == AuditMode::Scalar && dim != 1 {
        return Err(CalibrationError::WrongSetting { expected: "scalar" });
    }
    let buckets = Bucketing::from_width(g(t_days))?;
    let view = transcript.observable_view(side);

    let max_len = transcript.lengths().max().unwrap_or(0);
    let mut rows = Vec::new();
    let mut ece_by_round = BTreeMap::new();
    for k in 1..=max_len {
        if speaker_of_round(k, 2) != side {
            continue;
        }
        let days = transcript.round_subsequence(k)?;
        if days.is_empty() {
            continue;
        }
        let mut round_ece = 0.0;
        for j in 0..dim {
            let p: Vec<f64> = days
                .iter()
                .map(|&t| view.own_prediction(t, k).expect("speaker surface").values()[j])
                .collect();
            let y: Vec<f64> = days
                .iter()
                .map(|&t| view.outcome(t).expect("closed day").values()[j])
                .collect();
            round_ece += bucketed_ece(&p, &y, buckets.count())?;
        }
        ece_by_round.insert(k, round_ece);
        if k == 1 {
            continue;
        }
        match mode {
            AuditMode::Scalar => {
                let mut by_bucket: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                for &t in &days {
                    let msg = view
                        .message(t, k - 1)
                        .and_then(|m| m.scalar())
                        .ok_or(CalibrationError::WrongSetting {
                            expected: "full-feedback",
                        })?;
                    by_bucket.entry(buckets.bucket_of(msg)?).or_default().push(t);
                }
                for (bucket, event_days) in by_bucket {
                    let p: Vec<f64> = event_days
                        .iter()
                        .map(|&t| view.own_prediction(t, k).unwrap().values()[0])
                        .collect();
                    let y: Vec<f64> = event_days
                        .iter()
                        .map(|&t| view.outcome(t).unwrap().values()[0])
                        .collect();
                    rows.push(metric_row(
                        EventDescriptor::CounterpartBucket { k, bucket },
                        1,
                        &p,
                        &y,
                    )?);
                }
            }
            AuditMode::MarginalD => {
                for j in 0..dim {
                    let mut by_bucket: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                    for &t in &days {
                        let msg = view.message(t, k - 1).and_then(|m| m.as_numeric()).ok_or(
                            CalibrationError::WrongSetting {
                                expected: "full-feedback",
                            },
                        )?;
                        by_bucket
                            .entry(buckets.bucket_of(msg.values()[j])?)
                            .or_default()
                            .push(t);
                    }
                    for (bucket, event_days) in by_bucket {
                        let p: Vec<f64> = event_days
                            .iter()
                            .map(|&t| view.own_prediction(t, k).unwrap().values()[j])
                            .collect();
                        let y: Vec<f64> = event_days
                            .iter()
                            .map(|&t| view.outcome(t).unwrap().values()[j])
                            .collect();
                        rows.push(metric_row(
                            EventDescriptor::MarginalCoordinateBucket { k, coord: j + 1, bucket },
                            j + 1,
                            &p,
                            &y,
                        )?);
                    }
                }
            }
        }
    }
    Ok(CalibrationReport { rows, ece_by_round })
}

/// Measures per-coordinate bias of the audited side's underlying predictions
/// conditioned on the exchanged action pair (counterpart's recommendation,
/// own recommendation). Every action pair is reported at every audited round,
/// including empty ones.
pub fn audit_decision_calibration(
    transcript: &Transcript,
    side: usize,
    utility: &UtilitySpec,
) -> Result<CalibrationReport, CalibrationError> {
    if transcript.setting() != SettingKind::Action {
        return Err(CalibrationError::WrongSetting { expected: "action" });
    }
    require_two_agents(transcript)?;
    let dim = transcript.dim().unwrap_or(1);
    let view = transcript.observable_view(side);
    let n_actions = utility.n_actions();

    let max_len = transcript.lengths().max().unwrap_or(0);
    let mut rows = Vec::new();
    let mut ece_by_round = BTreeMap::new();
    for k in 2..=max_len {
        if speaker_of_round(k, 2) != side {
            continue;
        }
        let days = transcript.round_subsequence(k)?;
        if days.is_empty() {
            continue;
        }
        let mut by_pair: BTreeMap<(ActionId, ActionId), Vec<usize>> = BTreeMap::new();
        for &t in &days {
            let counterpart = view.message(t, k - 1).and_then(|m| m.as_action()).ok_or(
                CalibrationError::WrongSetting { expected: "action" },
            )?;
            let own = view
                .message(t, k)
                .and_then(|m| m.as_action())
                .ok_or(CalibrationError::WrongSetting { expected: "action" })?;
            by_pair.entry((counterpart, own)).or_default().push(t);
        }
        let mut round_ece = 0.0;
        for counterpart in 0..n_actions {
            for own in 0..n_actions {
                let event_days = by_pair
                    .get(&(counterpart, own))
                    .map(Vec::as_slice)
                    .unwrap_or(&[]);
                for j in 0..dim {
                    let p: Vec<f64> = event_days
                        .iter()
                        .map(|&t| view.own_prediction(t, k).unwrap().values()[j])
                        .collect();
                    let y: Vec<f64> = event_days
                        .iter()
                        .map(|&t| view.outcome(t).unwrap().values()[j])
                        .collect();
                    rows.push(metric_row(
                        EventDescriptor::ActionPair { k, counterpart, own },
                        j + 1,
                        &p,
                        &y,
                    )?);
                }
            }
        }
        for j in 0..dim {
            let p: Vec<f64> = days
                .iter()
                .map(|&t| view.own_prediction(t, k).unwrap().values()[j])
                .collect();
            let y: Vec<f64> = days
                .iter()
                .map(|&t| view.outcome(t).unwrap().values()[j])
                .collect();
            let n = (days.len() as f64).sqrt().ceil().max(1.0) as usize;
            round_ece += bucketed_ece(&p, &y, n)?;
        }
        ece_by_round.insert(k, round_ece);
    }
    Ok(CalibrationReport { rows, ece_by_round })
}
