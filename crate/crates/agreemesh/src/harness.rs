//! Theorem-bound checks over recorded transcripts, the rate terms that feed
//! their denominators, seeded replication fan-out, and report serialization.
//!
//! A check never passes silently: every record carries the formula it
//! evaluated, the parameters plugged in, and both sides of the inequality,
//! so a verdict can be re-derived from the serialized output alone.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::agents::{build_agents, PriorSource, PriorTable};
use crate::calibration::{sqe_multi, utility_sum, CalibrationError};
use crate::protocol::{
    run_experiment, AgentSpec, OutcomeSource, OutcomeSourceSpec, ProtocolConfig, ProtocolError,
    RunSummary, UtilitySpec,
};
use crate::transcript::{SettingKind, Transcript, TranscriptError};
use crate::types::{derive_seed, speaker_of_round, ActionId, Outcome};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("transcript has no days")]
    EmptyTranscript,
    #[error("{name} must lie in {range}, got {value}")]
    BadParameter { name: &'static str, range: &'static str, value: f64 },
    #[error("unknown theorem {0:?}; expected canonical, d-dim, action, n-agent, bayes-full, or bayes-action")]
    UnknownTheorem(String),
    #[error("carried message at round {k} is numeric, expected an action")]
    ExpectedAction { k: usize },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Convergence theorem whose length bound a check evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TheoremId {
    #[serde(rename = "canonical")]
    Canonical,
    #[serde(rename = "d-dim")]
    DDim,
    #[serde(rename = "action")]
    Action,
    #[serde(rename = "n-agent")]
    NAgent,
    #[serde(rename = "bayes-full")]
    BayesFull,
    #[serde(rename = "bayes-action")]
    BayesAction,
}

impl TheoremId {
    pub fn name(self) -> &'static str {
        match self {
            TheoremId::Canonical => "canonical",
            TheoremId::DDim => "d-dim",
            TheoremId::Action => "action",
            TheoremId::NAgent => "n-agent",
            TheoremId::BayesFull => "bayes-full",
            TheoremId::BayesAction => "bayes-action",
        }
    }

    /// The theorem that governs a recorded setting for two-party transcripts;
    /// rosters with more than two agents fall under the n-agent bound.
    pub fn for_transcript(transcript: &Transcript) -> TheoremId {
        if transcript.n_agents() > 2 {
            return TheoremId::NAgent;
        }
        match transcript.setting() {
            SettingKind::Canonical => TheoremId::Canonical,
            SettingKind::Ddim => TheoremId::DDim,
            SettingKind::Action => TheoremId::Action,
            SettingKind::NAgent => TheoremId::NAgent,
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TheoremId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(TheoremId::Canonical),
            "d-dim" | "ddim" => Ok(TheoremId::DDim),
            "action" => Ok(TheoremId::Action),
            "n-agent" | "nagent" => Ok(TheoremId::NAgent),
            "bayes-full" => Ok(TheoremId::BayesFull),
            "bayes-action" => Ok(TheoremId::BayesAction),
            other => Err(HarnessError::UnknownTheorem(other.to_string())),
        }
    }
}

/// Parameter values a bound was evaluated at.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CheckParams {
    pub epsilon: f64,
    pub delta: f64,
    pub d: usize,
    pub n: usize,
    pub days: usize,
}

impl CheckParams {
    pub fn from_transcript(transcript: &Transcript, delta: f64) -> CheckParams {
        CheckParams {
            epsilon: transcript.epsilon(),
            delta,
            d: transcript.dim().unwrap_or(1),
            n: transcript.n_agents(),
            days: transcript.len(),
        }
    }
}

/// Verdict of a single theorem check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CheckStatus {
    #[serde(rename = "pass")]
    Pass,
    #[serde(rename = "fail")]
    Fail,
    /// The theorem's precondition did not hold on this transcript, so the
    /// inequality asserts nothing. Never counts as a pass.
    #[serde(rename = "not-applicable")]
    NotApplicable,
    /// The rate term swallowed the whole improvement margin; the bound is
    /// vacuous at this horizon and a larger T is needed for a real verdict.
    #[serde(rename = "insufficient-t")]
    BoundVacuous,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::NotApplicable => "not-applicable",
            CheckStatus::BoundVacuous => "insufficient-t",
        })
    }
}

/// One evaluated theorem check: the formula, the parameters, and both sides
/// of the inequality it decided.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremCheck {
    pub theorem: TheoremId,
    pub params: CheckParams,
    pub formula: String,
    pub bound: Option<f64>,
    pub observed: Option<f64>,
    pub status: CheckStatus,
    pub slack: Option<f64>,
}

impl TheoremCheck {
    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    pub fn failed(&self) -> bool {
        self.status == CheckStatus::Fail
    }
}

fn csv_cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v}")).unwrap_or_default()
}

/// CSV rendering of a batch of checks, one row per check. The formula column
/// is quoted so commas inside it survive the round trip.
pub fn checks_to_csv(checks: &[TheoremCheck]) -> String {
    let mut out = String::from("theorem,formula,epsilon,delta,d,n,days,bound,observed,status,slack\n");
    for c in checks {
        out.push_str(&format!(
            "{},\"{}\",{},{},{},{},{},{},{},{},{}\n",
            c.theorem,
            c.formula.replace('"', "\"\""),
            c.params.epsilon,
            c.params.delta,
            c.params.d,
            c.params.n,
            c.params.days,
            csv_cell(c.bound),
            csv_cell(c.observed),
            c.status,
            csv_cell(c.slack),
        ));
    }
    out
}

fn check_interval(
    name: &'static str,
    value: f64,
    lo_open: f64,
    hi: f64,
) -> Result<(), HarnessError> {
    if value.is_finite() && value > lo_open && value <= hi {
        Ok(())
    } else {
        Err(HarnessError::BadParameter { name, range: "(0, 1]", value })
    }
}

/// An evaluated length bound: the closed-form text and its value at the
/// chosen parameters.
#[derive(Debug, Clone, Serialize)]
pub struct Bound {
    pub formula: String,
    pub value: f64,
}

/// The round bound K for the given theorem: the closed-form right-hand
/// side evaluated at (epsilon, delta, d, n).
pub fn agreement_bound(
    theorem: TheoremId,
    epsilon: f64,
    delta: f64,
    d: usize,
    n: usize,
) -> Result<Bound, HarnessError> {
    check_interval("epsilon", epsilon, 0.0, 1.0)?;
    check_interval("delta", delta, 0.0, 1.0)?;
    if d == 0 {
        return Err(HarnessError::BadParameter { name: "d", range: "[1, inf)", value: 0.0 });
    }
    if n < 2 {
        return Err(HarnessError::BadParameter { name: "n", range: "[2, inf)", value: n as f64 });
    }
    let e2d = epsilon * epsilon * delta;
    let (formula, value) = match theorem {
        TheoremId::Canonical => ("2/(eps^2*delta)", 2.0 / e2d),
        TheoremId::DDim => ("2d/(eps^2*delta)", 2.0 * d as f64 / e2d),
        TheoremId::Action => ("1/(eps*delta) + 1", 1.0 / (epsilon * delta) + 1.0),
        TheoremId::NAgent => ("2n/(eps^2*delta)", 2.0 * n as f64 / e2d),
        TheoremId::BayesFull => ("3d/(eps^2*delta)", 3.0 * d as f64 / e2d),
        TheoremId::BayesAction => {
            ("3/(2*eps*delta) + 1", 3.0 / (2.0 * epsilon * delta) + 1.0)
        }
    };
    Ok(Bound { formula: formula.to_string(), value })
}

/// Error-rate term 3d(g_m + g_h + f(g_m T)/(g_m T) + f(g_h T)/(g_h T)) for
/// symmetric parties sharing one discretization width and one calibration
/// envelope; d = 1 recovers the scalar setting. `cal_bound` maps a
/// subsequence length to the guaranteed calibration distance over it.
pub fn beta_rate(
    days: usize,
    d: usize,
    bucket_width: f64,
    cal_bound: impl Fn(usize) -> f64,
) -> f64 {
    let t = days.max(1) as f64;
    let g = bucket_width;
    let budget = (g * t).ceil().max(1.0);
    3.0 * d as f64 * 2.0 * (g + cal_bound(budget as usize) / (g * t))
}

/// Utility-rate term (2Ld|A|^2 f(T/|A|^2) + 2Ld|A|^2 f(T/|A|^2))/T for
/// symmetric parties, where f maps an event activation budget to the
/// guaranteed decision-calibration bias over it.
pub fn gamma_rate(days: usize, utility: &UtilitySpec, dc_bound: impl Fn(usize) -> f64) -> f64 {
    let t = days.max(1) as f64;
    let a2 = (utility.n_actions() * utility.n_actions()) as f64;
    let budget = (t / a2).ceil().max(1.0) as usize;
    4.0 * utility.lipschitz() * utility.dim() as f64 * a2 * dc_bound(budget) / t
}

/// n-party rate term n(3g + 6 f(gT)/(Tg)).
pub fn eta_rate(
    days: usize,
    n: usize,
    bucket_width: f64,
    cal_bound: impl Fn(usize) -> f64,
) -> f64 {
    let t = days.max(1) as f64;
    let g = bucket_width;
    let budget = (g * t).ceil().max(1.0);
    n as f64 * (3.0 * g + 6.0 * cal_bound(budget as usize) / (t * g))
}

/// High-probability per-event bias envelope for the unbiased forecaster:
/// 8(ln(d|E|T) + sqrt(tau ln(d|E|/alpha))). The theorem gives this shape up
/// to a constant; 8 is the audited value.
pub fn unbiased_bias_bound(
    tau: usize,
    days: usize,
    dim: usize,
    n_events: usize,
    alpha: f64,
) -> f64 {
    let t = days.max(1) as f64;
    let e = n_events.max(1) as f64;
    let d = dim.max(1) as f64;
    let tau = tau.max(1) as f64;
    8.0 * ((d * e * t).ln() + (tau * (d * e / alpha).ln()).sqrt())
}

/// The ceil((1-delta)T)-th order statistic (1-based, inclusive) of the
/// lengths. Days that hit the round cap enter at the cap length, which only
/// raises the quantile.
pub fn length_quantile(lengths: &[usize], delta: f64) -> Result<usize, HarnessError> {
    if lengths.is_empty() {
        return Err(HarnessError::EmptyTranscript);
    }
    if !delta.is_finite() || !(0.0..=1.0).contains(&delta) {
        return Err(HarnessError::BadParameter { name: "delta", range: "[0, 1]", value: delta });
    }
    let t = lengths.len();
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    // The 1e-9 slop keeps exact-integer products from rounding up a rank.
    let rank = (((1.0 - delta) * t as f64 - 1e-9).ceil() as usize).clamp(1, t);
    Ok(sorted[rank - 1])
}

/// Checks the empirical (1-delta)-quantile of conversation lengths against a
/// round bound K.
pub fn length_quantile_check(
    transcript: &Transcript,
    theorem: TheoremId,
    delta: f64,
    bound: &Bound,
) -> Result<TheoremCheck, HarnessError> {
    let lengths: Vec<usize> = transcript.lengths().collect();
    let observed = length_quantile(&lengths, delta)? as f64;
    let status = if observed <= bound.value { CheckStatus::Pass } else { CheckStatus::Fail };
    Ok(TheoremCheck {
        theorem,
        params: CheckParams::from_transcript(transcript, delta),
        formula: format!("quantile_(1-delta)(length) <= {}", bound.formula),
        bound: Some(bound.value),
        observed: Some(observed),
        status,
        slack: Some(bound.value - observed),
    })
}

/// Mean per-day squared error of the given side's predictions carried to
/// round k.
pub fn carried_sqe(transcript: &Transcript, k: usize, side: usize) -> Result<f64, HarnessError> {
    if transcript.is_empty() {
        return Err(HarnessError::EmptyTranscript);
    }
    let predictions = transcript.carried_predictions(k, side)?;
    let outcomes: Vec<&Outcome> = transcript.days().iter().map(|d| &d.outcome).collect();
    Ok(sqe_multi(&predictions, &outcomes)? / transcript.len() as f64)
}

/// The given side's action message carried to round k on each day: the
/// action it sent at its last turn at or before round k.
pub fn carried_actions(
    transcript: &Transcript,
    k: usize,
    side: usize,
) -> Result<Vec<ActionId>, HarnessError> {
    if k == 0 {
        return Err(TranscriptError::ZeroRound.into());
    }
    if transcript.is_empty() {
        return Err(HarnessError::EmptyTranscript);
    }
    let n = transcript.n_agents();
    transcript
        .days()
        .iter()
        .map(|d| {
            let last = k.min(d.conversation.len());
            let round = (1..=last)
                .rev()
                .find(|&j| speaker_of_round(j, n) == side)
                .ok_or(TranscriptError::SideSilent { side, k })?;
            d.conversation
                .message(round)
                .and_then(|m| m.as_action())
                .ok_or(HarnessError::ExpectedAction { k: round })
        })
        .collect()
}

/// Checks that predictions carried to round k improved on both opening
/// rounds by at least k times the supplied per-round rate, averaged over
/// days. The rate is eps^2*delta minus the error-rate term; a non-positive
/// rate makes the bound vacuous at this horizon.
pub fn error_improvement_check(
    transcript: &Transcript,
    side: usize,
    k: usize,
    delta: f64,
    rate: f64,
) -> Result<TheoremCheck, HarnessError> {
    if transcript.is_empty() {
        return Err(HarnessError::EmptyTranscript);
    }
    check_interval("delta", delta, 0.0, 1.0)?;
    let t = transcript.len() as f64;
    let reached = transcript.round_subsequence(k)?.len() as f64;
    let observed = carried_sqe(transcript, k, side)?;
    let baseline = carried_sqe(transcript, 1, 1)?.min(carried_sqe(transcript, 2, 2)?);
    let bound = baseline - k as f64 * rate;
    let status = if reached < delta * t {
        CheckStatus::NotApplicable
    } else if rate <= 0.0 {
        CheckStatus::BoundVacuous
    } else if observed <= bound {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    Ok(TheoremCheck {
        theorem: TheoremId::for_transcript(transcript),
        params: CheckParams::from_transcript(transcript, delta),
        formula: format!(
            "SQE(carried {k}, side {side})/T <= min(SQE(round 1)/T, SQE(round 2)/T) - {k}*rate [rate={rate}, reached={reached}]"
        ),
        bound: Some(bound),
        observed: Some(observed),
        status,
        slack: Some(bound - observed),
    })
}

/// Checks that the actions carried to round k gained at least (k-1)*T times
/// the supplied per-round rate in summed utility over both opening rounds.
/// The rate is 2*eps*delta minus the utility-rate term.
pub fn utility_improvement_check(
    transcript: &Transcript,
    utility: &UtilitySpec,
    side: usize,
    k: usize,
    delta: f64,
    rate: f64,
) -> Result<TheoremCheck, HarnessError> {
    if transcript.is_empty() {
        return Err(HarnessError::EmptyTranscript);
    }
    check_interval("delta", delta, 0.0, 1.0)?;
    let t = transcript.len() as f64;
    let reached = transcript.round_subsequence(k)?.len() as f64;
    let outcomes: Vec<&Outcome> = transcript.days().iter().map(|d| &d.outcome).collect();
    let sum_at = |k: usize, side: usize| -> Result<f64, HarnessError> {
        let actions = carried_actions(transcript, k, side)?;
        Ok(utility_sum(&actions, &outcomes, utility)?)
    };
    let observed = sum_at(k, side)?;
    let baseline = sum_at(1, 1)?.max(sum_at(2, 2)?);
    let bound = baseline + (k as f64 - 1.0) * t * rate;
    let status = if reached < delta * t {
        CheckStatus::NotApplicable
    } else if rate <= 0.0 {
        CheckStatus::BoundVacuous
    } else if observed >= bound {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    Ok(TheoremCheck {
        theorem: TheoremId::Action,
        params: CheckParams::from_transcript(transcript, delta),
        formula: format!(
            "U(carried {k}, side {side}) >= max(U(round 1), U(round 2)) + ({k}-1)*T*rate [rate={rate}, reached={reached}]"
        ),
        bound: Some(bound),
        observed: Some(observed),
        status,
        slack: Some(observed - bound),
    })
}

/// Two-sample Kolmogorov-Smirnov statistic: the largest gap between the
/// empirical distribution functions of the two samples.
pub fn ks_statistic(a: &[usize], b: &[usize]) -> Result<f64, HarnessError> {
    if a.is_empty() || b.is_empty() {
        return Err(HarnessError::EmptyTranscript);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_unstable();
    ys.sort_unstable();
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] == v {
            i += 1;
        }
        while j < ys.len() && ys[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

fn worker_count(replications: usize) -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let cap = std::env::var("AGREEMESH_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(available);
    cap.min(available).max(1).min(replications.max(1))
}

/// Runs the body once per replication index with a seed derived from the
/// master seed and the index, fanning out across a worker pool capped by the
/// AGREEMESH_THREADS environment variable. Results come back ordered by
/// index, so any fold over them is deterministic regardless of scheduling.
pub fn replicate<R, F>(
    master_seed: u64,
    replications: usize,
    body: F,
) -> Result<Vec<R>, HarnessError>
where
    R: Send,
    F: Fn(usize, u64) -> Result<R, HarnessError> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(replications))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    pool.install(|| {
        (0..replications)
            .into_par_iter()
            .map(|i| body(i, derive_seed(master_seed, i as u64)))
            .collect()
    })
}

/// One completed experiment: the transcript and its per-run summary.
#[derive(Debug)]
pub struct RunOutput {
    pub transcript: Transcript,
    pub summary: RunSummary,
}

/// Rewrites relative file paths inside a config to live under the given
/// directory, so a config can be run from anywhere relative to its own
/// location.
pub fn anchor_config_paths(config: &mut ProtocolConfig, dir: &std::path::Path) {
    fn anchor(dir: &std::path::Path, path: &str) -> String {
        let p = std::path::Path::new(path);
        if p.is_absolute() {
            path.to_string()
        } else {
            dir.join(p).to_string_lossy().into_owned()
        }
    }
    if let OutcomeSourceSpec::Prior { path } = &mut config.outcome_source {
        *path = anchor(dir, path);
    }
    for spec in &mut config.agents {
        if let AgentSpec::Bayes { prior } = spec {
            *prior = anchor(dir, prior);
        }
    }
}

fn build_source(
    config: &ProtocolConfig,
    seed: u64,
) -> Result<Box<dyn OutcomeSource>, HarnessError> {
    let source_seed = derive_seed(seed, 0);
    match &config.outcome_source {
        OutcomeSourceSpec::Prior { path } => {
            let table = PriorTable::from_path(std::path::Path::new(path))?;
            Ok(Box::new(PriorSource::new(table, source_seed)))
        }
        spec => Ok(spec.build(config.d, config.agents.len(), source_seed)?),
    }
}

/// Runs the configured experiment end to end: builds the outcome source and
/// the agent roster from the config, then drives the engine over the full
/// horizon. Deterministic given the config and seed.
pub fn run_config_seeded(config: &ProtocolConfig, seed: u64) -> Result<RunOutput, HarnessError> {
    config.validate()?;
    let condition = config.condition()?;
    let mut source = build_source(config, seed)?;
    let mut agents = build_agents(config, seed)?;
    let transcript = run_experiment(
        config.setting,
        &condition,
        config.days,
        config.max_rounds,
        source.as_mut(),
        &mut agents,
    )?;
    let summary = RunSummary::from_transcript(&transcript, seed);
    Ok(RunOutput { transcript, summary })
}

/// Runs the configured experiment with the config's own seed.
pub fn run_config(config: &ProtocolConfig) -> Result<RunOutput, HarnessError> {
    run_config_seeded(config, config.seed)
}

/// Per-day lengths as CSV plot data: day index, conversation length, and
/// whether the day closed in agreement.
pub fn lengths_csv(transcript: &Transcript) -> String {
    let mut out = String::from("day,length,agreed\n");
    for (i, day) in transcript.days().iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            i + 1,
            day.conversation.len(),
            day.conversation.agreed(),
        ));
    }
    out
}
