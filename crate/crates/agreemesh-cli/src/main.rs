//! Command line front end: run configured experiments, audit recorded
//! transcripts, evaluate theorem bounds, drive one-shot Bayesian trials, and
//! generate random prior tables.
//!
//! Exit codes: 0 on success, 1 when a requested check fails, 2 on config or
//! input errors (clap reports usage errors with the same code).

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use agreemesh::agents::{
    default_bucket_width, sample_prior, BayesianAgent, CounterpartModel, PriorSource, PriorTable,
};
use agreemesh::calibration::{
    audit_conversation_calibration, audit_decision_calibration, AuditMode,
};
use agreemesh::harness::{
    agreement_bound, anchor_config_paths, checks_to_csv, length_quantile, length_quantile_check,
    lengths_csv, replicate, run_config_seeded, CheckParams, CheckStatus, TheoremCheck, TheoremId,
};
use agreemesh::protocol::{
    run_experiment, Agent, AgreementCondition, AgreementVariant, ProtocolConfig,
};
use agreemesh::transcript::{read_jsonl, write_jsonl, Day, SettingKind, Transcript};
use agreemesh::types::derive_seed;

#[derive(Parser)]
#[command(name = "agreemesh", version, about = "Agreement protocol simulator and auditor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AuditModeArg {
    /// Scalar conversation calibration, events keyed by counterpart bucket.
    Scalar,
    /// Per-coordinate conversation calibration for vector predictions.
    Marginal,
    /// Decision calibration conditioned on exchanged action pairs.
    Decision,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config; write the transcript,
    /// a JSON summary, and per-day lengths CSV next to it.
    Simulate {
        config: PathBuf,
        /// Output path prefix; defaults to the config path minus extension.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the seed recorded in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Audit a recorded transcript's calibration; prints the report CSV.
    Audit {
        transcript: PathBuf,
        /// Side to audit: 1 or "model", 2 or "human".
        #[arg(long)]
        side: String,
        #[arg(long, value_enum)]
        mode: AuditModeArg,
        /// Config that produced the transcript; required in decision mode,
        /// which needs the utility matrix.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run seeded one-shot conversations between two Bayesians over a prior
    /// and check the one-shot agreement bound.
    Bayes {
        prior: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Round cap per conversation; defaults to four times the bound.
        #[arg(long)]
        max_rounds: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Evaluate a theorem's length bound against a recorded transcript.
    Report {
        transcript: PathBuf,
        /// Theorem to check: canonical, d-dim, action, n-agent, bayes-full,
        /// or bayes-action.
        #[arg(long)]
        check: String,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        /// Outcome dimension; defaults to the transcript's.
        #[arg(long)]
        d: Option<usize>,
        /// Number of parties.
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Sample a random prior table and print it as JSON.
    GenPrior {
        #[arg(long)]
        worlds: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        symbols: usize,
        #[arg(long, default_value_t = 1)]
        d: usize,
        /// Write to this file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Verdict {
    Clean,
    FailedChecks,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Verdict::Clean) => ExitCode::SUCCESS,
        Ok(Verdict::FailedChecks) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<Verdict> {
    match cli.command {
        Command::Simulate { config, out, seed } => simulate(&config, out, seed),
        Command::Audit { transcript, side, mode, config } => {
            audit(&transcript, &side, mode, config.as_deref())
        }
        Command::Bayes { prior, eps, delta, trials, seed, max_rounds, format } => {
            bayes(&prior, eps, delta, trials, seed, max_rounds, format)
        }
        Command::Report { transcript, check, eps, delta, d, n, format } => {
            report(&transcript, &check, eps, delta, d, n, format)
        }
        Command::GenPrior { worlds, seed, symbols, d, out } => {
            gen_prior(worlds, seed, symbols, d, out.as_deref())
        }
    }
}

fn load_config(path: &Path) -> Result<ProtocolConfig> {
    let mut config = ProtocolConfig::from_path(path)
        .with_context(|| format!("config {}", path.display()))?;
    if let Some(dir) = path.parent() {
        anchor_config_paths(&mut config, dir);
    }
    Ok(config)
}

fn load_days(path: &Path) -> Result<Vec<Day>> {
    let file = fs::File::open(path).with_context(|| format!("transcript {}", path.display()))?;
    let days =
        read_jsonl(BufReader::new(file)).with_context(|| format!("transcript {}", path.display()))?;
    if days.is_empty() {
        bail!("transcript {} has no days", path.display());
    }
    Ok(days)
}

fn simulate(config_path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<Verdict> {
    let config = load_config(config_path)?;
    let seed = seed.unwrap_or(config.seed);
    let run = run_config_seeded(&config, seed)?;

    let prefix = out.unwrap_or_else(|| config_path.with_extension(""));
    let transcript_path = path_with_suffix(&prefix, ".transcript.jsonl");
    let summary_path = path_with_suffix(&prefix, ".summary.json");
    let lengths_path = path_with_suffix(&prefix, ".lengths.csv");

    let mut buf = Vec::new();
    write_jsonl(run.transcript.days(), &mut buf)?;
    fs::write(&transcript_path, buf)
        .with_context(|| format!("writing {}", transcript_path.display()))?;
    let summary = serde_json::to_string_pretty(&run.summary)?;
    fs::write(&summary_path, format!("{summary}\n"))
        .with_context(|| format!("writing {}", summary_path.display()))?;
    fs::write(&lengths_path, lengths_csv(&run.transcript))
        .with_context(|| format!("writing {}", lengths_path.display()))?;

    println!("{summary}");
    eprintln!(
        "wrote {}, {}, {}",
        transcript_path.display(),
        summary_path.display(),
        lengths_path.display()
    );
    Ok(Verdict::Clean)
}

fn path_with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn parse_side(side: &str) -> Result<usize> {
    match side {
        "1" | "model" => Ok(1),
        "2" | "human" => Ok(2),
        other => {
            if let Ok(n) = other.parse::<usize>() {
                if n >= 1 {
                    return Ok(n);
                }
            }
            Err(anyhow!("side {other:?} is not 1/model, 2/human, or a seat number"))
        }
    }
}

/// Rebuilds transcript metadata from raw recorded days: the setting is read
/// off the first day's message kinds and outcome dimension.
fn infer_setting(days: &[Day]) -> SettingKind {
    let first = &days[0];
    if first.conversation.message(1).and_then(|m| m.as_action()).is_some() {
        return SettingKind::Action;
    }
    if first.outcome.dim() > 1 {
        return SettingKind::Ddim;
    }
    SettingKind::Canonical
}

fn audit(
    transcript_path: &Path,
    side: &str,
    mode: AuditModeArg,
    config_path: Option<&Path>,
) -> Result<Verdict> {
    let days = load_days(transcript_path)?;
    let side = parse_side(side)?;
    let config = config_path.map(load_config).transpose()?;
    let epsilon = config.as_ref().map(|c| c.epsilon).unwrap_or(0.0);
    let setting = infer_setting(&days);
    let transcript = Transcript::new(setting, epsilon, 2, days);
    let report = match mode {
        AuditModeArg::Scalar => audit_conversation_calibration(
            &transcript,
            side,
            default_bucket_width,
            AuditMode::Scalar,
        )?,
        AuditModeArg::Marginal => audit_conversation_calibration(
            &transcript,
            side,
            default_bucket_width,
            AuditMode::MarginalD,
        )?,
        AuditModeArg::Decision => {
            let utility = config
                .ok_or_else(|| anyhow!("decision mode needs --config for the utility matrix"))?
                .utility
                .ok_or_else(|| anyhow!("config has no utility section"))?;
            audit_decision_calibration(&transcript, side, &utility)?
        }
    };
    print!("{}", report.to_csv());
    Ok(Verdict::Clean)
}

fn bayes(
    prior_path: &Path,
    eps: f64,
    delta: f64,
    trials: usize,
    seed: u64,
    max_rounds: Option<usize>,
    format: Format,
) -> Result<Verdict> {
    let table =
        PriorTable::from_path(prior_path).with_context(|| format!("prior {}", prior_path.display()))?;
    if trials == 0 {
        bail!("at least one trial is needed");
    }
    let d = table.dim();
    let bound = agreement_bound(TheoremId::BayesFull, eps, delta, d, 2)?;
    let cap = max_rounds.unwrap_or(((bound.value.ceil() as usize) * 4).max(64));
    let (setting, variant) = if d > 1 {
        (SettingKind::Ddim, AgreementVariant::Ddim)
    } else {
        (SettingKind::Canonical, AgreementVariant::Canonical)
    };
    let condition = AgreementCondition::new(variant, eps)?;

    let lengths = replicate(seed, trials, |_, trial_seed| {
        let mut source = PriorSource::new(table.clone(), derive_seed(trial_seed, 0));
        let mut agents: Vec<Box<dyn Agent>> = vec![
            Box::new(BayesianAgent::new(table.clone(), 1, None, CounterpartModel::Bayesian, d)?),
            Box::new(BayesianAgent::new(table.clone(), 2, None, CounterpartModel::Bayesian, d)?),
        ];
        let t = run_experiment(setting, &condition, 1, cap, &mut source, &mut agents)?;
        let len = t.lengths().next().expect("one day was run");
        Ok(len)
    })?;

    let observed = length_quantile(&lengths, delta)? as f64;
    let status = if observed <= bound.value { CheckStatus::Pass } else { CheckStatus::Fail };
    let check = TheoremCheck {
        theorem: TheoremId::BayesFull,
        params: CheckParams { epsilon: eps, delta, d, n: 2, days: trials },
        formula: format!("quantile_(1-delta)(length) <= {}", bound.formula),
        bound: Some(bound.value),
        observed: Some(observed),
        status,
        slack: Some(bound.value - observed),
    };
    render_checks(&[check.clone()], format)?;
    Ok(if check.failed() { Verdict::FailedChecks } else { Verdict::Clean })
}

fn report(
    transcript_path: &Path,
    check: &str,
    eps: f64,
    delta: f64,
    d: Option<usize>,
    n: usize,
    format: Format,
) -> Result<Verdict> {
    let days = load_days(transcript_path)?;
    let theorem: TheoremId = check.parse()?;
    let setting = match theorem {
        TheoremId::Canonical | TheoremId::BayesFull => infer_setting(&days),
        TheoremId::DDim => SettingKind::Ddim,
        TheoremId::Action | TheoremId::BayesAction => SettingKind::Action,
        TheoremId::NAgent => SettingKind::NAgent,
    };
    let transcript = Transcript::new(setting, eps, n, days);
    let d = d.or(transcript.dim()).unwrap_or(1);
    let bound = agreement_bound(theorem, eps, delta, d, n)?;
    let check = length_quantile_check(&transcript, theorem, delta, &bound)?;
    render_checks(&[check.clone()], format)?;
    Ok(if check.failed() { Verdict::FailedChecks } else { Verdict::Clean })
}

fn render_checks(checks: &[TheoremCheck], format: Format) -> Result<()> {
    match format {
        Format::Csv => print!("{}", checks_to_csv(checks)),
        Format::Json => println!("{}", serde_json::to_string_pretty(checks)?),
        Format::Table => {
            let cell = |x: Option<f64>| x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
            println!(
                "{:<12} {:<44} {:>12} {:>12} {:<16} {:>12}",
                "theorem", "formula", "bound", "observed", "status", "slack"
            );
            for c in checks {
                println!(
                    "{:<12} {:<44} {:>12} {:>12} {:<16} {:>12}",
                    c.theorem.to_string(),
                    c.formula,
                    cell(c.bound),
                    cell(c.observed),
                    c.status.to_string(),
                    cell(c.slack),
                );
            }
        }
    }
    Ok(())
}

fn gen_prior(
    worlds: usize,
    seed: u64,
    symbols: usize,
    d: usize,
    out: Option<&Path>,
) -> Result<Verdict> {
    let table = sample_prior(seed, worlds, symbols, d)?;
    let json = serde_json::to_string_pretty(&table)?;
    match out {
        Some(path) => {
            fs::write(path, format!("{json}\n")).with_context(|| format!("writing {}", path.display()))?
        }
        None => println!("{json}"),
    }
    Ok(Verdict::Clean)
}
