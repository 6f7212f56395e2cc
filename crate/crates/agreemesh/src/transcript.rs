//! Conversations, multi-day transcripts, the restriction operators audits
//! are built on, and the line-delimited JSON transcript format.

use std::io::{BufRead, Write};

use serde::Deserialize;
use thiserror::Error;

use crate::types::{speaker_of_round, DomainError, Message, Outcome, Prediction};

/// Which protocol variant produced a transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SettingKind {
    Canonical,
    Ddim,
    Action,
    NAgent,
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("conversation must contain at least one round")]
    EmptyConversation,
    #[error("conversation has {messages} messages but {predictions} predictions")]
    LengthMismatch { messages: usize, predictions: usize },
    #[error("transcript has no days")]
    EmptyTranscript,
    #[error("side {side} has no spoken round at or before round {k}")]
    SideSilent { side: usize, k: usize },
    #[error("round index must be at least 1")]
    ZeroRound,
    #[error("day {line}: {source}")]
    BadDay { line: usize, source: DomainError },
    #[error("day record {line}: {message}")]
    BadRecord { line: usize, message: String },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One day's message exchange: messages and the speakers' underlying
/// predictions, one of each per round, plus whether the day closed by
/// agreement (as opposed to hitting the round cap).
#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    messages: Vec<Message>,
    predictions: Vec<Prediction>,
    agreed: bool,
}

impl Conversation {
    pub fn new(
        messages: Vec<Message>,
        predictions: Vec<Prediction>,
        agreed: bool,
    ) -> Result<Self, TranscriptError> {
        if messages.is_empty() {
            return Err(TranscriptError::EmptyConversation);
        }
        if messages.len() != predictions.len() {
            return Err(TranscriptError::LengthMismatch {
                messages: messages.len(),
                predictions: predictions.len(),
            });
        }
        Ok(Self {
            messages,
            predictions,
            agreed,
        })
    }

    /// Number of rounds spoken this day.
    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn agreed(&self) -> bool {
        self.agreed
    }

    /// Message of 1-based round k.
    pub fn message(&self, k: usize) -> Option<&Message> {
        k.checked_sub(1).and_then(|i| self.messages.get(i))
    }

    pub fn prediction(&self, k: usize) -> Option<&Prediction> {
        k.checked_sub(1).and_then(|i| self.predictions.get(i))
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn predictions(&self) -> &[Prediction] {
        &self.predictions
    }
}

/// A closed day: its conversation and the outcome revealed at day close.
#[derive(Debug, Clone, PartialEq)]
pub struct Day {
    pub conversation: Conversation,
    pub outcome: Outcome,
}

/// Full record of an experiment: every day's conversation and outcome, the
/// setting that produced it, and the agreement tolerance used.
#[derive(Debug, Clone)]
pub struct Transcript {
    setting: SettingKind,
    epsilon: f64,
    n_agents: usize,
    days: Vec<Day>,
}

impl Transcript {
    pub fn new(setting: SettingKind, epsilon: f64, n_agents: usize, days: Vec<Day>) -> Self {
        Self {
            setting,
            epsilon,
            n_agents,
            days,
        }
    }

    pub fn setting(&self) -> SettingKind {
        self.setting
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn days(&self) -> &[Day] {
        &self.days
    }

    /// Number of days T.
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Day by 1-based index.
    pub fn day(&self, t: usize) -> Option<&Day> {
        t.checked_sub(1).and_then(|i| self.days.get(i))
    }

    /// Outcome dimension d, fixed across days.
    pub fn dim(&self) -> Option<usize> {
        self.days.first().map(|d| d.outcome.dim())
    }

    pub fn lengths(&self) -> impl Iterator<Item = usize> + '_ {
        self.days.iter().map(|d| d.conversation.len())
    }

    /// The subsequence of days whose conversations reached round k, in
    /// ascending 1-based day order.
    pub fn round_subsequence(&self, k: usize) -> Result<Vec<usize>, TranscriptError> {
        if k == 0 {
            return Err(TranscriptError::ZeroRound);
        }
        Ok(self
            .days
            .iter()
            .enumerate()
            .filter(|(_, d)| d.conversation.len() >= k)
            .map(|(i, _)| i + 1)
            .collect())
    }

    /// For each day, the given side's prediction at round k, carried forward:
    /// days that ended before round k contribute the side's prediction at the
    /// last round it spoke.
    pub fn carried_predictions(
        &self,
        k: usize,
        side: usize,
    ) -> Result<Vec<&Prediction>, TranscriptError> {
        if k == 0 {
            return Err(TranscriptError::ZeroRound);
        }
        if self.days.is_empty() {
            return Err(TranscriptError::EmptyTranscript);
        }
        self.days
            .iter()
            .map(|d| {
                let last = k.min(d.conversation.len());
                (1..=last)
                    .rev()
                    .find(|&j| speaker_of_round(j, self.n_agents) == side)
                    .and_then(|j| d.conversation.prediction(j))
                    .ok_or(TranscriptError::SideSilent { side, k })
            })
            .collect()
    }

    /// What the given side could observe: every message plus its own
    /// predictions, with the counterpart prediction column masked.
    pub fn observable_view(&self, side: usize) -> ObservableView<'_> {
        ObservableView {
            transcript: self,
            side,
        }
    }
}

/// Read-only view of a transcript restricted to one side's observable
/// information.
#[derive(Clone, Copy)]
pub struct ObservableView<'a> {
    transcript: &'a Transcript,
    side: usize,
}

impl<'a> ObservableView<'a> {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn transcript_len(&self) -> usize {
        self.transcript.len()
    }

    /// Messages are public.
    pub fn message(&self, t: usize, k: usize) -> Option<&'a Message> {
        self.transcript.day(t).and_then(|d| d.conversation.message(k))
    }

    /// Predictions are visible only on the viewing side's own rounds.
    pub fn own_prediction(&self, t: usize, k: usize) -> Option<&'a Prediction> {
        if speaker_of_round(k, self.transcript.n_agents()) != self.side {
            return None;
        }
        self.transcript
            .day(t)
            .and_then(|d| d.conversation.prediction(k))
    }

    pub fn outcome(&self, t: usize) -> Option<&'a Outcome> {
        self.transcript.day(t).map(|d| &d.outcome)
    }
}

/// Serializes a float with 17 significant digits, enough for a bit-faithful
/// round trip through the text format.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_vec(values: &[f64], out: &mut String) {
    out.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&fmt_f64(*v));
    }
    out.push(']');
}

/// Writes one line-delimited JSON record per day, in day order:
/// `{"t": int, "messages": [...], "predictions": [...], "outcome": [...], "len": int}`.
/// Numeric messages are arrays of floats; action messages are integer action
/// indices.
pub fn write_jsonl<W: Write>(days: &[Day], mut w: W) -> std::io::Result<()> {
    let mut line = String::new();
    for (i, day) in days.iter().enumerate() {
        line.clear();
        line.push_str("{\"t\":");
        line.push_str(&(i + 1).to_string());
        line.push_str(",\"messages\":[");
        for (j, msg) in day.conversation.messages().iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            match msg {
                Message::Numeric(p) => fmt_vec(p.values(), &mut line),
                Message::Action(a) => line.push_str(&a.to_string()),
            }
        }
        line.push_str("],\"predictions\":[");
        for (j, p) in day.conversation.predictions().iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            fmt_vec(p.values(), &mut line);
        }
        line.push_str("],\"outcome\":");
        fmt_vec(day.outcome.values(), &mut line);
        line.push_str(",\"len\":");
        line.push_str(&day.conversation.len().to_string());
        line.push_str("}\n");
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DayWire {
    t: usize,
    messages: Vec<MessageWire>,
    predictions: Vec<Vec<f64>>,
    outcome: Vec<f64>,
    len: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MessageWire {
    Action(usize),
    Numeric(Vec<f64>),
}

/// Reads the day records of [`write_jsonl`]. The caller supplies the setting
/// metadata the line format does not carry.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<Day>, TranscriptError> {
    let mut days = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let wire: DayWire =
            serde_json::from_str(&line).map_err(|source| TranscriptError::Json {
                line: lineno,
                source,
            })?;
        if wire.t != days.len() + 1 {
            return Err(TranscriptError::BadRecord {
                line: lineno,
                message: format!("day index {} out of order, expected {}", wire.t, days.len() + 1),
            });
        }
        if wire.len != wire.messages.len() {
            return Err(TranscriptError::BadRecord {
                line: lineno,
                message: format!(
                    "len field {} does not match {} messages",
                    wire.len,
                    wire.messages.len()
                ),
            });
        }
        let bad = |source| TranscriptError::BadDay { line: lineno, source };
        let messages = wire
            .messages
            .into_iter()
            .map(|m| match m {
                MessageWire::Action(a) => Ok(Message::Action(a)),
                MessageWire::Numeric(v) => Prediction::new(v).map(Message::Numeric),
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(bad)?;
        let predictions = wire
            .predictions
            .into_iter()
            .map(Prediction::new)
            .collect::<Result<Vec<_>, _>>()
            .map_err(bad)?;
        let outcome = Outcome::new(wire.outcome).map_err(bad)?;
        let conversation = Conversation::new(messages, predictions, false)?;
        days.push(Day {
            conversation,
            outcome,
        });
    }
    Ok(days)
}
