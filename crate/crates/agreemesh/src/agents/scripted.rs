//! Deterministic agents for drivers and tests: constants, an adversary that
//! never agrees, flat scripts, and transcript replay.

use crate::protocol::{Agent, AgentError, ProtocolError};
use crate::transcript::Transcript;
use crate::types::{speaker_of_round, Feature, Message, Outcome, Prediction};

/// Emits the same message and prediction on every turn.
#[derive(Debug, Clone)]
pub struct ConstantAgent {
    message: Message,
    prediction: Prediction,
}

impl ConstantAgent {
    pub fn numeric(prediction: Prediction) -> Self {
        ConstantAgent { message: Message::Numeric(prediction.clone()), prediction }
    }

    pub fn action(action: usize, prediction: Prediction) -> Self {
        ConstantAgent { message: Message::Action(action), prediction }
    }
}

impl Agent for ConstantAgent {
    fn begin_day(&mut self, _t: usize, _feature: &Feature) -> Result<(), AgentError> {
        Ok(())
    }

    fn speak(
        &mut self,
        _round: usize,
        _history: &[Message],
    ) -> Result<(Message, Prediction), AgentError> {
        Ok((self.message.clone(), self.prediction.clone()))
    }

    fn observe_outcome(&mut self, _outcome: &Outcome) -> Result<(), AgentError> {
        Ok(())
    }
}

/// Scalar adversary that answers every message with one at least epsilon
/// plus a margin away, staying inside the unit interval, so a conversation
/// against it never closes.
#[derive(Debug, Clone)]
pub struct DisagreeAgent {
    gap: f64,
}

impl DisagreeAgent {
    pub fn new(epsilon: f64) -> Result<Self, ProtocolError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(ProtocolError::BadConfig(format!(
                "tolerance {epsilon} must be positive"
            )));
        }
        Ok(DisagreeAgent { gap: 1.5 * epsilon })
    }
}

impl Agent for DisagreeAgent {
    fn begin_day(&mut self, _t: usize, _feature: &Feature) -> Result<(), AgentError> {
        Ok(())
    }

    fn speak(
        &mut self,
        round: usize,
        history: &[Message],
    ) -> Result<(Message, Prediction), AgentError> {
        let v = match history.last() {
            None => 1.0,
            Some(m) => {
                let last = m.scalar().ok_or_else(|| {
                    AgentError::Unsupported(format!("round {round} message is not numeric"))
                })?;
                if last + self.gap <= 1.0 {
                    last + self.gap
                } else if last - self.gap >= 0.0 {
                    last - self.gap
                } else if last < 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        };
        let p = Prediction::scalar(v)?;
        Ok((Message::Numeric(p.clone()), p))
    }

    fn observe_outcome(&mut self, _outcome: &Outcome) -> Result<(), AgentError> {
        Ok(())
    }
}

/// Replays a fixed flat schedule of turns across all days, erroring when the
/// script runs out.
#[derive(Debug, Clone)]
pub struct ScriptAgent {
    turns: std::collections::VecDeque<(Message, Prediction)>,
}

impl ScriptAgent {
    pub fn new(turns: Vec<(Message, Prediction)>) -> Self {
        ScriptAgent { turns: turns.into() }
    }
}

impl Agent for ScriptAgent {
    fn begin_day(&mut self, _t: usize, _feature: &Feature) -> Result<(), AgentError> {
        Ok(())
    }

    fn speak(
        &mut self,
        round: usize,
        _history: &[Message],
    ) -> Result<(Message, Prediction), AgentError> {
        self.turns
            .pop_front()
            .ok_or(AgentError::ScriptExhausted { round })
    }

    fn observe_outcome(&mut self, _outcome: &Outcome) -> Result<(), AgentError> {
        Ok(())
    }
}

/// Re-emits one seat's side of a recorded transcript, day by day. Useful for
/// auditing a stored run through the live engine.
#[derive(Debug, Clone)]
pub struct ReplayAgent {
    days: Vec<Vec<(Message, Prediction)>>,
    position: usize,
    n_agents: usize,
    day: usize,
}

impl ReplayAgent {
    pub fn from_transcript(transcript: &Transcript, position: usize) -> Result<Self, ProtocolError> {
        let n_agents = transcript.n_agents();
        if position == 0 || position > n_agents {
            return Err(ProtocolError::BadConfig(format!(
                "position {position} outside roster of {n_agents}"
            )));
        }
        let days = transcript
            .days()
            .iter()
            .map(|day| {
                let c = &day.conversation;
                (1..=c.len())
                    .filter(|&k| speaker_of_round(k, n_agents) == position)
                    .map(|k| {
                        (
                            c.message(k).expect("round in range").clone(),
                            c.prediction(k).expect("round in range").clone(),
                        )
                    })
                    .collect()
            })
            .collect();
        Ok(ReplayAgent { days, position, n_agents, day: 0 })
    }
}

impl Agent for ReplayAgent {
    fn begin_day(&mut self, t: usize, _feature: &Feature) -> Result<(), AgentError> {
        self.day = t;
        Ok(())
    }

    fn speak(
        &mut self,
        round: usize,
        _history: &[Message],
    ) -> Result<(Message, Prediction), AgentError> {
        if speaker_of_round(round, self.n_agents) != self.position {
            return Err(AgentError::OutOfTurn { round });
        }
        let idx = (round - self.position) / self.n_agents;
        self.days
            .get(self.day.wrapping_sub(1))
            .and_then(|turns| turns.get(idx))
            .cloned()
            .ok_or(AgentError::ScriptExhausted { round })
    }

    fn observe_outcome(&mut self, _outcome: &Outcome) -> Result<(), AgentError> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{run_day, AgreementCondition, AgreementVariant};

    fn canonical(epsilon: f64) -> AgreementCondition {
        AgreementCondition::new(AgreementVariant::Canonical, epsilon).unwrap()
    }

    fn num(v: f64) -> Message {
        Message::Numeric(Prediction::scalar(v).unwrap())
    }

    #[test]
    fn disagree_agent_always_stays_apart() {
        let mut a = DisagreeAgent::new(0.25).unwrap();
        a.begin_day(1, &String::from("x")).unwrap();
        let mut last = a.speak(1, &[]).unwrap().0.scalar().unwrap();
        let mut history = vec![num(last)];
        for round in 2..=40 {
            let (m, _) = a.speak(round, &history).unwrap();
            let v = m.scalar().unwrap();
            assert!((v - last).abs() >= 0.25, "round {round}: {v} vs {last}");
            assert!((0.0..=1.0).contains(&v));
            history.push(m);
            last = v;
        }
    }

    #[test]
    fn disagree_agent_never_agrees_through_the_engine() {
        let mut agents: Vec<Box<dyn Agent>> = vec![
            Box::new(ConstantAgent::numeric(Prediction::scalar(0.5).unwrap())),
            Box::new(DisagreeAgent::new(0.2).unwrap()),
        ];
        let day = run_day(
            &canonical(0.2),
            25,
            1,
            &[String::from("a"), String::from("b")],
            &Outcome::scalar(1.0).unwrap(),
            &mut agents,
        )
        .unwrap();
        assert!(!day.conversation.agreed());
        assert_eq!(day.conversation.len(), 25);
    }

    #[test]
    fn script_agent_errors_when_exhausted() {
        let mut a = ScriptAgent::new(vec![(num(0.1), Prediction::scalar(0.1).unwrap())]);
        a.begin_day(1, &String::from("x")).unwrap();
        assert_eq!(a.speak(1, &[]).unwrap().0.scalar(), Some(0.1));
        assert!(matches!(
            a.speak(3, &[num(0.1), num(0.9)]),
            Err(AgentError::ScriptExhausted { round: 3 })
        ));
    }

    #[test]
    fn replay_agent_mirrors_a_recorded_run() {
        let mut agents: Vec<Box<dyn Agent>> = vec![
            Box::new(ConstantAgent::numeric(Prediction::scalar(0.5).unwrap())),
            Box::new(DisagreeAgent::new(0.2).unwrap()),
        ];
        let cond = canonical(0.2);
        let features = [String::from("a"), String::from("b")];
        let y = Outcome::scalar(1.0).unwrap();
        let mut days = Vec::new();
        for t in 1..=3 {
            days.push(run_day(&cond, 8, t, &features, &y, &mut agents).unwrap());
        }
        let transcript = Transcript::new(
            crate::transcript::SettingKind::Canonical,
            0.2,
            2,
            days.clone(),
        );
        let mut replayed = ReplayAgent::from_transcript(&transcript, 2).unwrap();
        for (t, day) in days.iter().enumerate() {
            replayed.begin_day(t + 1, &String::from("b")).unwrap();
            for k in 1..=day.conversation.len() {
                if speaker_of_round(k, 2) == 2 {
                    let (m, p) = replayed.speak(k, &[]).unwrap();
                    assert_eq!(&m, day.conversation.message(k).unwrap());
                    assert_eq!(&p, day.conversation.prediction(k).unwrap());
                }
            }
            replayed.observe_outcome(&y).unwrap();
        }
        assert!(matches!(
            ReplayAgent::from_transcript(&transcript, 3),
            Err(ProtocolError::BadConfig(_))
        ));
    }
}
