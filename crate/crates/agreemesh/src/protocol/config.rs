//! JSON run configuration: setting, tolerance, horizon, roster, outcome
//! source, and optional utility, with strict validation and no silently
//! ignored fields.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgreementCondition, AgreementVariant, ProtocolError, UtilitySpec};
use crate::transcript::SettingKind;

/// Hard per-day round cap; hitting it records a non-agreement day.
pub const DEFAULT_MAX_ROUNDS: usize = 10_000;

fn default_max_rounds() -> usize {
    DEFAULT_MAX_ROUNDS
}

fn default_dim() -> usize {
    1
}

/// A static feature-to-prediction mapping used as the round-1 base model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BaseModelSpec {
    Constant { value: Vec<f64> },
    Table {
        default: Vec<f64>,
        map: BTreeMap<String, Vec<f64>>,
    },
}

impl BaseModelSpec {
    pub(crate) fn validate(&self, d: usize) -> Result<(), ProtocolError> {
        let check = |value: &[f64]| -> Result<(), ProtocolError> {
            if value.len() != d {
                return Err(ProtocolError::BadConfig(format!(
                    "base model emits dimension {}, run uses {d}",
                    value.len()
                )));
            }
            for &v in value {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ProtocolError::BadConfig(format!(
                        "base model value {v} outside [0, 1]"
                    )));
                }
            }
            Ok(())
        };
        match self {
            BaseModelSpec::Constant { value } => check(value),
            BaseModelSpec::Table { default, map } => {
                check(default)?;
                map.values().try_for_each(|v| check(v))
            }
        }
    }
}

/// Which sequential calibrated predictor backs a Converse agent's instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    Aosa,
    Aost,
}

fn default_predictor() -> PredictorKind {
    PredictorKind::Aost
}

/// Declarative description of one roster slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AgentSpec {
    Converse {
        base: BaseModelSpec,
        #[serde(default = "default_predictor")]
        predictor: PredictorKind,
    },
    ConverseDdim {
        base: BaseModelSpec,
        #[serde(default = "default_predictor")]
        predictor: PredictorKind,
    },
    ConverseAction { base: BaseModelSpec },
    ConverseMany { base: BaseModelSpec },
    Bayes { prior: String },
    Constant { value: Vec<f64> },
    Disagree {},
}

impl AgentSpec {
    fn validate(&self, setting: SettingKind, d: usize) -> Result<(), ProtocolError> {
        let numeric_only = |kind: &str| -> Result<(), ProtocolError> {
            if setting == SettingKind::Action {
                return Err(ProtocolError::BadConfig(format!(
                    "{kind} agents exchange numeric messages, not actions"
                )));
            }
            Ok(())
        };
        match self {
            AgentSpec::Converse { base, .. } => {
                numeric_only("converse")?;
                if d != 1 {
                    return Err(ProtocolError::BadConfig(
                        "converse agents predict scalars; use converse-ddim".into(),
                    ));
                }
                base.validate(d)
            }
            AgentSpec::ConverseDdim { base, .. } => {
                numeric_only("converse-ddim")?;
                base.validate(d)
            }
            AgentSpec::ConverseAction { base } => {
                if setting != SettingKind::Action {
                    return Err(ProtocolError::BadConfig(
                        "converse-action agents require the action setting".into(),
                    ));
                }
                base.validate(d)
            }
            AgentSpec::ConverseMany { base } => {
                if setting != SettingKind::NAgent {
                    return Err(ProtocolError::BadConfig(
                        "converse-many agents require the n-agent setting".into(),
                    ));
                }
                base.validate(d)
            }
            AgentSpec::Bayes { prior } => {
                if prior.is_empty() {
                    return Err(ProtocolError::BadConfig("empty prior path".into()));
                }
                Ok(())
            }
            AgentSpec::Constant { value } => {
                numeric_only("constant")?;
                BaseModelSpec::Constant { value: value.clone() }.validate(d)
            }
            AgentSpec::Disagree {} => numeric_only("disagree"),
        }
    }
}

/// One explicit day of a fixed stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedDaySpec {
    pub features: Vec<String>,
    pub outcome: Vec<f64>,
}

/// Where each day's features and outcome come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OutcomeSourceSpec {
    /// Explicit per-day list; errors when the horizon outruns it.
    Fixed { days: Vec<FixedDaySpec> },
    /// Seeded binary stream with a sinusoidally drifting base rate; each
    /// side's feature bit shifts the rate by a different amount.
    DriftingBinary { period: usize },
    /// Independent per-coordinate binary draws with phase-shifted drifts.
    DriftingCoordinates { period: usize },
    /// One-hot draws from a drifting categorical over d classes.
    DriftingCategorical { period: usize },
    /// i.i.d. world draws from a prior table on disk.
    Prior { path: String },
}

/// Complete description of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub setting: SettingKind,
    pub epsilon: f64,
    pub days: usize,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    pub agents: Vec<AgentSpec>,
    pub outcome_source: OutcomeSourceSpec,
    pub seed: u64,
    #[serde(default = "default_dim")]
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilitySpec>,
}

impl ProtocolConfig {
    pub fn from_json(text: &str) -> Result<Self, ProtocolError> {
        let config: ProtocolConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, ProtocolError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(ProtocolError::BadConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_rounds == 0 {
            return Err(ProtocolError::BadConfig("max_rounds must be at least 1".into()));
        }
        if self.d == 0 {
            return Err(ProtocolError::BadConfig("d must be at least 1".into()));
        }
        match self.setting {
            SettingKind::Canonical if self.d != 1 => {
                return Err(ProtocolError::BadConfig(
                    "the canonical setting is one-dimensional".into(),
                ));
            }
            SettingKind::NAgent if self.d != 1 => {
                return Err(ProtocolError::BadConfig(
                    "the n-agent setting uses scalar messages".into(),
                ));
            }
            _ => {}
        }
        let expected_roster = match self.setting {
            SettingKind::NAgent => None,
            _ => Some(2),
        };
        if let Some(n) = expected_roster {
            if self.agents.len() != n {
                return Err(ProtocolError::BadConfig(format!(
                    "setting needs {n} agents, roster has {}",
                    self.agents.len()
                )));
            }
        } else if self.agents.len() < 2 {
            return Err(ProtocolError::BadConfig(
                "n-agent runs need at least 2 agents".into(),
            ));
        }
        match (self.setting, &self.utility) {
            (SettingKind::Action, None) => {
                return Err(ProtocolError::BadConfig(
                    "the action setting requires a utility".into(),
                ));
            }
            (SettingKind::Action, Some(u)) if u.dim() != self.d => {
                return Err(ProtocolError::BadConfig(format!(
                    "utility has {} payoff states, run uses d={}",
                    u.dim(),
                    self.d
                )));
            }
            (SettingKind::Action, Some(_)) => {}
            (_, Some(_)) => {
                return Err(ProtocolError::BadConfig(
                    "utility is only meaningful in the action setting".into(),
                ));
            }
            (_, None) => {}
        }
        for agent in &self.agents {
            agent.validate(self.setting, self.d)?;
        }
        if let OutcomeSourceSpec::Fixed { days } = &self.outcome_source {
            for (i, day) in days.iter().enumerate() {
                if day.features.len() != self.agents.len() {
                    return Err(ProtocolError::BadConfig(format!(
                        "fixed day {} has {} features for {} agents",
                        i + 1,
                        day.features.len(),
                        self.agents.len()
                    )));
                }
                if day.outcome.len() != self.d {
                    return Err(ProtocolError::BadConfig(format!(
                        "fixed day {} outcome has dimension {}, run uses {}",
                        i + 1,
                        day.outcome.len(),
                        self.d
                    )));
                }
            }
        }
        Ok(())
    }

    /// The agreement condition this run closes days with.
    pub fn condition(&self) -> Result<AgreementCondition, ProtocolError> {
        let variant = match self.setting {
            SettingKind::Canonical => AgreementVariant::Canonical,
            SettingKind::Ddim => AgreementVariant::Ddim,
            SettingKind::Action => AgreementVariant::Action(
                self.utility
                    .clone()
                    .ok_or_else(|| ProtocolError::BadConfig("missing utility".into()))?,
            ),
            SettingKind::NAgent => {
                AgreementVariant::NAgree(Box::new(AgreementVariant::Canonical))
            }
        };
        AgreementCondition::new(variant, self.epsilon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> String {
        r#"{
            "setting": "canonical",
            "epsilon": 0.25,
            "days": 100,
            "max_rounds": 50,
            "agents": [
                {"kind": "converse", "base": {"kind": "constant", "value": [0.5]}},
                {"kind": "converse", "base": {"kind": "constant", "value": [0.4]}, "predictor": "aosa"}
            ],
            "outcome_source": {"kind": "drifting-binary", "period": 200},
            "seed": 7,
            "d": 1
        }"#
        .to_string()
    }

    #[test]
    fn full_config_round_trips() {
        let config = ProtocolConfig::from_json(&base_config()).unwrap();
        assert_eq!(config.days, 100);
        assert_eq!(config.max_rounds, 50);
        assert_eq!(config.agents.len(), 2);
        let json = serde_json::to_string(&config).unwrap();
        let again = ProtocolConfig::from_json(&json).unwrap();
        assert_eq!(config, again);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = base_config().replace("\"seed\": 7,", "\"seed\": 7, \"extra\": 1,");
        assert!(matches!(
            ProtocolConfig::from_json(&text),
            Err(ProtocolError::Json(_))
        ));
    }

    #[test]
    fn defaults_fill_max_rounds_and_dim() {
        let text = base_config()
            .replace("\"max_rounds\": 50,", "")
            .replace(",\n            \"d\": 1", "");
        let config = ProtocolConfig::from_json(&text).unwrap();
        assert_eq!(config.max_rounds, DEFAULT_MAX_ROUNDS);
        assert_eq!(config.d, 1);
    }

    #[test]
    fn bad_epsilon_and_roster_are_rejected() {
        let zero_eps = base_config().replace("\"epsilon\": 0.25", "\"epsilon\": 0");
        assert!(ProtocolConfig::from_json(&zero_eps).is_err());
        let config = ProtocolConfig::from_json(&base_config()).unwrap();
        let mut short = config.clone();
        short.agents.truncate(1);
        assert!(short.validate().is_err());
    }

    #[test]
    fn action_setting_requires_matching_utility() {
        let mut config = ProtocolConfig::from_json(&base_config()).unwrap();
        config.setting = SettingKind::Action;
        config.d = 2;
        config.agents = vec![
            AgentSpec::ConverseAction {
                base: BaseModelSpec::Constant { value: vec![0.5, 0.5] },
            };
            2
        ];
        assert!(config.validate().is_err());
        config.utility = Some(
            UtilitySpec::new(
                vec!["a".into(), "b".into()],
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            )
            .unwrap(),
        );
        config.validate().unwrap();
        // A utility outside the action setting is a configuration error.
        let mut stray = ProtocolConfig::from_json(&base_config()).unwrap();
        stray.utility = config.utility.clone();
        assert!(stray.validate().is_err());
    }

    #[test]
    fn setting_and_agent_kind_must_match() {
        let mut config = ProtocolConfig::from_json(&base_config()).unwrap();
        config.agents[0] = AgentSpec::ConverseMany {
            base: BaseModelSpec::Constant { value: vec![0.5] },
        };
        assert!(config.validate().is_err());
        let text = base_config().replace("\"d\": 1", "\"d\": 3");
        assert!(ProtocolConfig::from_json(&text).is_err());
    }

    #[test]
    fn fixed_source_dimensions_are_checked() {
        let mut config = ProtocolConfig::from_json(&base_config()).unwrap();
        config.outcome_source = OutcomeSourceSpec::Fixed {
            days: vec![FixedDaySpec {
                features: vec!["0".into()],
                outcome: vec![1.0],
            }],
        };
        assert!(config.validate().is_err());
        config.outcome_source = OutcomeSourceSpec::Fixed {
            days: vec![FixedDaySpec {
                features: vec!["0".into(), "1".into()],
                outcome: vec![1.0],
            }],
        };
        config.validate().unwrap();
    }

    #[test]
    fn condition_matches_setting() {
        let config = ProtocolConfig::from_json(&base_config()).unwrap();
        let cond = config.condition().unwrap();
        assert_eq!(cond.variant, AgreementVariant::Canonical);
        assert_eq!(cond.epsilon, 0.25);
    }
}
