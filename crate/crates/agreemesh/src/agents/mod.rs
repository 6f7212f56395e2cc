//! Agent implementations: reduction agents built on online calibrated
//! predictors, exact Bayesian agents over finite common priors, and
//! deterministic scripted agents, plus the roster builder that turns a run
//! configuration into live agents.

mod action;
mod bayes;
mod converse;
mod many;
mod scripted;

pub use action::ConverseActionAgent;
pub use bayes::{
    sample_prior, BayesianAgent, CounterpartModel, PriorSource, PriorTable, PriorWorld,
    PROBABILITY_TOLERANCE,
};
pub use converse::{ConverseAgent, ConverseDdimAgent};
pub use many::ConverseManyAgent;
pub use scripted::{ConstantAgent, DisagreeAgent, ReplayAgent, ScriptAgent};

use std::path::Path;

use crate::protocol::{Agent, AgentSpec, BaseModelSpec, ProtocolConfig, ProtocolError};
use crate::types::{derive_seed, Feature, Prediction};

/// Failure probability allotted to each unbiased forecaster instance.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Message-bucket width g(T) = T^(-1/3) used to key reduction instances; the
/// n-party forecaster's cells use the finer width g(T)^2.
pub fn default_bucket_width(days: usize) -> f64 {
    (days.max(1) as f64).powf(-1.0 / 3.0)
}

/// Runtime form of a base model: a pure mapping from a feature symbol to a
/// prediction, fixed for the whole run.
#[derive(Debug, Clone)]
pub struct BaseModel {
    spec: BaseModelSpec,
}

impl BaseModel {
    pub fn new(spec: BaseModelSpec, d: usize) -> Result<Self, ProtocolError> {
        spec.validate(d)?;
        Ok(BaseModel { spec })
    }

    pub fn predict(&self, feature: &Feature) -> Prediction {
        let values = match &self.spec {
            BaseModelSpec::Constant { value } => value.clone(),
            BaseModelSpec::Table { default, map } => map.get(feature).unwrap_or(default).clone(),
        };
        Prediction::new(values).expect("validated at construction")
    }
}

/// Builds the configured roster. Each seat draws a seed derived from the run
/// seed and its position, so rebuilding the same configuration yields
/// byte-identical behavior.
pub fn build_agents(
    config: &ProtocolConfig,
    run_seed: u64,
) -> Result<Vec<Box<dyn Agent>>, ProtocolError> {
    config.validate()?;
    (1..=config.agents.len())
        .map(|position| build_agent(config, position, run_seed))
        .collect()
}

fn build_agent(
    config: &ProtocolConfig,
    position: usize,
    run_seed: u64,
) -> Result<Box<dyn Agent>, ProtocolError> {
    let n = config.agents.len();
    let spec = &config.agents[position - 1];
    let seed = derive_seed(run_seed, position as u64);
    let g = default_bucket_width(config.days);
    match spec {
        AgentSpec::Converse { base, predictor } => {
            let base = BaseModel::new(base.clone(), config.d)?;
            Ok(Box::new(ConverseAgent::new(
                base,
                *predictor,
                position,
                n,
                config.days,
                config.epsilon,
                g,
            )?))
        }
        AgentSpec::ConverseDdim { base, predictor } => {
            let base = BaseModel::new(base.clone(), config.d)?;
            Ok(Box::new(ConverseDdimAgent::new(
                base,
                *predictor,
                position,
                config.d,
                config.days,
                config.epsilon,
                g,
            )?))
        }
        AgentSpec::ConverseAction { base } => {
            let utility = config
                .utility
                .clone()
                .ok_or_else(|| ProtocolError::BadConfig("missing utility".into()))?;
            let base = BaseModel::new(base.clone(), config.d)?;
            Ok(Box::new(ConverseActionAgent::new(
                base,
                utility,
                position,
                config.d,
                config.days,
                DEFAULT_ALPHA,
                seed,
            )?))
        }
        AgentSpec::ConverseMany { base } => {
            if position != 1 {
                return Err(ProtocolError::BadConfig(
                    "the n-party reduction agent takes the first seat".into(),
                ));
            }
            let base = BaseModel::new(base.clone(), config.d)?;
            Ok(Box::new(ConverseManyAgent::new(
                base,
                n,
                config.days,
                config.epsilon,
                DEFAULT_ALPHA,
                seed,
                g,
                g * g,
            )?))
        }
        AgentSpec::Bayes { prior } => {
            if n != 2 {
                return Err(ProtocolError::BadConfig(
                    "bayesian agents run in two-party settings".into(),
                ));
            }
            let table = PriorTable::from_path(Path::new(prior))?;
            let counterpart = match &config.agents[2 - position] {
                AgentSpec::Bayes { .. } => CounterpartModel::Bayesian,
                AgentSpec::Constant { .. } | AgentSpec::Disagree {} => {
                    CounterpartModel::Uninformative
                }
                AgentSpec::Converse { base, predictor } => {
                    let other_base = BaseModel::new(base.clone(), config.d)?;
                    let shadow = ConverseAgent::new(
                        other_base,
                        *predictor,
                        3 - position,
                        2,
                        config.days,
                        config.epsilon,
                        g,
                    )?;
                    CounterpartModel::Converse(Box::new(shadow))
                }
                AgentSpec::ConverseDdim { .. }
                | AgentSpec::ConverseAction { .. }
                | AgentSpec::ConverseMany { .. } => {
                    return Err(ProtocolError::BadConfig(
                        "bayesian agents can face bayesian, scripted, or scalar reduction \
                         counterparts only"
                            .into(),
                    ));
                }
            };
            Ok(Box::new(BayesianAgent::new(
                table,
                position,
                config.utility.clone(),
                counterpart,
                config.d,
            )?))
        }
        AgentSpec::Constant { value } => Ok(Box::new(ConstantAgent::numeric(Prediction::new(
            value.clone(),
        )?))),
        AgentSpec::Disagree {} => Ok(Box::new(DisagreeAgent::new(config.epsilon)?)),
    }
}
