//! Run configuration files.
//!
//! A config is a TOML document with the action count `k`, exactly one of a
//! `[discrete]` or `[continuous]` prior block, and the mode to run. Unknown
//! keys anywhere are rejected.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use bic_explore::{ContinuousInstance, ContinuousPrior, DiscretePrior, PriorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Exploration-rate schedule for a discrete prior.
    Rates,
    /// Interval partition for a continuous prior.
    Partition,
    /// Monte-Carlo welfare of the optimal policy.
    Simulate,
    /// Incentive and optimality audits.
    Audit,
    /// Side-by-side comparison against baseline policies.
    Compare,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Rates => "rates",
            Mode::Partition => "partition",
            Mode::Simulate => "simulate",
            Mode::Audit => "audit",
            Mode::Compare => "compare",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteSpec {
    /// `[Pr[+1], Pr[0], Pr[-1]]` for action 1.
    pub p1: [f64; 3],
    /// `Pr[+1]` for actions `2..=k`.
    pub p_plus: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Uniform,
    PiecewiseLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousSpec {
    pub family: Family,
    /// CDF knots `[x, F(x)]` for the piecewise-linear family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<[f64; 2]>>,
    /// `Pr[+1]` for actions `2..=k`.
    pub p_plus: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub bic: f64,
    pub equation: f64,
    pub welfare: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            bic: 1e-9,
            equation: 1e-8,
            welfare: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mode: Mode,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Apply the remaining-agents gate to the schedule.
    #[serde(default)]
    pub limited: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Grid size for the continuous ordering check.
    #[serde(default = "default_grid")]
    pub x1_grid: usize,
    /// Rates CSV to audit instead of the computed schedule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrete: Option<DiscreteSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuous: Option<ContinuousSpec>,
}

fn default_reps() -> usize {
    10_000
}

fn default_grid() -> usize {
    2_001
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: unknown key `{key}`")]
    UnknownKey {
        key: String,
        line: usize,
        column: usize,
    },
    #[error("line {line}, column {column}: {detail}")]
    TypeMismatch {
        detail: String,
        line: usize,
        column: usize,
    },
    #[error("missing required key `{field}`")]
    MissingField { field: String },
    #[error("line {line}, column {column}: {detail}")]
    Syntax {
        detail: String,
        line: usize,
        column: usize,
    },
    #[error("both [discrete] and [continuous] prior blocks are present")]
    BothPriors,
    #[error("no [discrete] or [continuous] prior block")]
    MissingPrior,
    #[error("k = {k} but the prior lists {listed} tail actions")]
    ActionCount { k: usize, listed: usize },
    #[error("mode `{mode}` needs a {needs} prior")]
    WrongPrior { mode: Mode, needs: &'static str },
    #[error("mode `{mode}` needs `horizon`")]
    MissingHorizon { mode: Mode },
    #[error("piecewise_linear family needs `knots`")]
    MissingKnots,
    #[error(transparent)]
    Prior(#[from] PriorError),
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn between_backticks(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

fn classify(text: &str, err: toml::de::Error) -> ConfigError {
    let msg = err.message().trim().to_string();
    let (line, column) = err.span().map_or((0, 0), |s| line_col(text, s.start));
    if msg.starts_with("unknown field") {
        ConfigError::UnknownKey {
            key: between_backticks(&msg).unwrap_or_default(),
            line,
            column,
        }
    } else if msg.starts_with("missing field") {
        ConfigError::MissingField {
            field: between_backticks(&msg).unwrap_or_default(),
        }
    } else if msg.starts_with("invalid type")
        || msg.starts_with("invalid value")
        || msg.starts_with("unknown variant")
        || msg.starts_with("invalid length")
    {
        ConfigError::TypeMismatch {
            detail: msg,
            line,
            column,
        }
    } else {
        ConfigError::Syntax {
            detail: msg,
            line,
            column,
        }
    }
}

/// The validated prior a config describes.
#[derive(Debug, Clone)]
pub enum PriorSpec {
    Discrete(DiscretePrior),
    Continuous(ContinuousInstance),
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| classify(text, e))?;
        let listed = match (&cfg.discrete, &cfg.continuous) {
            (Some(_), Some(_)) => return Err(ConfigError::BothPriors),
            (None, None) => return Err(ConfigError::MissingPrior),
            (Some(d), None) => d.p_plus.len(),
            (None, Some(c)) => c.p_plus.len(),
        };
        if listed + 1 != cfg.k {
            return Err(ConfigError::ActionCount { k: cfg.k, listed });
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn prior(&self) -> Result<PriorSpec, ConfigError> {
        if let Some(d) = &self.discrete {
            return Ok(PriorSpec::Discrete(DiscretePrior::new(
                d.p1,
                d.p_plus.clone(),
            )));
        }
        let c = self.continuous.as_ref().ok_or(ConfigError::MissingPrior)?;
        let d1 = match c.family {
            Family::Uniform => ContinuousPrior::uniform(),
            Family::PiecewiseLinear => {
                let knots = c.knots.as_ref().ok_or(ConfigError::MissingKnots)?;
                ContinuousPrior::piecewise_linear(knots.iter().map(|k| (k[0], k[1])).collect())?
            }
        };
        Ok(PriorSpec::Continuous(ContinuousInstance::new(
            d1,
            c.p_plus.clone(),
        )?))
    }

    pub fn require_horizon(&self) -> Result<usize, ConfigError> {
        self.horizon
            .ok_or(ConfigError::MissingHorizon { mode: self.mode })
    }
}
