//! Brute-force checks of the policies' guarantees.
//!
//! Every audit enumerates reward vectors and shared draws exactly (no
//! sampling) and reports the worst constraint slack it found together with a
//! witness when the check fails.

use serde::Serialize;
use thiserror::Error;

use crate::enumerate::EnumerationError;
use crate::partition::PartitionError;
use crate::policy::PolicyError;
use crate::rates::RateError;

mod bic;
mod continuous;
mod dominance;
mod maximality;
mod welfare;

pub use bic::{bic_audit, BicTable};
pub use continuous::{
    ascending_order_check, partition_bic_audit, partition_dominance_check,
    partition_equation_audit, partition_path,
};
pub use dominance::{
    reveal_profile, stochastic_dominance_compare, terminal_profile, Dominance, RevealProfile,
};
pub use maximality::{greedy_rates, maximality_audit, GreedyRates};
pub use welfare::{
    evaluate_rates, min_time_against, min_time_check, perturbation_optimality_check,
    required_horizon, PerturbationOptions, RateEvaluation,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Enumeration(#[from] EnumerationError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("horizon {horizon} is below the {required} agents the optimality argument needs")]
    HorizonTooShort { horizon: usize, required: usize },
    #[error("{0}")]
    ScaleExceeded(String),
}

/// One constraint evaluated by an audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlackEntry {
    pub t: usize,
    pub j: usize,
    /// Alternative action for incentive constraints, if any.
    pub i: Option<usize>,
    pub slack: f64,
}

/// Where and how a check failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub t: usize,
    pub j: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alternative: Option<usize>,
    pub slack: f64,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realization: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub check: String,
    pub prior_id: String,
    pub worst_slack: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
    /// Indices of candidates discarded before comparison.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<usize>,
    #[serde(skip)]
    pub tolerance: f64,
    #[serde(skip)]
    pub entries: Vec<SlackEntry>,
}

impl AuditReport {
    /// Builds a report whose pass flag is `worst_slack >= -tolerance`.
    pub fn from_entries(
        check: impl Into<String>,
        prior_id: impl Into<String>,
        tolerance: f64,
        entries: Vec<SlackEntry>,
    ) -> Self {
        let worst = entries
            .iter()
            .min_by(|a, b| a.slack.total_cmp(&b.slack))
            .copied();
        let worst_slack = worst.map_or(0.0, |e| e.slack);
        let pass = worst_slack >= -tolerance;
        let counterexample = match worst {
            Some(e) if !pass => Some(Counterexample {
                t: e.t,
                j: e.j,
                alternative: e.i,
                slack: e.slack,
                detail: String::new(),
                realization: None,
                y: None,
            }),
            _ => None,
        };
        Self {
            check: check.into(),
            prior_id: prior_id.into(),
            worst_slack,
            pass,
            counterexample,
            rejected: Vec::new(),
            tolerance,
            entries,
        }
    }

    pub fn entry(&self, t: usize, j: usize, i: Option<usize>) -> Option<&SlackEntry> {
        self.entries
            .iter()
            .find(|e| e.t == t && e.j == j && e.i == i)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
