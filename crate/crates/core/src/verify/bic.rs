use crate::enumerate::enumerate;
use crate::policy::Policy;
use crate::prior::ValidatedPrior;

use super::{AuditReport, SlackEntry, VerifyError};

/// Recommendations with less probability than this carry no constraint.
const MIN_PROBABILITY: f64 = 1e-14;

/// Joint recommendation probabilities and payoff sums per agent.
#[derive(Debug, Clone)]
pub struct BicTable {
    k: usize,
    horizon: usize,
    /// `mass[t][j]` = Pr[sigma_t = j].
    mass: Vec<Vec<f64>>,
    /// `sums[t][j][i]` = E[X_i ; sigma_t = j].
    sums: Vec<Vec<Vec<f64>>>,
}

impl BicTable {
    pub fn compute<P: Policy + ?Sized>(
        policy: &P,
        prior: &ValidatedPrior,
        horizon: usize,
    ) -> Result<Self, VerifyError> {
        let k = prior.k();
        let mut mass = vec![vec![0.0; k + 1]; horizon + 1];
        let mut sums = vec![vec![vec![0.0; k + 1]; k + 1]; horizon + 1];
        enumerate(policy, prior, horizon, |s| {
            let j = s.recommendation.action;
            mass[s.t][j] += s.mass;
            for i in 1..=k {
                sums[s.t][j][i] += s.mass * s.realization.value(i);
            }
        })?;
        Ok(Self {
            k,
            horizon,
            mass,
            sums,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn probability(&self, t: usize, j: usize) -> f64 {
        self.mass[t][j]
    }

    /// `E[X_j ; sigma_t = j]`, agent `t`'s expected reward from `j` recommendations.
    pub fn joint_value(&self, t: usize, j: usize) -> f64 {
        self.sums[t][j][j]
    }

    /// `E[(X_j - X_i) 1{sigma_t = j}]`.
    pub fn joint_gain(&self, t: usize, j: usize, i: usize) -> f64 {
        self.sums[t][j][j] - self.sums[t][j][i]
    }

    /// `E[X_j - X_i | sigma_t = j]`, if `j` is recommended at all.
    pub fn conditional_gain(&self, t: usize, j: usize, i: usize) -> Option<f64> {
        let m = self.mass[t][j];
        (m > MIN_PROBABILITY).then(|| self.joint_gain(t, j, i) / m)
    }

    /// One entry per (agent, recommended action, alternative).
    pub fn entries(&self) -> Vec<SlackEntry> {
        let mut out = Vec::new();
        for t in 1..=self.horizon {
            for j in 1..=self.k {
                for i in (1..=self.k).filter(|&i| i != j) {
                    if let Some(slack) = self.conditional_gain(t, j, i) {
                        out.push(SlackEntry {
                            t,
                            j,
                            i: Some(i),
                            slack,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Checks that every recommendation issued with positive probability is a
/// best response: `E[u_t(j) - u_t(i) | sigma_t = j] >= -tol` for all `i`.
pub fn bic_audit<P: Policy + ?Sized>(
    policy: &P,
    prior: &ValidatedPrior,
    horizon: usize,
    tol: f64,
) -> Result<AuditReport, VerifyError> {
    let table = BicTable::compute(policy, prior, horizon)?;
    let mut report = AuditReport::from_entries("bic", prior.id(), tol, table.entries());
    if let Some(cx) = report.counterexample.as_mut() {
        let (t, j, i) = (cx.t, cx.j, cx.alternative.unwrap_or(1));
        let mut best: Option<(f64, String, f64)> = None;
        enumerate(policy, prior, t, |s| {
            if s.t == t
                && s.recommendation.action == j
                && s.realization.value(j) < s.realization.value(i)
                && best.as_ref().is_none_or(|b| s.mass > b.0)
            {
                best = Some((s.mass, s.realization.to_string(), s.y));
            }
        })?;
        cx.detail = format!(
            "agent {t} told to take {j} expects {:.3e} less than from action {i}",
            -cx.slack
        );
        if let Some((_, x, y)) = best {
            cx.realization = Some(x);
            cx.y = Some(y);
        }
    }
    Ok(report)
}
