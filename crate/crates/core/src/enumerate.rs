//! Exact forward enumeration of a policy's behavior.
//!
//! Every reward vector with positive probability is combined with every cell
//! of `y` on which the policy is constant. Randomized decisions branch, and
//! branches that land in the same information state are merged, so the work
//! per agent is bounded by (vectors x cells x reachable states).

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::engine::{initial_state, transition, EngineError, InformationState, Recommendation};
use crate::policy::{Decision, OptimalPolicy, Policy, PolicyError, StepContext};
use crate::prior::{Realization, Reward, ValidatedPrior};
use crate::rates::RateSchedule;
use crate::sampler::BREAKPOINT_MERGE;

/// Largest action count handled by exact enumeration.
pub const MAX_ENUMERATION_K: usize = 8;

/// Upper bound on (vectors x cells x agents) before enumeration is refused.
pub const MAX_ENUMERATION_WORK: usize = 200_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnumerationError {
    #[error(
        "enumeration with k = {k}, {cells} y-cells and horizon {horizon} exceeds the work limit"
    )]
    ScaleExceeded {
        k: usize,
        cells: usize,
        horizon: usize,
    },
    #[error("policy has {policy} actions, prior has {prior}")]
    ActionCountMismatch { policy: usize, prior: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// One recommendation issued on one enumerated path.
#[derive(Debug, Clone, Copy)]
pub struct Step<'a> {
    pub t: usize,
    pub x_index: usize,
    pub realization: &'a Realization,
    pub y: f64,
    pub cell: usize,
    /// State before agent `t` acts.
    pub state: &'a InformationState,
    pub recommendation: Recommendation,
    /// Joint probability of this path (vector, y-cell and coin flips).
    pub mass: f64,
}

/// Half-open cells `(lo, hi]` of `y` induced by the policy's breakpoints.
pub fn cells_from_breakpoints(mut points: Vec<f64>) -> Vec<(f64, f64)> {
    points.retain(|p| *p > 0.0 && *p < 1.0);
    points.push(0.0);
    points.push(1.0);
    points.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::with_capacity(points.len());
    for p in points {
        match merged.last_mut() {
            Some(last) if p - *last <= BREAKPOINT_MERGE => {
                if p == 1.0 {
                    *last = 1.0;
                }
            }
            _ => merged.push(p),
        }
    }
    merged.windows(2).map(|w| (w[0], w[1])).collect()
}

struct Node {
    x_index: usize,
    cell: usize,
    state: InformationState,
    mass: f64,
}

/// Walks agents `1..=horizon`, calling `visit` for every issued
/// recommendation. Returns the realization list used for `x_index`.
pub fn enumerate<P, F>(
    policy: &P,
    prior: &ValidatedPrior,
    horizon: usize,
    mut visit: F,
) -> Result<Vec<(Realization, f64)>, EnumerationError>
where
    P: Policy + ?Sized,
    F: FnMut(&Step<'_>),
{
    let k = prior.k();
    if policy.k() != k {
        return Err(EnumerationError::ActionCountMismatch {
            policy: policy.k(),
            prior: k,
        });
    }
    let realizations = prior.realizations();
    let cells = cells_from_breakpoints(policy.y_breakpoints());
    let work = realizations
        .len()
        .saturating_mul(cells.len())
        .saturating_mul(horizon);
    if k > MAX_ENUMERATION_K || work > MAX_ENUMERATION_WORK {
        return Err(EnumerationError::ScaleExceeded {
            k,
            cells: cells.len(),
            horizon,
        });
    }
    let start = initial_state(k)?;
    let mut layer: Vec<Node> = Vec::with_capacity(realizations.len() * cells.len());
    for (xi, (_, px)) in realizations.iter().enumerate() {
        for (ci, (lo, hi)) in cells.iter().enumerate() {
            layer.push(Node {
                x_index: xi,
                cell: ci,
                state: start.clone(),
                mass: px * (hi - lo),
            });
        }
    }
    for t in 1..=horizon {
        let mut next: Vec<Node> = Vec::with_capacity(layer.len());
        let mut index: HashMap<(usize, usize, Vec<Option<Reward>>), usize> = HashMap::new();
        let mut push = |node: Node| {
            let key = (node.x_index, node.cell, node.state.values().to_vec());
            match index.get(&key) {
                Some(&i) => next[i].mass += node.mass,
                None => {
                    index.insert(key, next.len());
                    next.push(node);
                }
            }
        };
        for node in &layer {
            let x = &realizations[node.x_index].0;
            let (lo, hi) = cells[node.cell];
            let y = 0.5 * (lo + hi);
            let ctx = StepContext {
                state: &node.state,
                y,
                realization: x,
            };
            let branches: [(Recommendation, f64); 2] = match policy.decide(&ctx)? {
                Decision::Pure(r) => [(r, node.mass), (r, 0.0)],
                Decision::Split {
                    explore,
                    prob,
                    otherwise,
                } => [
                    (explore, node.mass * prob),
                    (otherwise, node.mass * (1.0 - prob)),
                ],
            };
            for (rec, mass) in branches {
                if mass <= 0.0 {
                    continue;
                }
                visit(&Step {
                    t,
                    x_index: node.x_index,
                    realization: x,
                    y,
                    cell: node.cell,
                    state: &node.state,
                    recommendation: rec,
                    mass,
                });
                if t < horizon {
                    let state = transition(&node.state, rec.action, x.reward(rec.action))?;
                    push(Node {
                        x_index: node.x_index,
                        cell: node.cell,
                        state,
                        mass,
                    });
                }
            }
        }
        layer = next;
    }
    Ok(realizations)
}

/// Distinct information states seen by agent `t` under the optimal policy.
pub fn feasible_states(
    schedule: &RateSchedule,
    t: usize,
) -> Result<BTreeSet<String>, EnumerationError> {
    let policy = OptimalPolicy::from_schedule(schedule.clone());
    let mut out = BTreeSet::new();
    enumerate(&policy, schedule.prior(), t, |s| {
        if s.t == t {
            out.insert(s.state.to_string());
        }
    })?;
    Ok(out)
}

/// Exact expected total reward of agents `1..=horizon`.
pub fn welfare_exact<P: Policy + ?Sized>(
    policy: &P,
    prior: &ValidatedPrior,
    horizon: usize,
) -> Result<f64, EnumerationError> {
    let mut per_agent = vec![0.0; horizon + 1];
    enumerate(policy, prior, horizon, |s| {
        per_agent[s.t] += s.mass * s.realization.value(s.recommendation.action);
    })?;
    Ok(per_agent.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::DiscretePrior;
    use crate::rates::{compute_rate_schedule, HorizonMode};

    #[test]
    fn second_agent_sees_three_states() {
        let p = DiscretePrior::new([0.4, 0.3, 0.3], vec![0.1, 0.05])
            .validate()
            .unwrap();
        let s = compute_rate_schedule(&p, HorizonMode::Unlimited).unwrap();
        let states = feasible_states(&s, 2).unwrap();
        let expected: BTreeSet<String> = ["<1,*,*>", "<0,*,*>", "<-1,*,*>"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(states, expected);
        assert!(feasible_states(&s, 3).unwrap().contains("<0,-1,*>"));
    }

    #[test]
    fn cells_merge_close_points() {
        let cells = cells_from_breakpoints(vec![0.5, 0.5 + 1e-17, 0.25, 1.0]);
        assert_eq!(cells, vec![(0.0, 0.25), (0.25, 0.5), (0.5, 1.0)]);
    }
}
