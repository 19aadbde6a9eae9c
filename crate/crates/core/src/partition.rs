//! Partition policy for a continuous reward on action 1.
//!
//! Once agent 1 reveals `x_1`, each action `j >= 2` owns a run of adjacent
//! intervals `theta_t^j = (i_t^j, i_{t+1}^j]`; agent `t` explores `j` exactly
//! when `x_1` falls in `theta_t^j`. The endpoints are chosen so that every
//! recommendation of `j` is exactly as attractive as action 1 on average:
//! the first interval balances the agents for whom `j` is a priori better
//! against the exploration loss, and every later interval balances the gain
//! of already having found `x_j = +1` against the new loss.
//!
//! Intervals are left-open, except that `theta_j^j` also contains `-1`.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::numeric::{find_root, RootError};
use crate::prior::{ContinuousInstance, PriorError};

/// Absolute tolerance on each interval endpoint.
pub const ROOT_TOLERANCE: f64 = 1e-10;

/// Endpoints this close to 1 are snapped to 1.
pub const SATURATION_TOLERANCE: f64 = 1e-12;

/// Allowed numerical slack in the monotonicity checks.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError {
    #[error("no endpoint below 1 balances the constraint for action {j} (needs {lhs}, at most {rhs_at_one} available)")]
    NoBracket { j: usize, lhs: f64, rhs_at_one: f64 },
    #[error("interval endpoints not monotone for action {j} at agent {t}: {detail}")]
    MonotonicityViolation { j: usize, t: usize, detail: String },
    #[error("x_1 = {x1} lies in the intervals of actions {first} and {second} at agent {t}")]
    OverlapDetected {
        t: usize,
        x1: f64,
        first: usize,
        second: usize,
    },
    #[error("action index {j} out of range 2..={k}")]
    ActionOutOfRange { j: usize, k: usize },
    #[error("endpoint i_{t} is only defined for t <= {max}")]
    AgentOutOfRange { t: usize, max: usize },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    Prior(#[from] PriorError),
}

/// Left side of the first-interval equation: the exploitation gain of
/// recommending `j` to agents with `x_1 <= mu_j` after `2..j-1` failed.
pub fn first_interval_gain(inst: &ContinuousInstance, j: usize) -> f64 {
    let mu = inst.mu(j);
    inst.tail_minus_product(j) * -inst.d1().partial_expectation(-1.0, mu, mu)
}

/// Left side of the step equation: the gain from `x_j = +1` having been
/// found by an earlier explorer, i.e. for `x_1 <= i_t`.
pub fn step_gain(inst: &ContinuousInstance, j: usize, left: f64) -> f64 {
    inst.p_plus(j) * -inst.d1().partial_expectation(-1.0, left, 1.0)
}

fn check_action(inst: &ContinuousInstance, j: usize) -> Result<(), PartitionError> {
    if j < 2 || j > inst.k() {
        return Err(PartitionError::ActionOutOfRange { j, k: inst.k() });
    }
    Ok(())
}

/// Right endpoint of `theta_j^j`: the `omega` where the exploration loss on
/// `(mu_j, omega]` uses up [`first_interval_gain`].
pub fn solve_omega_first(inst: &ContinuousInstance, j: usize) -> Result<f64, PartitionError> {
    solve_omega_first_scaled(inst, j, 1.0)
}

fn solve_omega_first_scaled(
    inst: &ContinuousInstance,
    j: usize,
    scale: f64,
) -> Result<f64, PartitionError> {
    check_action(inst, j)?;
    let mu = inst.mu(j);
    let lhs = scale * first_interval_gain(inst, j);
    solve_balance(inst, j, mu, mu, lhs)
}

/// Right endpoint following `left = i_t^j` for `t > j`.
pub fn solve_omega_step(
    inst: &ContinuousInstance,
    j: usize,
    left: f64,
) -> Result<f64, PartitionError> {
    solve_omega_step_scaled(inst, j, left, 1.0)
}

fn solve_omega_step_scaled(
    inst: &ContinuousInstance,
    j: usize,
    left: f64,
    scale: f64,
) -> Result<f64, PartitionError> {
    check_action(inst, j)?;
    if left >= 1.0 {
        return Ok(1.0);
    }
    let lhs = scale * step_gain(inst, j, left);
    solve_balance(inst, j, left, inst.mu(j), lhs)
}

/// Solves `PE(start, omega, mu) = lhs` for `omega` in `[start, 1]`.
fn solve_balance(
    inst: &ContinuousInstance,
    j: usize,
    start: f64,
    mu: f64,
    lhs: f64,
) -> Result<f64, PartitionError> {
    let d1 = inst.d1();
    if lhs <= 0.0 {
        return Ok(start);
    }
    let rhs_at_one = d1.try_partial_expectation(start, 1.0, mu)?;
    if rhs_at_one < lhs {
        return Err(PartitionError::NoBracket { j, lhs, rhs_at_one });
    }
    let g = |w: f64| d1.partial_expectation(start, w, mu) - lhs;
    Ok(find_root(g, start, 1.0, ROOT_TOLERANCE)?)
}

/// Endpoints `i_t^j` for `t = 1..=horizon + 1` and every action.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionSchedule {
    k: usize,
    horizon: usize,
    /// `endpoints[j - 2][t - 1] = i_t^j`.
    endpoints: Vec<Vec<f64>>,
    saturation: Vec<Option<usize>>,
    means: Vec<f64>,
}

/// One CSV line: the interval ending at `i_t^j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionRow {
    pub j: usize,
    pub t: usize,
    pub i_left: f64,
    pub i_right: f64,
}

pub fn compute_interval_schedule(
    inst: &ContinuousInstance,
    horizon: usize,
) -> Result<PartitionSchedule, PartitionError> {
    compute_scaled_schedule(inst, horizon, 1.0)
}

/// Same construction with both gains multiplied by `scale`. A scale below 1
/// yields a valid, strictly more cautious partition with shorter intervals.
pub fn compute_scaled_schedule(
    inst: &ContinuousInstance,
    horizon: usize,
    scale: f64,
) -> Result<PartitionSchedule, PartitionError> {
    if horizon == 0 {
        return Err(PartitionError::ZeroHorizon);
    }
    let k = inst.k();
    let mut endpoints = Vec::with_capacity(k - 1);
    let mut saturation = Vec::with_capacity(k - 1);
    for j in 2..=k {
        let mut col = vec![-1.0; horizon + 1];
        let mut sat = None;
        if j <= horizon {
            let mut current = snap(first_or_one(solve_omega_first_scaled(inst, j, scale))?);
            col[j] = current;
            let mut t = j;
            while current < 1.0 && t < horizon {
                t += 1;
                let next = snap(first_or_one(solve_omega_step_scaled(
                    inst, j, current, scale,
                ))?);
                if next + MONOTONICITY_TOLERANCE < current {
                    return Err(PartitionError::MonotonicityViolation {
                        j,
                        t,
                        detail: format!("i_{} = {next} < i_{t} = {current}", t + 1),
                    });
                }
                current = next.max(current);
                col[t] = current;
            }
            if current >= 1.0 {
                sat = Some(t);
                for v in col.iter_mut().skip(t + 1) {
                    *v = 1.0;
                }
            }
        }
        endpoints.push(col);
        saturation.push(sat);
    }
    let schedule = PartitionSchedule {
        k,
        horizon,
        endpoints,
        saturation,
        means: (1..=k).map(|j| inst.mu(j)).collect(),
    };
    schedule.check_nesting()?;
    Ok(schedule)
}

fn first_or_one(r: Result<f64, PartitionError>) -> Result<f64, PartitionError> {
    match r {
        Err(PartitionError::NoBracket { .. }) => Ok(1.0),
        other => other,
    }
}

fn snap(v: f64) -> f64 {
    if v >= 1.0 - SATURATION_TOLERANCE {
        1.0
    } else {
        v
    }
}

impl PartitionSchedule {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn mu(&self, j: usize) -> f64 {
        self.means[j - 1]
    }

    /// `i_t^j` for `1 <= t <= horizon + 1`.
    pub fn endpoint(&self, j: usize, t: usize) -> Result<f64, PartitionError> {
        if j < 2 || j > self.k {
            return Err(PartitionError::ActionOutOfRange { j, k: self.k });
        }
        if t == 0 || t > self.horizon + 1 {
            return Err(PartitionError::AgentOutOfRange {
                t,
                max: self.horizon + 1,
            });
        }
        Ok(self.endpoints[j - 2][t - 1])
    }

    fn at(&self, j: usize, t: usize) -> f64 {
        self.endpoints[j - 2][t - 1]
    }

    /// `(i_t^j, i_{t+1}^j)` for `1 <= t <= horizon`.
    pub fn interval(&self, j: usize, t: usize) -> (f64, f64) {
        (self.at(j, t), self.at(j, t + 1))
    }

    /// First `t` with `i_{t+1}^j = 1`, if reached within the horizon.
    pub fn saturation(&self, j: usize) -> Option<usize> {
        self.saturation[j - 2]
    }

    /// Whether `x_1` lies in `theta_t^j`.
    pub fn contains(&self, j: usize, t: usize, x1: f64) -> bool {
        if t == 0 || t > self.horizon || j < 2 || j > self.k {
            return false;
        }
        let (lo, hi) = self.interval(j, t);
        (x1 > lo && x1 <= hi) || (t == j && x1 == -1.0 && hi > -1.0)
    }

    /// Every endpoint across all actions, sorted and deduplicated.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.endpoints.iter().flatten().copied().collect();
        v.push(-1.0);
        v.push(1.0);
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    fn check_nesting(&self) -> Result<(), PartitionError> {
        for j in 2..self.k {
            for t in j..=self.horizon {
                let (a, b) = (self.at(j, t), self.at(j + 1, t + 1));
                if a + MONOTONICITY_TOLERANCE < b {
                    return Err(PartitionError::MonotonicityViolation {
                        j,
                        t,
                        detail: format!("i_{t}^{j} = {a} < i_{}^{} = {b}", t + 1, j + 1),
                    });
                }
            }
        }
        Ok(())
    }

    /// CSV rows for `t = j + 1` up to the first endpoint equal to 1.
    pub fn rows(&self) -> Vec<PartitionRow> {
        let mut out = Vec::new();
        for j in 2..=self.k {
            let end = self.saturation(j).map_or(self.horizon + 1, |s| s + 1);
            for t in j + 1..=end.min(self.horizon + 1) {
                out.push(PartitionRow {
                    j,
                    t,
                    i_left: self.at(j, t - 1),
                    i_right: self.at(j, t),
                });
            }
        }
        out
    }

    /// Writes `j,t,i_left,i_right` with endpoints rounded to 10 decimals.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["j", "t", "i_left", "i_right"])?;
        for r in self.rows() {
            wtr.write_record([
                r.j.to_string(),
                r.t.to_string(),
                format_endpoint(r.i_left),
                format_endpoint(r.i_right),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Fixed 10-decimal rendering with trailing zeros removed.
pub fn format_endpoint(v: f64) -> String {
    let s = format!("{v:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Recommendation of the partition policy to agent `t`.
///
/// `first_plus` is the lowest explored action known to hold `+1`.
pub fn partition_recommend(
    schedule: &PartitionSchedule,
    t: usize,
    x1: f64,
    first_plus: Option<usize>,
) -> Result<usize, PartitionError> {
    if t <= 1 {
        return Ok(1);
    }
    if let Some(j) = first_plus {
        return Ok(j);
    }
    let mut hit = None;
    for j in 2..=schedule.k() {
        if schedule.contains(j, t, x1) {
            if let Some(first) = hit {
                return Err(PartitionError::OverlapDetected {
                    t,
                    x1,
                    first,
                    second: j,
                });
            }
            hit = Some(j);
        }
    }
    Ok(hit.unwrap_or(1))
}
