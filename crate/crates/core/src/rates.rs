//! Maximal exploration-rate schedule for the discrete setting.
//!
//! For every action `j >= 2` and agent `t`, `q_t^j` is the probability that
//! agent `t` is told to explore `j` while the planner sits in the state
//! "action 1 returned 0, actions `2..j-1` returned -1, `j` still unknown".
//! The rate is the largest value that keeps the recommendation incentive
//! compatible (coefficient `A`) without exceeding the probability mass that
//! is still available in that state (coefficient `B`).

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::prior::ValidatedPrior;

/// Default bound on how far the recurrence may run for a single action.
pub const DEFAULT_AGENT_CAP: usize = 1_000_000;

/// Residuals of `B` this close to zero are treated as zero.
pub const B_CLAMP: f64 = 1e-14;

/// Allowed gap between `rho_j` and the summed rates.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RateError {
    #[error("action {j} has p_plus = {p} >= 1/2; the rate formula needs a negative mean")]
    DivisionGuard { j: usize, p: f64 },
    #[error("action index {j} out of range 2..={k}")]
    ActionOutOfRange { j: usize, k: usize },
    #[error("rates for action {j} need the first {needed} entries of a prefix, only {got} given")]
    MissingPrefix { j: usize, needed: usize, got: usize },
    #[error("rates for action {action} still positive after {cap} agents")]
    NonTerminating { action: usize, cap: usize },
    #[error("summed rates of action {j} are {sum}, expected rho = {rho}")]
    MassMismatch { j: usize, rho: f64, sum: f64 },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
}

/// Whether the number of agents is unbounded or a fixed `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HorizonMode {
    Unlimited,
    Limited { horizon: usize },
}

/// `A_t^j` given `q_j[tau - 1] = q_tau^j` for at least `tau < t`.
pub fn a_coeff(prior: &ValidatedPrior, q_j: &[f64], j: usize, t: usize) -> Result<f64, RateError> {
    check_action(prior, j)?;
    if t < j {
        return Ok(0.0);
    }
    let p = prior.p_plus(j);
    if p >= 0.5 {
        return Err(RateError::DivisionGuard { j, p });
    }
    need(j, q_j, t - 1)?;
    let explored: f64 = q_j[j - 1..t - 1].iter().sum();
    Ok((2.0 * p * prior.minus_product(j) + p * explored) / (1.0 - 2.0 * p))
}

/// `B_t^j`. For `j = 2` only `q_j` is read; otherwise `q_prev` holds the
/// rates of action `j - 1`.
pub fn b_coeff(
    prior: &ValidatedPrior,
    q_prev: &[f64],
    q_j: &[f64],
    j: usize,
    t: usize,
) -> Result<f64, RateError> {
    check_action(prior, j)?;
    if t < j {
        return Ok(0.0);
    }
    need(j, q_j, t - 1)?;
    let own: f64 = q_j[..t - 1].iter().sum();
    if j == 2 {
        return Ok(prior.p_zero() - own);
    }
    need(j, q_prev, t - 1)?;
    let prev: f64 = q_prev[..t - 1].iter().sum();
    Ok(prior.p_minus(j - 1) * prev - own)
}

fn check_action(prior: &ValidatedPrior, j: usize) -> Result<(), RateError> {
    if j < 2 || j > prior.k() {
        return Err(RateError::ActionOutOfRange { j, k: prior.k() });
    }
    Ok(())
}

fn need(j: usize, v: &[f64], needed: usize) -> Result<(), RateError> {
    if v.len() < needed {
        return Err(RateError::MissingPrefix {
            j,
            needed,
            got: v.len(),
        });
    }
    Ok(())
}

/// True iff `(T - t + 2) * p_j >= 1`, the condition under which exploring
/// action `j` at agent `t` can still pay off before the horizon ends.
pub fn limited_horizon_gate(prior: &ValidatedPrior, j: usize, t: usize, horizon: usize) -> bool {
    gate_value(prior.p_plus(j), t, horizon)
}

fn gate_value(p: f64, t: usize, horizon: usize) -> bool {
    (horizon as f64 - t as f64 + 2.0) * p >= 1.0
}

/// One action's rows, `t = 1..=rows.len()`.
#[derive(Debug, Clone, PartialEq, Serialize)]
struct Column {
    q: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    /// `prefix[t - 1] = sum_{tau < t} q_tau`, one longer than `q`.
    prefix: Vec<f64>,
    last: Option<usize>,
}

impl Column {
    fn empty() -> Self {
        Self {
            q: Vec::new(),
            a: Vec::new(),
            b: Vec::new(),
            prefix: vec![0.0],
            last: None,
        }
    }

    fn push(&mut self, q: f64, a: f64, b: f64) {
        let next = self.prefix.last().copied().unwrap_or(0.0) + q;
        self.q.push(q);
        self.a.push(a);
        self.b.push(b);
        self.prefix.push(next);
        if q > 0.0 {
            self.last = Some(self.q.len());
        }
    }

    fn total(&self) -> f64 {
        *self.prefix.last().expect("prefix is never empty")
    }
}

/// The complete schedule `q_t^j` with its derived quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSchedule {
    prior: ValidatedPrior,
    mode: HorizonMode,
    /// `columns[j - 2]` for action `j`.
    columns: Vec<Column>,
}

/// Total exploration mass of an action, flagged when gating removed some.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExplorationMass {
    pub value: f64,
    pub truncated: bool,
}

/// One line of the CSV export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub t: usize,
    pub j: usize,
    pub q: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

pub fn compute_rate_schedule(
    prior: &ValidatedPrior,
    mode: HorizonMode,
) -> Result<RateSchedule, RateError> {
    compute_rate_schedule_with_cap(prior, mode, DEFAULT_AGENT_CAP)
}

/// Computes `q_t^j = min(A_t^j, B_t^j)` action by action.
///
/// Each column runs until the rate hits zero after the previous action's last
/// explorer, which is where the available mass is used up. In limited mode a
/// failed horizon gate zeroes the entry and every later one for that action.
pub fn compute_rate_schedule_with_cap(
    prior: &ValidatedPrior,
    mode: HorizonMode,
    cap: usize,
) -> Result<RateSchedule, RateError> {
    if let HorizonMode::Limited { horizon: 0 } = mode {
        return Err(RateError::ZeroHorizon);
    }
    let k = prior.k();
    for j in 2..=k {
        let p = prior.p_plus(j);
        if p >= 0.5 {
            return Err(RateError::DivisionGuard { j, p });
        }
    }
    let mut columns: Vec<Column> = Vec::with_capacity(k - 1);
    for j in 2..=k {
        let p = prior.p_plus(j);
        let denom = 1.0 - 2.0 * p;
        let base = 2.0 * p * prior.minus_product(j);
        let prev_last = if j == 2 {
            1
        } else {
            columns[j - 3].last.unwrap_or(0)
        };
        let mut col = Column::empty();
        for _ in 1..j {
            col.push(0.0, 0.0, 0.0);
        }
        let mut t = j;
        let mut gated = false;
        loop {
            if t > cap {
                return Err(RateError::NonTerminating { action: j, cap });
            }
            if let HorizonMode::Limited { horizon } = mode {
                if t > horizon {
                    break;
                }
                if !gated && !gate_value(p, t, horizon) {
                    gated = true;
                }
            }
            let own = col.prefix[t - 1];
            let explored = own - col.prefix[j - 1];
            let a = (base + p * explored) / denom;
            let mut b = if j == 2 {
                prior.p_zero() - own
            } else {
                let prev = &columns[j - 3];
                let prev_sum = prev.prefix[(t - 1).min(prev.prefix.len() - 1)];
                prior.p_minus(j - 1) * prev_sum - own
            };
            if b.abs() <= B_CLAMP {
                b = 0.0;
            }
            let q = if gated { 0.0 } else { a.min(b).max(0.0) };
            col.push(q, a, b);
            if q <= 0.0 && (t > prev_last || gated) {
                break;
            }
            t += 1;
        }
        columns.push(col);
    }
    Ok(RateSchedule {
        prior: prior.clone(),
        mode,
        columns,
    })
}

impl RateSchedule {
    pub fn prior(&self) -> &ValidatedPrior {
        &self.prior
    }

    pub fn k(&self) -> usize {
        self.prior.k()
    }

    pub fn mode(&self) -> HorizonMode {
        self.mode
    }

    pub fn is_limited(&self) -> bool {
        matches!(self.mode, HorizonMode::Limited { .. })
    }

    fn column(&self, j: usize) -> &Column {
        &self.columns[j - 2]
    }

    /// `q_t^j`; zero outside the computed range and for `j = 1`.
    pub fn q(&self, t: usize, j: usize) -> f64 {
        if j < 2 || j > self.k() || t == 0 {
            return 0.0;
        }
        self.column(j).q.get(t - 1).copied().unwrap_or(0.0)
    }

    /// `A_t^j` as evaluated during the recurrence, if that row was computed.
    pub fn a(&self, t: usize, j: usize) -> Option<f64> {
        if j < 2 || j > self.k() || t < j {
            return None;
        }
        self.column(j).a.get(t - 1).copied()
    }

    pub fn b(&self, t: usize, j: usize) -> Option<f64> {
        if j < 2 || j > self.k() || t < j {
            return None;
        }
        self.column(j).b.get(t - 1).copied()
    }

    /// Last agent with a positive rate for `j` (`n_j`); `n_1 = 1`. `None`
    /// only in limited mode when the gate blocks every agent.
    pub fn last_explorer(&self, j: usize) -> Option<usize> {
        if j == 1 {
            return Some(1);
        }
        self.column(j).last
    }

    /// `n_j`, with 0 standing for "never explored".
    pub fn n(&self, j: usize) -> usize {
        self.last_explorer(j).unwrap_or(0)
    }

    /// Largest agent index with any positive rate.
    pub fn max_explorer(&self) -> usize {
        (1..=self.k()).map(|j| self.n(j)).max().unwrap_or(1)
    }

    /// `sum_{tau < t} q_tau^j`.
    pub fn prefix(&self, j: usize, t: usize) -> f64 {
        if j < 2 || t <= 1 {
            return 0.0;
        }
        let p = &self.column(j).prefix;
        p[(t - 1).min(p.len() - 1)]
    }

    /// Sum of every rate of action `j`.
    pub fn total(&self, j: usize) -> f64 {
        self.column(j).total()
    }

    /// Theoretical exploration mass `rho_j`, independent of any gating.
    pub fn rho(&self, j: usize) -> f64 {
        self.prior.rho(j)
    }

    /// Rows computed for action `j`, including the closing zero row.
    pub fn rows_computed(&self, j: usize) -> usize {
        self.column(j).q.len()
    }

    /// Rows in CSV order: sorted by `j` then `t`, positive rates plus the
    /// first zero row after them.
    pub fn rows(&self) -> Vec<RateRow> {
        let mut out = Vec::new();
        for j in 2..=self.k() {
            let col = self.column(j);
            let len = col.q.len();
            for t in j..=len {
                let q = col.q[t - 1];
                if q > 0.0 || t == len {
                    out.push(RateRow {
                        t,
                        j,
                        q,
                        a: col.a[t - 1],
                        b: col.b[t - 1],
                    });
                }
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        for row in self.rows() {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `rho_j`, checked against the summed rates in unlimited mode.
pub fn total_exploration_mass(
    schedule: &RateSchedule,
    j: usize,
) -> Result<ExplorationMass, RateError> {
    if j < 2 || j > schedule.k() {
        return Err(RateError::ActionOutOfRange { j, k: schedule.k() });
    }
    let sum = schedule.total(j);
    if schedule.is_limited() {
        return Ok(ExplorationMass {
            value: sum,
            truncated: (sum - schedule.rho(j)).abs() > MASS_TOLERANCE,
        });
    }
    let rho = schedule.rho(j);
    if (sum - rho).abs() > MASS_TOLERANCE {
        return Err(RateError::MassMismatch { j, rho, sum });
    }
    Ok(ExplorationMass {
        value: rho,
        truncated: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::DiscretePrior;
    use approx::assert_abs_diff_eq;

    fn prior_a() -> ValidatedPrior {
        DiscretePrior::new([0.4, 0.3, 0.3], vec![0.1, 0.05])
            .validate()
            .unwrap()
    }

    #[test]
    fn coefficient_examples() {
        let p = prior_a();
        assert_abs_diff_eq!(a_coeff(&p, &[0.0], 2, 2).unwrap(), 0.075, epsilon = 1e-15);
        assert_eq!(a_coeff(&p, &[], 3, 2).unwrap(), 0.0);
        assert_abs_diff_eq!(a_coeff(&p, &[0.0; 2], 3, 3).unwrap(), 0.03, epsilon = 1e-15);
        assert_abs_diff_eq!(
            b_coeff(&p, &[], &[0.0], 2, 2).unwrap(),
            0.3,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            b_coeff(&p, &[], &[0.0, 0.075], 2, 3).unwrap(),
            0.225,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            b_coeff(&p, &[0.0, 0.075], &[0.0, 0.0], 3, 3).unwrap(),
            0.0675,
            epsilon = 1e-15
        );
        assert!(matches!(
            a_coeff(&p, &[], 4, 4),
            Err(RateError::ActionOutOfRange { .. })
        ));
    }

    #[test]
    fn prior_a_schedule() {
        let s = compute_rate_schedule(&prior_a(), HorizonMode::Unlimited).unwrap();
        assert_eq!(s.q(1, 2), 0.0);
        assert_abs_diff_eq!(s.q(2, 2), 0.075, epsilon = 1e-15);
        assert_abs_diff_eq!(s.q(3, 2), 0.084375, epsilon = 1e-15);
        assert_abs_diff_eq!(s.q(4, 2), 0.094921875, epsilon = 1e-15);
        assert_abs_diff_eq!(s.q(5, 2), 0.045703125, epsilon = 1e-15);
        assert_eq!(s.n(2), 5);
        assert_eq!(s.n(3), 10);
        assert_eq!(total_exploration_mass(&s, 2).unwrap().value, 0.3);
        assert_abs_diff_eq!(s.total(3), 0.27, epsilon = 1e-15);
    }

    #[test]
    fn gate_examples() {
        assert!(!gate_value(0.05, 5, 10));
        assert!(gate_value(0.5, 8, 10));
        assert!(gate_value(0.5, 10, 10));
    }

    #[test]
    fn limited_mode_truncates() {
        let s = compute_rate_schedule(&prior_a(), HorizonMode::Limited { horizon: 10 }).unwrap();
        // (12 - t) * 0.05 < 1 for every t >= 1, so action 3 is never explored.
        assert_eq!(s.last_explorer(3), None);
        let m = total_exploration_mass(&s, 3).unwrap();
        assert!(m.truncated);
        assert_eq!(m.value, 0.0);
        // (12 - t) * 0.1 >= 1 up to t = 2 only.
        assert_eq!(s.n(2), 2);
    }

    #[test]
    fn csv_has_header_and_closing_zero_rows() {
        let s = compute_rate_schedule(&prior_a(), HorizonMode::Unlimited).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,j,q,A,B");
        assert!(lines[1].starts_with("2,2,0.075,"));
        assert!(lines.iter().any(|l| l.starts_with("6,2,0.0,")));
        assert!(lines.iter().any(|l| l.starts_with("11,3,0.0,")));
        assert_eq!(lines.len(), 1 + 5 + 9);
    }
}
