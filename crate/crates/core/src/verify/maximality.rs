use crate::policy::RateTable;
use crate::prior::{Reward, ValidatedPrior};
use crate::rates::{limited_horizon_gate, HorizonMode, RateSchedule};

use super::{AuditReport, SlackEntry, VerifyError};

/// Rates agree with the oracle when within this distance.
pub const MAXIMALITY_TOLERANCE: f64 = 1e-8;

/// Output of [`greedy_rates`].
#[derive(Debug, Clone)]
pub struct GreedyRates {
    /// Rates actually used.
    pub rates: RateTable,
    /// Largest incentive-compatible rate given the earlier choices.
    pub max_feasible: RateTable,
    /// Probability of the exploration state.
    pub available: RateTable,
}

/// Builds a rate table agent by agent from exhaustive state probabilities.
///
/// For every agent `t` and action `j` the largest rate that keeps
/// "recommend `j`" a best response is found by bisection, using the exact
/// mass of every (reward vector, explored prefix) pair under the rates chosen
/// so far. `chooser(t, j, max)` then picks the rate to use; it is clamped to
/// the available mass but not to `max`, so callers can build infeasible
/// variants on purpose.
pub fn greedy_rates<F>(
    prior: &ValidatedPrior,
    horizon: usize,
    mut chooser: F,
) -> Result<GreedyRates, VerifyError>
where
    F: FnMut(usize, usize, f64) -> f64,
{
    let k = prior.k();
    let xs = prior.realizations();
    let mut rates = RateTable::zeros(k, horizon);
    let mut max_feasible = RateTable::zeros(k, horizon);
    let mut available = RateTable::zeros(k, horizon);
    // mass[x][m]: probability of vector x with actions 1..=m explored.
    let mut mass: Vec<Vec<f64>> = xs
        .iter()
        .map(|(_, p)| {
            let mut row = vec![0.0; k + 1];
            row[0] = *p;
            row
        })
        .collect();
    for t in 1..=horizon {
        let mut next = vec![vec![0.0; k + 1]; xs.len()];
        if t == 1 {
            for (xi, row) in mass.iter().enumerate() {
                next[xi][1] = row[0];
            }
            mass = next;
            continue;
        }
        let mut explore_mass = vec![0.0; k + 1];
        let mut explore_gain = vec![vec![0.0; k + 1]; k + 1];
        let mut exploit_gain = vec![vec![0.0; k + 1]; k + 1];
        for (xi, (x, _)) in xs.iter().enumerate() {
            for m in 1..=k {
                let w = mass[xi][m];
                if w <= 0.0 {
                    continue;
                }
                let plus = (1..=m).find(|&i| x.reward(i) == Reward::Plus);
                let (rec, explore) = if let Some(p) = plus {
                    (p, false)
                } else if m == k {
                    (best_of(x, k), false)
                } else if x.reward(1) == Reward::Minus {
                    (m + 1, false)
                } else {
                    (m + 1, true)
                };
                if explore {
                    explore_mass[rec] += w;
                    for i in 1..=k {
                        explore_gain[rec][i] += w * (x.value(rec) - x.value(i));
                    }
                } else {
                    for i in 1..=k {
                        exploit_gain[rec][i] += w * (x.value(rec) - x.value(i));
                    }
                }
            }
        }
        let mut fraction = vec![0.0; k + 1];
        for j in 2..=k {
            let e = explore_mass[j];
            available.set(t, j, e);
            if e <= 0.0 {
                let _ = chooser(t, j, 0.0);
                continue;
            }
            let per_unit: Vec<f64> = (0..=k).map(|i| explore_gain[j][i] / e).collect();
            let feasible = |q: f64| {
                (1..=k)
                    .filter(|&i| i != j)
                    .all(|i| exploit_gain[j][i] + q * per_unit[i] >= 0.0)
            };
            let max = if feasible(e) {
                e
            } else if !feasible(0.0) {
                0.0
            } else {
                let (mut lo, mut hi) = (0.0_f64, e);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if feasible(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            };
            max_feasible.set(t, j, max);
            let psi = chooser(t, j, max).clamp(0.0, e);
            rates.set(t, j, psi);
            fraction[j] = psi / e;
        }
        for (xi, (x, _)) in xs.iter().enumerate() {
            for m in 1..=k {
                let w = mass[xi][m];
                if w <= 0.0 {
                    continue;
                }
                let plus = (1..=m).any(|i| x.reward(i) == Reward::Plus);
                if plus || m == k {
                    next[xi][m] += w;
                } else if x.reward(1) == Reward::Minus {
                    next[xi][m + 1] += w;
                } else {
                    let moved = w * fraction[m + 1];
                    next[xi][m + 1] += moved;
                    next[xi][m] += w - moved;
                }
            }
        }
        mass = next;
    }
    Ok(GreedyRates {
        rates,
        max_feasible,
        available,
    })
}

fn best_of(x: &crate::prior::Realization, k: usize) -> usize {
    let mut best = 1;
    for j in 2..=k {
        if x.value(j) > x.value(best) {
            best = j;
        }
    }
    best
}

/// Re-derives every `q_t^j` with [`greedy_rates`] and compares.
pub fn maximality_audit(schedule: &RateSchedule) -> Result<AuditReport, VerifyError> {
    let prior = schedule.prior();
    let mut horizon = schedule.max_explorer() + 2;
    let gate_horizon = match schedule.mode() {
        HorizonMode::Limited { horizon: h } => {
            horizon = horizon.min(h);
            Some(h)
        }
        HorizonMode::Unlimited => None,
    };
    let oracle = greedy_rates(prior, horizon, |t, j, max| match gate_horizon {
        Some(h) if !limited_horizon_gate(prior, j, t, h) => 0.0,
        _ => max,
    })?;
    let mut entries = Vec::new();
    for t in 1..=horizon {
        for j in 2..=prior.k() {
            entries.push(SlackEntry {
                t,
                j,
                i: None,
                slack: -(schedule.q(t, j) - oracle.rates.get(t, j)).abs(),
            });
        }
    }
    let mut report =
        AuditReport::from_entries("maximality", prior.id(), MAXIMALITY_TOLERANCE, entries);
    if let Some(cx) = report.counterexample.as_mut() {
        cx.detail = format!(
            "schedule rate {} differs from oracle rate {}",
            schedule.q(cx.t, cx.j),
            oracle.rates.get(cx.t, cx.j)
        );
    }
    Ok(report)
}
