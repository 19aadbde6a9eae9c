use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::enumerate::welfare_exact;
use crate::policy::{OptimalPolicy, PolicyError, RatePolicy, RateTable};
use crate::prior::ValidatedPrior;
use crate::rates::{compute_rate_schedule, limited_horizon_gate, HorizonMode, RateSchedule};

use super::bic::BicTable;
use super::dominance::{terminal_profile, DOMINANCE_TOLERANCE};
use super::maximality::greedy_rates;
use super::{AuditReport, Counterexample, SlackEntry, VerifyError};

/// Incentive slack tolerated when deciding whether a variant is admissible.
pub const BIC_TOLERANCE: f64 = 1e-9;

/// Welfare gains above this count as an improvement over the optimal policy.
pub const WELFARE_TOLERANCE: f64 = 1e-9;

/// Largest instance the perturbation search accepts.
const MAX_PERTURBATION_K: usize = 4;
const MAX_PERTURBATION_HORIZON: usize = 400;

/// Smallest horizon for which the optimal policy is welfare-optimal:
/// `ceil(1 / p_k + n_k - 1)`.
pub fn required_horizon(schedule: &RateSchedule) -> usize {
    let k = schedule.k();
    let v = 1.0 / schedule.prior().p_plus(k) + schedule.n(k) as f64 - 1.0;
    // Guard against 1/p landing a hair above an integer.
    (v - 1e-9).ceil().max(1.0) as usize
}

/// Admissibility and welfare of a table-driven policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEvaluation {
    /// Rates never exceed the mass of their exploration state.
    pub mass_feasible: bool,
    pub bic_pass: bool,
    pub bic_worst_slack: f64,
    /// Expected welfare over the horizon (NaN when mass-infeasible).
    pub welfare: f64,
}

impl RateEvaluation {
    pub fn admissible(&self) -> bool {
        self.mass_feasible && self.bic_pass
    }
}

pub fn evaluate_rates(
    prior: &ValidatedPrior,
    rates: &RateTable,
    horizon: usize,
    tol: f64,
) -> Result<RateEvaluation, VerifyError> {
    let policy = match RatePolicy::new("variant", prior, rates.clone()) {
        Ok(p) => p,
        Err(PolicyError::InfeasibleRate { .. }) => {
            return Ok(RateEvaluation {
                mass_feasible: false,
                bic_pass: false,
                bic_worst_slack: f64::NEG_INFINITY,
                welfare: f64::NAN,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let table = BicTable::compute(&policy, prior, horizon)?;
    let worst = table
        .entries()
        .iter()
        .map(|e| e.slack)
        .fold(f64::INFINITY, f64::min);
    let welfare = (1..=horizon)
        .flat_map(|t| (1..=prior.k()).map(move |j| (t, j)))
        .map(|(t, j)| table.joint_value(t, j))
        .sum();
    Ok(RateEvaluation {
        mass_feasible: true,
        bic_pass: worst >= -tol,
        bic_worst_slack: worst,
        welfare,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationOptions {
    pub grid_step: f64,
    /// Use the horizon-gated schedule and skip the horizon requirement.
    pub limited: bool,
    /// Random reduced starting points for the multi-coordinate ascent.
    pub reduced_starts: usize,
    pub seed: u64,
    /// Cap on accepted ascent moves per start.
    pub max_moves: usize,
    /// Refuse unlimited-mode horizons shorter than [`required_horizon`].
    /// Turning this off lets the search demonstrate the gains that exist
    /// below that horizon.
    pub enforce_horizon: bool,
}

impl Default for PerturbationOptions {
    fn default() -> Self {
        Self {
            grid_step: 0.01,
            limited: false,
            reduced_starts: 3,
            seed: 0,
            max_moves: 2_000,
            enforce_horizon: true,
        }
    }
}

/// Searches incentive-compatible rate perturbations around the optimal
/// schedule and reports the largest welfare gain found (as negative slack).
///
/// Candidates are single-coordinate moves by one grid step (with all other
/// rates fixed, and with later rates re-maximized), plus greedy
/// multi-coordinate ascent from the optimal schedule and from random reduced
/// schedules.
pub fn perturbation_optimality_check(
    prior: &ValidatedPrior,
    horizon: usize,
    opts: &PerturbationOptions,
) -> Result<AuditReport, VerifyError> {
    let mode = if opts.limited {
        HorizonMode::Limited { horizon }
    } else {
        HorizonMode::Unlimited
    };
    let schedule = compute_rate_schedule(prior, mode)?;
    if !opts.limited && opts.enforce_horizon {
        let required = required_horizon(&schedule);
        if horizon < required {
            return Err(VerifyError::HorizonTooShort { horizon, required });
        }
    }
    if prior.k() > MAX_PERTURBATION_K || horizon > MAX_PERTURBATION_HORIZON {
        return Err(VerifyError::ScaleExceeded(format!(
            "perturbation search supports k <= {MAX_PERTURBATION_K} and horizon <= {MAX_PERTURBATION_HORIZON}"
        )));
    }
    let base_policy = OptimalPolicy::from_schedule(schedule.clone());
    let base = welfare_exact(&base_policy, prior, horizon)?;
    let base_table = RateTable::from_schedule(&schedule, horizon);
    let gate = |t: usize, j: usize| !opts.limited || limited_horizon_gate(prior, j, t, horizon);

    let mut entries = Vec::new();
    let mut best: Option<(f64, String, usize, usize)> = None;
    let mut record =
        |entries: &mut Vec<SlackEntry>, t: usize, j: usize, welfare: f64, what: String| {
            let gain = welfare - base;
            entries.push(SlackEntry {
                t,
                j,
                i: None,
                slack: -gain,
            });
            if best.as_ref().is_none_or(|b| gain > b.0) {
                best = Some((gain, what, t, j));
            }
        };

    let coords: Vec<(usize, usize)> = (2..=prior.k())
        .flat_map(|j| (j..=horizon).map(move |t| (t, j)))
        .filter(|&(t, j)| gate(t, j))
        .collect();

    for &(t, j) in &coords {
        for sign in [-1.0, 1.0] {
            let target = base_table.get(t, j) + sign * opts.grid_step;
            if target < 0.0 {
                continue;
            }
            let mut plain = base_table.clone();
            plain.set(t, j, target);
            let eval = evaluate_rates(prior, &plain, horizon, BIC_TOLERANCE)?;
            if eval.admissible() {
                record(
                    &mut entries,
                    t,
                    j,
                    eval.welfare,
                    format!("rate ({t},{j}) set to {target}"),
                );
            }
            let remax = greedy_rates(prior, horizon, |tt, jj, max| {
                if (tt, jj) == (t, j) {
                    target
                } else if gate(tt, jj) {
                    max
                } else {
                    0.0
                }
            })?;
            let eval = evaluate_rates(prior, &remax.rates, horizon, BIC_TOLERANCE)?;
            if eval.admissible() {
                record(
                    &mut entries,
                    t,
                    j,
                    eval.welfare,
                    format!("rate ({t},{j}) set to {target}, later rates re-maximized"),
                );
            }
        }
    }

    let mut starts = vec![base_table.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.reduced_starts {
        let reduced = greedy_rates(prior, horizon, |tt, jj, max| {
            if gate(tt, jj) {
                rng.random::<f64>() * max
            } else {
                0.0
            }
        })?;
        starts.push(reduced.rates);
    }
    for (s, start) in starts.into_iter().enumerate() {
        let (welfare, moves) = ascend(prior, horizon, start, &coords, opts)?;
        record(
            &mut entries,
            0,
            s,
            welfare,
            format!("ascent from start {s} after {moves} moves"),
        );
    }

    let mut report = AuditReport::from_entries(
        "welfare_perturbation",
        prior.id(),
        WELFARE_TOLERANCE,
        entries,
    );
    if let (Some(cx), Some((gain, what, _, _))) = (report.counterexample.as_mut(), best) {
        cx.detail = format!("{what} gains {gain:.3e} welfare over the optimal policy {base}");
    }
    Ok(report)
}

fn ascend(
    prior: &ValidatedPrior,
    horizon: usize,
    start: RateTable,
    coords: &[(usize, usize)],
    opts: &PerturbationOptions,
) -> Result<(f64, usize), VerifyError> {
    let mut current = start;
    let first = evaluate_rates(prior, &current, horizon, BIC_TOLERANCE)?;
    if !first.admissible() {
        return Ok((f64::NEG_INFINITY, 0));
    }
    let mut value = first.welfare;
    let mut moves = 0;
    loop {
        let mut improved = false;
        for &(t, j) in coords {
            for sign in [1.0, -1.0] {
                let target = current.get(t, j) + sign * opts.grid_step;
                if target < 0.0 {
                    continue;
                }
                let mut cand = current.clone();
                cand.set(t, j, target);
                let eval = evaluate_rates(prior, &cand, horizon, BIC_TOLERANCE)?;
                if eval.admissible() && eval.welfare > value + 1e-12 {
                    current = cand;
                    value = eval.welfare;
                    moves += 1;
                    improved = true;
                    break;
                }
            }
            if moves >= opts.max_moves {
                return Ok((value, moves));
            }
        }
        if !improved {
            return Ok((value, moves));
        }
    }
}

/// Checks that the optimal policy reaches a terminal state weakly sooner
/// than `samples` random incentive-compatible variants with `psi <= q`.
pub fn min_time_check(
    prior: &ValidatedPrior,
    horizon: usize,
    samples: usize,
    seed: u64,
) -> Result<AuditReport, VerifyError> {
    let schedule = compute_rate_schedule(prior, HorizonMode::Unlimited)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut variants = Vec::with_capacity(samples);
    for _ in 0..samples {
        let g = greedy_rates(prior, horizon, |t, j, max| {
            (rng.random::<f64>() * max).min(schedule.q(t, j))
        })?;
        variants.push(g.rates);
    }
    min_time_against(prior, &schedule, horizon, &variants)
}

/// Compares terminal-time profiles of the optimal policy and each variant.
/// Variants that are not incentive compatible are skipped and listed in
/// `rejected`.
pub fn min_time_against(
    prior: &ValidatedPrior,
    schedule: &RateSchedule,
    horizon: usize,
    variants: &[RateTable],
) -> Result<AuditReport, VerifyError> {
    let optimal = OptimalPolicy::from_schedule(schedule.clone());
    let base = terminal_profile(&optimal, prior, horizon)?;
    let mut entries = Vec::new();
    let mut rejected = Vec::new();
    let mut not_strict = None;
    for (s, rates) in variants.iter().enumerate() {
        let policy = match RatePolicy::new(format!("variant_{s}"), prior, rates.clone()) {
            Ok(p) => p,
            Err(PolicyError::InfeasibleRate { .. }) => {
                rejected.push(s);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let bic = BicTable::compute(&policy, prior, horizon)?;
        if bic.entries().iter().any(|e| e.slack < -BIC_TOLERANCE) {
            rejected.push(s);
            continue;
        }
        let profile = terminal_profile(&policy, prior, horizon)?;
        let mut worst = (f64::INFINITY, 1);
        let mut strict = false;
        for t in 1..=horizon {
            let d = base[t] - profile[t];
            if d < worst.0 {
                worst = (d, t);
            }
            if d > DOMINANCE_TOLERANCE {
                strict = true;
            }
        }
        if !strict && not_strict.is_none() {
            not_strict = Some(s);
        }
        entries.push(SlackEntry {
            t: worst.1,
            j: s,
            i: None,
            slack: worst.0,
        });
    }
    let mut report =
        AuditReport::from_entries("min_time", prior.id(), DOMINANCE_TOLERANCE, entries);
    if report.counterexample.is_none() {
        if let Some(s) = not_strict {
            report.pass = false;
            report.counterexample = Some(Counterexample {
                t: 0,
                j: s,
                alternative: None,
                slack: 0.0,
                detail: format!("variant {s} terminates exactly as fast as the optimal policy"),
                realization: None,
                y: None,
            });
        }
    } else if let Some(cx) = report.counterexample.as_mut() {
        cx.detail = format!(
            "variant {} is terminal more often before agent {}",
            cx.j, cx.t
        );
    }
    report.rejected = rejected;
    Ok(report)
}
