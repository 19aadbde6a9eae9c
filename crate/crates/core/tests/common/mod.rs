//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls the rate recurrence: the rate oracle walks the
//! planner's information states forward and solves each agent's exploration
//! problem by bisection on its incentive constraint.

#![allow(dead_code)]

use std::collections::BTreeMap;

use bic_explore::{DiscretePrior, ValidatedPrior};
use rand::Rng;

pub const UNKNOWN: i8 = 2;

pub fn prior_a() -> ValidatedPrior {
    DiscretePrior::new([0.4, 0.3, 0.3], vec![0.1, 0.05])
        .validate()
        .unwrap()
}

/// Random prior with `k` actions, strictly decreasing means, negative tail
/// means and `p_j >= 0.05` so schedules stay short.
pub fn random_prior<R: Rng>(rng: &mut R, k: usize) -> ValidatedPrior {
    loop {
        let mut tail: Vec<f64> = (2..=k).map(|_| rng.random_range(0.05..0.48)).collect();
        tail.sort_by(|a, b| b.total_cmp(a));
        if tail.windows(2).any(|w| w[0] - w[1] < 1e-3) {
            continue;
        }
        let plus = rng.random_range(0.0..0.9);
        let zero = rng.random_range(0.05..0.95);
        if plus + zero >= 0.99 {
            continue;
        }
        let minus = 1.0 - plus - zero;
        let prior = DiscretePrior::new([plus, zero, minus], tail);
        if let Ok(v) = prior.validate() {
            return v;
        }
    }
}

/// Recommendation of the optimal policy in a state, ignoring exploration:
/// `(action, Some(j))` when the state is an exploration state for `j`.
fn classify(z: &[i8]) -> (usize, Option<usize>) {
    let k = z.len();
    if z[0] == UNKNOWN {
        return (1, None);
    }
    if let Some(i) = z.iter().position(|&v| v == 1) {
        return (i + 1, None);
    }
    let Some(m) = z.iter().position(|&v| v == UNKNOWN) else {
        return (1, None);
    };
    let m = m + 1;
    debug_assert!(m <= k);
    if z[0] == -1 {
        (m, None)
    } else {
        (1, Some(m))
    }
}

fn pull(
    next: &mut BTreeMap<Vec<i8>, f64>,
    z: &[i8],
    action: usize,
    mass: f64,
    prior: &ValidatedPrior,
) {
    if mass <= 0.0 {
        return;
    }
    if z[action - 1] != UNKNOWN {
        *next.entry(z.to_vec()).or_default() += mass;
        return;
    }
    let outcomes: Vec<(i8, f64)> = if action == 1 {
        vec![
            (1, prior.p_plus(1)),
            (0, prior.p_zero()),
            (-1, prior.p_minus(1)),
        ]
    } else {
        vec![(1, prior.p_plus(action)), (-1, prior.p_minus(action))]
    };
    for (v, p) in outcomes {
        if p > 0.0 {
            let mut w = z.to_vec();
            w[action - 1] = v;
            *next.entry(w).or_default() += mass * p;
        }
    }
}

/// Exploration rates `q[t][j]` for agents `1..=horizon` obtained by
/// maximizing each agent's exploration probability subject to its incentive
/// constraint against action 1 and the exploration-state mass.
pub fn rate_oracle(prior: &ValidatedPrior, horizon: usize) -> Vec<Vec<f64>> {
    let k = prior.k();
    let mut q = vec![vec![0.0; k + 1]; horizon + 1];
    let mut dist: BTreeMap<Vec<i8>, f64> = BTreeMap::new();
    dist.insert(vec![UNKNOWN; k], 1.0);
    for t in 1..=horizon {
        let mut gain = vec![0.0; k + 1];
        let mut avail = vec![0.0; k + 1];
        for (z, &p) in &dist {
            let (a, explore) = classify(z);
            if let Some(j) = explore {
                avail[j] += p;
            } else if a >= 2 {
                let x1 = f64::from(z[0]);
                let xa = if z[a - 1] == UNKNOWN {
                    prior.mu(a)
                } else {
                    f64::from(z[a - 1])
                };
                gain[a] += p * (xa - x1);
            }
        }
        for j in 2..=k {
            if t == 1 || avail[j] <= 0.0 {
                continue;
            }
            let mu = prior.mu(j);
            let ok = |x: f64| gain[j] + mu * x >= 0.0;
            q[t][j] = if ok(avail[j]) {
                avail[j]
            } else {
                let (mut lo, mut hi) = (0.0, avail[j]);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if ok(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            };
        }
        let mut next = BTreeMap::new();
        for (z, &p) in &dist {
            let (a, explore) = classify(z);
            match explore {
                Some(j) => {
                    let frac = q[t][j] / avail[j];
                    pull(&mut next, z, j, p * frac, prior);
                    pull(&mut next, z, 1, p * (1.0 - frac), prior);
                }
                None => pull(&mut next, z, a, p, prior),
            }
        }
        dist = next;
    }
    q
}
