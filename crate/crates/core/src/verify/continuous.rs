use crate::partition::{
    first_interval_gain, partition_recommend, step_gain, PartitionError, PartitionSchedule,
};
use crate::prior::{ContinuousInstance, Reward};

use super::{AuditReport, Counterexample, SlackEntry, VerifyError};

/// Tolerance for the per-interval balance equations.
pub const EQUATION_TOLERANCE: f64 = 1e-8;

const MIN_PROBABILITY: f64 = 1e-14;

/// Evaluates the two balance conditions of every nonempty interval: for
/// `t = j` the exploration loss on `(mu_j, i_{j+1}]` against the gain from
/// `x_1 <= mu_j`, and for `t > j` the loss on `theta_t^j` against the gain
/// from an earlier `+1`. Slack is gain minus loss.
pub fn partition_equation_audit(
    inst: &ContinuousInstance,
    schedule: &PartitionSchedule,
) -> Result<AuditReport, VerifyError> {
    let d1 = inst.d1();
    let mut entries = Vec::new();
    for j in 2..=schedule.k() {
        let mu = schedule.mu(j);
        for t in j..=schedule.horizon() {
            let (lo, hi) = schedule.interval(j, t);
            if hi <= lo {
                continue;
            }
            let slack = if t == j {
                first_interval_gain(inst, j)
                    + d1.try_partial_expectation(lo.max(mu), hi, mu)
                        .map(|v| -v)
                        .map_err(PartitionError::from)?
            } else {
                step_gain(inst, j, lo)
                    - d1.try_partial_expectation(lo, hi, mu)
                        .map_err(PartitionError::from)?
            };
            entries.push(SlackEntry {
                t,
                j,
                i: Some(1),
                slack,
            });
        }
    }
    Ok(AuditReport::from_entries(
        "partition_equations",
        format!("{}:{:?}", inst.d1().family_tag(), inst.tail_p_plus()),
        EQUATION_TOLERANCE,
        entries,
    ))
}

/// Recommendations to agents `1..=horizon` for a given `x_1` and tail
/// rewards `tail[j - 2] = x_j`.
pub fn partition_path(
    schedule: &PartitionSchedule,
    x1: f64,
    tail: &[Reward],
) -> Result<Vec<usize>, VerifyError> {
    let mut first_plus = None;
    let mut out = Vec::with_capacity(schedule.horizon());
    for t in 1..=schedule.horizon() {
        let a = partition_recommend(schedule, t, x1, first_plus)?;
        if a >= 2 && first_plus.is_none() && tail[a - 2] == Reward::Plus {
            first_plus = Some(a);
        }
        out.push(a);
    }
    Ok(out)
}

/// Exact incentive audit of the partition policy.
///
/// Between consecutive endpoints the policy's behavior is constant in `x_1`,
/// so conditional expectations are sums over (segment, tail vector) of exact
/// partial expectations. Every alternative action is checked, not only
/// action 1.
pub fn partition_bic_audit(
    inst: &ContinuousInstance,
    schedule: &PartitionSchedule,
    tol: f64,
) -> Result<AuditReport, VerifyError> {
    let k = schedule.k();
    let horizon = schedule.horizon();
    let d1 = inst.d1();
    let points = schedule.breakpoints();
    let tails = inst.tail_realizations();
    let mut mass = vec![vec![0.0; k + 1]; horizon + 1];
    let mut sums = vec![vec![vec![0.0; k + 1]; k + 1]; horizon + 1];
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let width = d1.cdf(b) - d1.cdf(a);
        if width <= 0.0 {
            continue;
        }
        let first_moment = d1
            .try_partial_expectation(a, b, 0.0)
            .map_err(PartitionError::from)?;
        let mid = 0.5 * (a + b);
        for (tail, p) in &tails {
            let path = partition_path(schedule, mid, tail)?;
            for (idx, &j) in path.iter().enumerate() {
                let t = idx + 1;
                mass[t][j] += p * width;
                sums[t][j][1] += p * first_moment;
                for i in 2..=k {
                    sums[t][j][i] += p * width * tail[i - 2].value();
                }
            }
        }
    }
    let mut entries = Vec::new();
    for t in 1..=horizon {
        for j in 1..=k {
            let m = mass[t][j];
            if m <= MIN_PROBABILITY {
                continue;
            }
            for i in (1..=k).filter(|&i| i != j) {
                entries.push(SlackEntry {
                    t,
                    j,
                    i: Some(i),
                    slack: (sums[t][j][j] - sums[t][j][i]) / m,
                });
            }
        }
    }
    Ok(AuditReport::from_entries(
        "partition_bic",
        format!("{}:{:?}", d1.family_tag(), inst.tail_p_plus()),
        tol,
        entries,
    ))
}

fn grid(points: usize) -> Vec<f64> {
    let n = points.max(2);
    (0..n)
        .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
        .collect()
}

/// First agent recommended each action, `first[j]`.
fn first_times(path: &[usize], k: usize) -> Vec<Option<usize>> {
    let mut first = vec![None; k + 1];
    for (idx, &a) in path.iter().enumerate() {
        if first[a].is_none() {
            first[a] = Some(idx + 1);
        }
    }
    first
}

/// Confirms on an `x_1` grid that actions are first recommended in
/// increasing index order.
pub fn ascending_order_check(
    inst: &ContinuousInstance,
    schedule: &PartitionSchedule,
    grid_points: usize,
) -> Result<AuditReport, VerifyError> {
    let k = schedule.k();
    let tails = inst.tail_realizations();
    let mut entries = Vec::new();
    let mut witness = None;
    for x1 in grid(grid_points) {
        for (tail, _) in &tails {
            let path = partition_path(schedule, x1, tail)?;
            let first = first_times(&path, k);
            for i in 3..=k {
                let Some(ti) = first[i] else { continue };
                for j in 2..i {
                    if first[j].is_none_or(|tj| tj >= ti) {
                        entries.push(SlackEntry {
                            t: ti,
                            j: i,
                            i: Some(j),
                            slack: -1.0,
                        });
                        witness.get_or_insert((x1, tail.clone()));
                    }
                }
            }
        }
    }
    let mut report = AuditReport::from_entries(
        "ascending_order",
        format!("{}:{:?}", inst.d1().family_tag(), inst.tail_p_plus()),
        0.0,
        entries,
    );
    if let (Some(cx), Some((x1, tail))) = (report.counterexample.as_mut(), witness) {
        cx.detail = format!(
            "action {} recommended before action {:?}",
            cx.j, cx.alternative
        );
        cx.realization = Some(format!("x1={x1}, tail={tail:?}"));
    }
    Ok(report)
}

/// Checks on an `x_1` grid that `base` reveals every action no later than
/// `alternative` for every tail vector.
pub fn partition_dominance_check(
    inst: &ContinuousInstance,
    base: &PartitionSchedule,
    alternative: &PartitionSchedule,
    grid_points: usize,
) -> Result<AuditReport, VerifyError> {
    let k = base.k();
    let tails = inst.tail_realizations();
    let mut entries = Vec::new();
    let mut counter = None;
    for x1 in grid(grid_points) {
        for (tail, _) in &tails {
            let fb = first_times(&partition_path(base, x1, tail)?, k);
            let fa = first_times(&partition_path(alternative, x1, tail)?, k);
            for j in 2..=k {
                let late = match (fb[j], fa[j]) {
                    (None, Some(_)) => true,
                    (Some(b), Some(a)) => b > a,
                    _ => false,
                };
                if late {
                    let t = fa[j].unwrap_or(0);
                    entries.push(SlackEntry {
                        t,
                        j,
                        i: None,
                        slack: -1.0,
                    });
                    counter.get_or_insert(Counterexample {
                        t,
                        j,
                        alternative: None,
                        slack: -1.0,
                        detail: "alternative partition reveals the action earlier".into(),
                        realization: Some(format!("x1={x1}, tail={tail:?}")),
                        y: None,
                    });
                }
            }
        }
    }
    let mut report = AuditReport::from_entries(
        "partition_dominance",
        format!("{}:{:?}", inst.d1().family_tag(), inst.tail_p_plus()),
        0.0,
        entries,
    );
    if !report.pass {
        report.counterexample = counter;
    }
    Ok(report)
}
