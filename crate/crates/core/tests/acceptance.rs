//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

mod common;

use std::time::Instant;

use bic_explore::enumerate::{enumerate, welfare_exact};
use bic_explore::partition::compute_scaled_schedule;
use bic_explore::policy::RateTable;
use bic_explore::sampler::y_cells;
use bic_explore::verify::{
    ascending_order_check, bic_audit, evaluate_rates, min_time_check, partition_bic_audit,
    partition_dominance_check, partition_equation_audit, perturbation_optimality_check,
    required_horizon, terminal_profile, BicTable, PerturbationOptions,
};
use bic_explore::{
    assign, compute_interval_schedule, compute_rate_schedule, estimate_welfare,
    explorer_frequencies, is_terminal, limited_horizon_gate, ContinuousInstance, ContinuousPrior,
    DiscretePrior, HorizonMode, InformationState, OptimalPolicy, Reward, ValidatedPrior,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{prior_a, random_prior, rate_oracle};

/// Exact welfare of the optimal policy on the reference prior over ten
/// agents, from an independent Markov-chain evaluation.
const GOLDEN_WELFARE_T10: f64 = 1.5188727380191316;
/// Same, with the limited-horizon gate at `T = 10`.
const GOLDEN_LIMITED_WELFARE_T10: f64 = 1.7559999999999998;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_priors(count: usize, max_k: usize, seed: u64) -> Vec<ValidatedPrior> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| random_prior(&mut rng, 2 + i % (max_k - 1)))
        .collect()
}

fn rate_formula_equivalence() -> Outcome {
    let start = Instant::now();
    let priors = random_priors(500, 6, 1);
    let mut worst: f64 = 0.0;
    for prior in &priors {
        let s = compute_rate_schedule(prior, HorizonMode::Unlimited).map_err(|e| e.to_string())?;
        let horizon = s.max_explorer() + 2;
        let q = rate_oracle(prior, horizon);
        for t in 1..=horizon {
            for j in 2..=prior.k() {
                let d = (s.q(t, j) - q[t][j]).abs();
                worst = worst.max(d);
                ensure(d <= 1e-8, || {
                    format!(
                        "{} t={t} j={j}: {} vs oracle {}",
                        prior.id(),
                        s.q(t, j),
                        q[t][j]
                    )
                })?;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!("500 priors, max |diff| {worst:.2e}, {secs:.2}s"))
}

fn mass_conservation() -> Outcome {
    let mut worst: f64 = 0.0;
    for prior in &random_priors(500, 6, 1) {
        let s = compute_rate_schedule(prior, HorizonMode::Unlimited).map_err(|e| e.to_string())?;
        for j in 2..=prior.k() {
            let rho = prior.p_zero() * (2..j).map(|i| 1.0 - prior.p_plus(i)).product::<f64>();
            let d = (s.total(j) - rho).abs();
            worst = worst.max(d);
            ensure(d <= 1e-12, || {
                format!("{} j={j}: sum {} vs {rho}", prior.id(), s.total(j))
            })?;
        }
    }
    Ok(format!("max |sum q - rho| {worst:.2e}"))
}

fn explorer_structure() -> Outcome {
    let mut worst: f64 = 0.0;
    for prior in &random_priors(100, 6, 2) {
        let s = compute_rate_schedule(prior, HorizonMode::Unlimited).map_err(|e| e.to_string())?;
        let k = prior.k();
        for i in 0..10_001 {
            let y = (i + 1) as f64 / 10_001.0;
            let a = assign(&s, y).map_err(|e| e.to_string())?;
            let mut prev = 0;
            for j in 2..=k {
                let e = a
                    .explorer(j)
                    .ok_or_else(|| format!("{} y={y}: no explorer for {j}", prior.id()))?;
                ensure(e > prev, || {
                    format!(
                        "{} y={y}: explorer of {j} is {e}, previous {prev}",
                        prior.id()
                    )
                })?;
                prev = e;
            }
        }
        // Exact integration over the cells where every explorer is constant.
        let mut freq = vec![vec![0.0; k + 1]; s.max_explorer() + 2];
        for cell in y_cells(&s) {
            let a = assign(&s, cell.midpoint()).map_err(|e| e.to_string())?;
            for j in 2..=k {
                if let Some(t) = a.explorer(j) {
                    freq[t][j] += cell.width();
                }
            }
        }
        for (t, row) in freq.iter().enumerate().skip(1) {
            for j in 2..=k {
                let d = (row[j] - s.q(t, j) / s.rho(j)).abs();
                worst = worst.max(d);
                ensure(d <= 1e-12, || {
                    format!(
                        "{} t={t} j={j}: {} vs {}",
                        prior.id(),
                        row[j],
                        s.q(t, j) / s.rho(j)
                    )
                })?;
            }
        }
    }
    Ok(format!(
        "100 priors x 10001 draws ordered, max |measure - q/rho| {worst:.2e}"
    ))
}

/// Known tail actions form a prefix `2..=m`, all but the last at `-1`, and
/// nothing beyond action 1 is known when `x_1 = +1`.
fn prefix_violation(state: &InformationState) -> bool {
    let z = state.values();
    let known: Vec<usize> = (2..=z.len()).filter(|&j| z[j - 1].is_some()).collect();
    if known.iter().enumerate().any(|(i, &j)| j != i + 2) {
        return true;
    }
    if known.len() > 1
        && known[..known.len() - 1]
            .iter()
            .any(|&j| z[j - 1] != Some(Reward::Minus))
    {
        return true;
    }
    z[0] == Some(Reward::Plus) && !known.is_empty()
}

fn infeasibility() -> Outcome {
    let mut priors = vec![prior_a()];
    priors.extend(random_priors(30, 4, 3));
    let mut visited = 0usize;
    for prior in &priors {
        let s = compute_rate_schedule(prior, HorizonMode::Unlimited).map_err(|e| e.to_string())?;
        let horizon = s.max_explorer() + 2;
        let policy = OptimalPolicy::from_schedule(s);
        let mut bad = None;
        enumerate(&policy, prior, horizon, |step| {
            visited += 1;
            if bad.is_none()
                && (prefix_violation(step.state) || step.state.check_feasible().is_err())
            {
                bad = Some(step.state.to_string());
            }
        })
        .map_err(|e| e.to_string())?;
        if let Some(state) = bad {
            return Err(format!("{} visited infeasible state {state}", prior.id()));
        }
    }
    Ok(format!(
        "{} priors, {visited} visited steps, no infeasible state",
        priors.len()
    ))
}

fn bic_audit_criterion() -> Outcome {
    let mut priors = vec![prior_a()];
    priors.extend(random_priors(6, 4, 4));
    let mut worst = f64::INFINITY;
    let mut tight = 0;
    let mut inflations = 0;
    for prior in &priors {
        let s = compute_rate_schedule(prior, HorizonMode::Unlimited).map_err(|e| e.to_string())?;
        let horizon = s.max_explorer() + 2;
        let policy = OptimalPolicy::from_schedule(s.clone());
        let report = bic_audit(&policy, prior, horizon, 1e-9).map_err(|e| e.to_string())?;
        ensure(report.pass, || report.to_json())?;
        worst = worst.min(report.worst_slack);
        let table = BicTable::compute(&policy, prior, horizon).map_err(|e| e.to_string())?;
        for j in 2..=prior.k() {
            for t in 2..=s.max_explorer() {
                if let (Some(a), Some(b)) = (s.a(t, j), s.b(t, j)) {
                    if a < b && s.q(t, j) > 0.0 {
                        let g = table.joint_gain(t, j, 1);
                        ensure(g.abs() <= 1e-8, || {
                            format!("{} t={t} j={j} not tight: {g:e}", prior.id())
                        })?;
                        tight += 1;
                    }
                }
            }
        }
        let base = RateTable::from_schedule(&s, horizon);
        for (t, j) in base.support() {
            let mut inflated = base.clone();
            inflated.set(t, j, base.get(t, j) + 0.01);
            let eval =
                evaluate_rates(prior, &inflated, horizon, 1e-9).map_err(|e| e.to_string())?;
            ensure(!eval.admissible(), || {
                format!("{} q_{t}^{j} + 0.01 still admissible", prior.id())
            })?;
            inflations += 1;
        }
    }
    Ok(format!(
        "worst slack {worst:.2e}, {tight} tight incentive-bound rates, {inflations} inflations all rejected"
    ))
}

fn termination_and_min_time() -> Outcome {
    let prior = prior_a();
    let s = compute_rate_schedule(&prior, HorizonMode::Unlimited).map_err(|e| e.to_string())?;
    let end = s.n(prior.k()) + 1;
    let policy = OptimalPolicy::from_schedule(s);
    let mut open = 0.0;
    enumerate(&policy, &prior, end, |step| {
        if step.t == end && !is_terminal(step.state) {
            open += step.mass;
        }
    })
    .map_err(|e| e.to_string())?;
    ensure(open == 0.0, || {
        format!("mass {open:e} not terminal at agent {end}")
    })?;
    let profile = terminal_profile(&policy, &prior, end).map_err(|e| e.to_string())?;
    ensure((profile[end] - 1.0).abs() < 1e-12, || {
        format!("Pr[terminal at {end}] = {}", profile[end])
    })?;
    let report = min_time_check(&prior, end + 3, 200, 6).map_err(|e| e.to_string())?;
    ensure(report.pass, || report.to_json())?;
    Ok(format!(
        "terminal by agent {end}; dominates 200 variants ({} rejected as not incentive compatible)",
        report.rejected.len()
    ))
}

fn welfare_optimality() -> Outcome {
    let priors = [
        DiscretePrior::new([0.3, 0.3, 0.4], vec![0.4]),
        DiscretePrior::new([0.2, 0.5, 0.3], vec![0.35, 0.2]),
        DiscretePrior::new([0.4, 0.3, 0.3], vec![0.1, 0.05]),
    ];
    let mut lines = Vec::new();
    for raw in priors {
        let prior = raw.validate().map_err(|e| e.to_string())?;
        let s = compute_rate_schedule(&prior, HorizonMode::Unlimited).map_err(|e| e.to_string())?;
        let horizon = required_horizon(&s);
        let start = Instant::now();
        let report =
            perturbation_optimality_check(&prior, horizon, &PerturbationOptions::default())
                .map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        ensure(report.pass, || report.to_json())?;
        ensure(secs < 600.0, || format!("{} took {secs:.0}s", prior.id()))?;
        lines.push(format!(
            "k={} T={horizon} best gain {:.1e} ({secs:.1}s)",
            prior.k(),
            -report.worst_slack
        ));
    }
    Ok(lines.join("; "))
}

fn limited_horizon() -> Outcome {
    let prior = prior_a();
    let k = prior.k();
    let full = compute_rate_schedule(&prior, HorizonMode::Unlimited).map_err(|e| e.to_string())?;
    let mut gated_cells = 0;
    for horizon in 2..=29 {
        let s = compute_rate_schedule(&prior, HorizonMode::Limited { horizon })
            .map_err(|e| e.to_string())?;
        for t in 1..=horizon {
            let gate = limited_horizon_gate(&prior, k, t, horizon);
            let expect_zero = (horizon - t + 2) as f64 * prior.p_plus(k) < 1.0;
            ensure(gate != expect_zero, || {
                format!("gate disagrees at T={horizon} t={t}")
            })?;
            if expect_zero {
                ensure(s.q(t, k) == 0.0, || {
                    format!("T={horizon} t={t}: q = {}", s.q(t, k))
                })?;
                gated_cells += 1;
            } else {
                ensure(s.q(t, k) == full.q(t, k), || {
                    format!("T={horizon} t={t} differs from ungated")
                })?;
            }
        }
        let gated = OptimalPolicy::from_schedule(s);
        let ungated = OptimalPolicy::from_schedule(full.clone());
        let wg = welfare_exact(&gated, &prior, horizon).map_err(|e| e.to_string())?;
        let wu = welfare_exact(&ungated, &prior, horizon).map_err(|e| e.to_string())?;
        ensure(wg >= wu - 1e-12, || {
            format!("T={horizon}: gated {wg} < ungated {wu}")
        })?;
        if horizon == 10 {
            ensure((wg - GOLDEN_LIMITED_WELFARE_T10).abs() < 1e-12, || {
                format!("gated welfare {wg}")
            })?;
            ensure((wu - GOLDEN_WELFARE_T10).abs() < 1e-12, || {
                format!("ungated welfare {wu}")
            })?;
        }
    }
    Ok(format!(
        "{gated_cells} gated (t, T) cells exactly zero; at T=10 welfare {GOLDEN_LIMITED_WELFARE_T10:.6} vs ungated {GOLDEN_WELFARE_T10:.6}"
    ))
}

fn continuous_case() -> Outcome {
    for p2 in [0.1, 0.25, 0.4, 0.45] {
        let inst = ContinuousInstance::new(ContinuousPrior::uniform(), vec![p2])
            .map_err(|e| e.to_string())?;
        let s = compute_interval_schedule(&inst, 6).map_err(|e| e.to_string())?;
        let mu = 2.0 * p2 - 1.0;
        let i3 = s.endpoint(2, 3).map_err(|e| e.to_string())?;
        ensure((i3 - (2.0 * mu + 1.0)).abs() <= 1e-6, || {
            format!("p2={p2}: i_3 = {i3}")
        })?;
    }
    let worked = ContinuousInstance::new(ContinuousPrior::uniform(), vec![0.4])
        .map_err(|e| e.to_string())?;
    let s = compute_interval_schedule(&worked, 6).map_err(|e| e.to_string())?;
    ensure(s.endpoint(2, 4).map_err(|e| e.to_string())? == 1.0, || {
        "worked instance does not saturate at i_4".into()
    })?;
    ensure(s.saturation(2) == Some(3), || {
        format!("saturation {:?}", s.saturation(2))
    })?;

    let instances = vec![
        ContinuousInstance::new(ContinuousPrior::uniform(), vec![0.4, 0.3]),
        ContinuousInstance::new(ContinuousPrior::uniform(), vec![0.45, 0.3, 0.15]),
        ContinuousInstance::new(
            ContinuousPrior::piecewise_linear(vec![(-1.0, 0.0), (0.0, 0.3), (1.0, 1.0)])
                .map_err(|e| e.to_string())?,
            vec![0.4, 0.2],
        ),
    ];
    let mut worst_eq = f64::INFINITY;
    for inst in instances {
        let inst = inst.map_err(|e| e.to_string())?;
        let horizon = 12;
        let s = compute_interval_schedule(&inst, horizon).map_err(|e| e.to_string())?;
        let eq = partition_equation_audit(&inst, &s).map_err(|e| e.to_string())?;
        ensure(eq.worst_slack >= -1e-8, || eq.to_json())?;
        worst_eq = worst_eq.min(eq.worst_slack);
        for j in 2..=inst.k() {
            for t in 1..=horizon {
                let (a, b) = (s.endpoint(j, t).unwrap(), s.endpoint(j, t + 1).unwrap());
                ensure(b >= a - 1e-9, || {
                    format!("i_{}^{j} = {b} < i_{t}^{j} = {a}", t + 1)
                })?;
                if j < inst.k() {
                    let c = s.endpoint(j + 1, t + 1).unwrap();
                    ensure(a >= c - 1e-9, || {
                        format!("i_{t}^{j} = {a} < i_{}^{} = {c}", t + 1, j + 1)
                    })?;
                }
            }
        }
        let order = ascending_order_check(&inst, &s, 2001).map_err(|e| e.to_string())?;
        ensure(order.pass, || order.to_json())?;
        let bic = partition_bic_audit(&inst, &s, 1e-9).map_err(|e| e.to_string())?;
        ensure(bic.pass, || bic.to_json())?;
        let cautious = compute_scaled_schedule(&inst, horizon, 0.7).map_err(|e| e.to_string())?;
        let dom =
            partition_dominance_check(&inst, &s, &cautious, 2001).map_err(|e| e.to_string())?;
        ensure(dom.pass, || dom.to_json())?;
    }
    Ok(format!("uniform closed forms hold; worst interval slack {worst_eq:.2e}; order, incentives and dominance hold"))
}

fn monte_carlo() -> Outcome {
    let prior = prior_a();
    let s = compute_rate_schedule(&prior, HorizonMode::Unlimited).map_err(|e| e.to_string())?;
    let policy = OptimalPolicy::from_schedule(s.clone());
    let reps = 100_000;
    let est = estimate_welfare(&policy, &prior, 10, reps, 2024).map_err(|e| e.to_string())?;
    ensure(est.covers(GOLDEN_WELFARE_T10), || {
        format!(
            "CI [{}, {}] misses {GOLDEN_WELFARE_T10}",
            est.ci_low, est.ci_high
        )
    })?;
    let horizon = s.max_explorer() + 1;
    let freq =
        explorer_frequencies(&policy, &prior, horizon, reps, 2025).map_err(|e| e.to_string())?;
    let mut worst_z: f64 = 0.0;
    for (t, row) in freq.iter().enumerate().skip(1) {
        for j in 2..=prior.k() {
            let q = s.q(t, j);
            let se = (q * (1.0 - q) / reps as f64).sqrt();
            let dev = (row[j] - q).abs();
            if se == 0.0 {
                ensure(dev == 0.0, || {
                    format!("t={t} j={j}: frequency {} for zero rate", row[j])
                })?;
            } else {
                worst_z = worst_z.max(dev / se);
                ensure(dev <= 3.0 * se, || {
                    format!("t={t} j={j}: {} vs {q} ({:.2} se)", row[j], dev / se)
                })?;
            }
        }
    }
    Ok(format!(
        "welfare {:.4} [{:.4}, {:.4}] covers {GOLDEN_WELFARE_T10:.4}; explorer frequencies within {worst_z:.2} se",
        est.mean, est.ci_low, est.ci_high
    ))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("rate formula equivalence", rate_formula_equivalence),
        ("mass conservation", mass_conservation),
        ("explorer structure", explorer_structure),
        ("infeasibility", infeasibility),
        ("incentive audit", bic_audit_criterion),
        ("termination and min-time", termination_and_min_time),
        ("welfare optimality", welfare_optimality),
        ("limited horizon", limited_horizon),
        ("continuous case", continuous_case),
        ("monte-carlo consistency", monte_carlo),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                println!("criterion {:>2} {name}: FAIL ({detail})", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
