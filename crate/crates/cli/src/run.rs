use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use bic_explore::policy::{PolicyError, RatePolicy, RateTable};
use bic_explore::verify::{
    ascending_order_check, bic_audit, maximality_audit, partition_bic_audit,
    partition_equation_audit, perturbation_optimality_check, required_horizon, AuditReport,
    Counterexample, PerturbationOptions, SlackEntry, VerifyError,
};
use bic_explore::{
    compare_policies, compute_interval_schedule, compute_rate_schedule, validate, AlwaysFirst,
    ContinuousInstance, FullInformation, GreedyPolicy, HorizonMode, OptimalPolicy, PartitionError,
    Policy, PriorError, RateError, RateSchedule, SimError, ValidatedPrior,
};

use crate::config::{ConfigError, Mode, PriorSpec, RunConfig};

pub enum Status {
    Success,
    AuditFailed,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: row {row}: {detail}")]
    Schedule {
        path: PathBuf,
        row: usize,
        detail: String,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> RunError + '_ {
    move |source| RunError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn discrete(cfg: &RunConfig) -> Result<ValidatedPrior, RunError> {
    match cfg.prior()? {
        PriorSpec::Discrete(d) => Ok(validate(&d)?),
        PriorSpec::Continuous(_) => Err(ConfigError::WrongPrior {
            mode: cfg.mode,
            needs: "discrete",
        }
        .into()),
    }
}

fn horizon_mode(cfg: &RunConfig) -> Result<HorizonMode, RunError> {
    Ok(if cfg.limited {
        HorizonMode::Limited {
            horizon: cfg.require_horizon()?,
        }
    } else {
        HorizonMode::Unlimited
    })
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<Status, RunError> {
    fs::create_dir_all(out).map_err(|source| RunError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    match cfg.mode {
        Mode::Rates => rates(cfg, out),
        Mode::Partition => partition(cfg, out),
        Mode::Simulate => simulate(cfg, out),
        Mode::Compare => compare(cfg, out),
        Mode::Audit => audit(cfg, out),
    }
}

fn rates(cfg: &RunConfig, out: &Path) -> Result<Status, RunError> {
    let prior = discrete(cfg)?;
    let schedule = compute_rate_schedule(&prior, horizon_mode(cfg)?)?;
    let path = out.join("rates.csv");
    schedule.write_csv(create(&path)?).map_err(csv_err(&path))?;
    for j in 2..=prior.k() {
        println!(
            "action {j}: last explorer {}, total rate {:.12}",
            schedule.n(j),
            schedule.total(j)
        );
    }
    println!("wrote {}", path.display());
    Ok(Status::Success)
}

fn continuous(cfg: &RunConfig) -> Result<ContinuousInstance, RunError> {
    match cfg.prior()? {
        PriorSpec::Continuous(c) => Ok(c),
        PriorSpec::Discrete(_) => Err(ConfigError::WrongPrior {
            mode: cfg.mode,
            needs: "continuous",
        }
        .into()),
    }
}

fn partition(cfg: &RunConfig, out: &Path) -> Result<Status, RunError> {
    let inst = continuous(cfg)?;
    let schedule = compute_interval_schedule(&inst, cfg.require_horizon()?)?;
    let path = out.join("partition.csv");
    schedule.write_csv(create(&path)?).map_err(csv_err(&path))?;
    println!("wrote {}", path.display());
    Ok(Status::Success)
}

fn write_rows(rows: &[bic_explore::ComparisonRow], path: &Path) -> Result<(), RunError> {
    bic_explore::write_comparison_csv(rows, create(path)?).map_err(csv_err(path))?;
    for r in rows {
        println!(
            "{}: welfare {:.6} [{:.6}, {:.6}], mean terminal agent {:.3}",
            r.policy, r.mean_welfare, r.ci_low, r.ci_high, r.mean_terminal_t
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<Status, RunError> {
    let prior = discrete(cfg)?;
    let horizon = cfg.require_horizon()?;
    let policy = OptimalPolicy::new(&prior, horizon_mode(cfg)?)?;
    let rows = compare_policies(&[&policy], &prior, horizon, cfg.reps, cfg.seed)?;
    write_rows(&rows, &out.join("simulation.csv"))?;
    Ok(Status::Success)
}

fn compare(cfg: &RunConfig, out: &Path) -> Result<Status, RunError> {
    let prior = discrete(cfg)?;
    let horizon = cfg.require_horizon()?;
    let optimal = OptimalPolicy::new(&prior, horizon_mode(cfg)?)?;
    let greedy = GreedyPolicy::new(&prior);
    let first = AlwaysFirst::new(prior.k());
    let full = FullInformation::new(prior.k());
    let policies: [&dyn Policy; 4] = [&optimal, &greedy, &first, &full];
    let rows = compare_policies(&policies, &prior, horizon, cfg.reps, cfg.seed)?;
    write_rows(&rows, &out.join("compare.csv"))?;
    Ok(Status::Success)
}

#[derive(Deserialize)]
struct ScheduleRow {
    t: usize,
    j: usize,
    q: f64,
}

/// Reads `t,j,q[,A,B]` rows into a rate table.
fn read_schedule(path: &Path, k: usize, horizon: Option<usize>) -> Result<RateTable, RunError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<ScheduleRow>().enumerate() {
        let row: ScheduleRow = rec.map_err(csv_err(path))?;
        let bad = |detail: String| RunError::Schedule {
            path: path.to_path_buf(),
            row: i + 1,
            detail,
        };
        if row.j < 2 || row.j > k {
            return Err(bad(format!("action {} outside 2..={k}", row.j)));
        }
        if row.t == 0 {
            return Err(bad("agent index 0".into()));
        }
        if !row.q.is_finite() || row.q < 0.0 {
            return Err(bad(format!("rate {} is not a probability", row.q)));
        }
        rows.push(row);
    }
    let horizon = horizon.unwrap_or_else(|| rows.iter().map(|r| r.t).max().unwrap_or(1) + 1);
    let mut table = RateTable::zeros(k, horizon);
    for r in rows.iter().filter(|r| r.t <= horizon) {
        table.set(r.t, r.j, r.q);
    }
    Ok(table)
}

/// File rates against the maximal schedule, one entry per agent and action.
fn schedule_match(table: &RateTable, schedule: &RateSchedule, id: String, tol: f64) -> AuditReport {
    let mut entries = Vec::new();
    for t in 1..=table.horizon() {
        for j in 2..=table.k() {
            entries.push(SlackEntry {
                t,
                j,
                i: None,
                slack: -(table.get(t, j) - schedule.q(t, j)).abs(),
            });
        }
    }
    let mut report = AuditReport::from_entries("maximality", id, tol, entries);
    if let Some(cx) = report.counterexample.as_mut() {
        cx.detail = format!(
            "file rate {} differs from the maximal rate {}",
            table.get(cx.t, cx.j),
            schedule.q(cx.t, cx.j)
        );
    }
    report
}

fn audit_table(
    cfg: &RunConfig,
    prior: &ValidatedPrior,
    path: &Path,
) -> Result<Vec<AuditReport>, RunError> {
    let table = read_schedule(path, prior.k(), cfg.horizon)?;
    let schedule = compute_rate_schedule(prior, horizon_mode(cfg)?)?;
    let mut reports = Vec::new();
    match RatePolicy::new("file", prior, table.clone()) {
        Ok(policy) => reports.push(bic_audit(
            &policy,
            prior,
            table.horizon(),
            cfg.tolerances.bic,
        )?),
        Err(PolicyError::InfeasibleRate {
            t,
            j,
            psi,
            available,
        }) => {
            let mut r = AuditReport::from_entries("mass_feasibility", prior.id(), 0.0, vec![]);
            r.pass = false;
            r.worst_slack = available - psi;
            r.counterexample = Some(Counterexample {
                t,
                j,
                alternative: None,
                slack: available - psi,
                detail: format!("rate {psi} exceeds the exploration-state mass {available}"),
                realization: None,
                y: None,
            });
            reports.push(r);
        }
        Err(e) => return Err(e.into()),
    }
    reports.push(schedule_match(&table, &schedule, prior.id(), 1e-8));
    Ok(reports)
}

fn audit(cfg: &RunConfig, out: &Path) -> Result<Status, RunError> {
    let reports = match cfg.prior()? {
        PriorSpec::Discrete(d) => {
            let prior = validate(&d)?;
            match &cfg.schedule {
                Some(path) => audit_table(cfg, &prior, path)?,
                None => {
                    let mode = horizon_mode(cfg)?;
                    let schedule = compute_rate_schedule(&prior, mode)?;
                    let horizon = cfg.horizon.unwrap_or(schedule.max_explorer() + 2);
                    let policy = OptimalPolicy::from_schedule(schedule.clone());
                    let mut reports = vec![
                        bic_audit(&policy, &prior, horizon, cfg.tolerances.bic)?,
                        maximality_audit(&schedule)?,
                    ];
                    let long_enough = cfg.limited || horizon >= required_horizon(&schedule);
                    if cfg.horizon.is_some() && long_enough && prior.k() <= 4 && horizon <= 400 {
                        let opts = PerturbationOptions {
                            limited: cfg.limited,
                            seed: cfg.seed,
                            ..PerturbationOptions::default()
                        };
                        let r = perturbation_optimality_check(&prior, horizon, &opts)?;
                        reports.push(retolerance(r, cfg.tolerances.welfare));
                    }
                    reports
                }
            }
        }
        PriorSpec::Continuous(inst) => {
            let schedule = compute_interval_schedule(&inst, cfg.require_horizon()?)?;
            vec![
                retolerance(
                    partition_equation_audit(&inst, &schedule)?,
                    cfg.tolerances.equation,
                ),
                partition_bic_audit(&inst, &schedule, cfg.tolerances.bic)?,
                ascending_order_check(&inst, &schedule, cfg.x1_grid)?,
            ]
        }
    };
    let path = out.join("audit.json");
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    fs::write(&path, json + "\n").map_err(|source| RunError::Io {
        path: path.clone(),
        source,
    })?;
    let mut failed = false;
    for r in &reports {
        println!(
            "{}: {} (worst slack {:.3e})",
            r.check,
            if r.pass { "pass" } else { "FAIL" },
            r.worst_slack
        );
        failed |= !r.pass;
    }
    println!("wrote {}", path.display());
    Ok(if failed {
        Status::AuditFailed
    } else {
        Status::Success
    })
}

/// Re-judges a report at a different tolerance, keeping its witness text.
fn retolerance(report: AuditReport, tol: f64) -> AuditReport {
    if report.tolerance == tol {
        return report;
    }
    let detail = report.counterexample.clone();
    let mut r = AuditReport::from_entries(report.check, report.prior_id, tol, report.entries);
    if let (Some(cx), Some(old)) = (r.counterexample.as_mut(), detail) {
        if (cx.t, cx.j, cx.alternative) == (old.t, old.j, old.alternative) {
            *cx = old;
        }
    }
    r
}
