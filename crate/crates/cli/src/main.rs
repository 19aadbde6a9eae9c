//! `bic-explore`: compute exploration schedules and partitions, audit them,
//! and run seeded simulations from a TOML config.
//!
//! Exit status is 0 on success, 1 on bad input and 2 when an audit fails.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{Mode, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "bic-explore", version, about)]
struct Cli {
    /// Path to the TOML run config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's mode.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Output directory (default: the config's `out`, else the current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Overrides every audit tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Print the effective config (after overrides) as TOML and exit.
    #[arg(long)]
    emit_config: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(1);
        }
    };
    let mut cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.config.display());
            return ExitCode::from(1);
        }
    };
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.reps {
        cfg.reps = r;
    }
    if let Some(t) = cli.tol {
        cfg.tolerances.bic = t;
        cfg.tolerances.equation = t;
        cfg.tolerances.welfare = t;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if cli.emit_config {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }
    // Relative schedule paths are resolved against the config's directory.
    let base = cli.config.parent().map(PathBuf::from).unwrap_or_default();
    if let Some(s) = cfg.schedule.as_mut() {
        if s.is_relative() {
            *s = base.join(&*s);
        }
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match run::run(&cfg, &out) {
        Ok(run::Status::Success) => ExitCode::SUCCESS,
        Ok(run::Status::AuditFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
