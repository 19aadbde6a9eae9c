//! Seeded Monte-Carlo episodes.
//!
//! Every episode owns its own generator: the run seed picks the key and the
//! episode index (XOR'd with a fixed constant) picks the stream, so adding
//! replications never changes earlier episodes. Episodes run in parallel and
//! are reduced in index order, which keeps results identical across thread
//! counts.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{
    initial_state, is_terminal, transition, EngineError, InformationState, RecommendationKind,
};
use crate::policy::{Decision, Policy, PolicyError, StepContext};
use crate::prior::{Realization, Reward, ValidatedPrior};

/// Caps the worker pool used by the harness.
pub const THREADS_ENV: &str = "BIC_EXPLORE_THREADS";

const STREAM_BASE: u64 = 0x9e37_79b9_7f4a_7c15;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("at least one replication is required")]
    NoReplications,
    #[error("policy has {policy} actions but the prior has {prior}")]
    ActionCountMismatch { policy: usize, prior: usize },
    #[error("policy {name} is listed twice")]
    DuplicatePolicy { name: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("could not build worker pool: {0}")]
    ThreadPool(String),
}

/// What agent `t` was told and what it earned.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentRecord {
    pub t: usize,
    pub state: InformationState,
    pub action: usize,
    pub kind: RecommendationKind,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub seed: u64,
    pub episode: u64,
    pub horizon: usize,
    pub y: f64,
    pub realization: Realization,
    pub records: Vec<AgentRecord>,
    pub welfare: f64,
}

impl Trajectory {
    /// First agent whose incoming state is terminal, or `horizon + 1`.
    pub fn terminal_time(&self) -> usize {
        self.records
            .iter()
            .find(|r| is_terminal(&r.state))
            .map_or(self.horizon + 1, |r| r.t)
    }

    /// Number of agents sent to an action nobody had tried.
    pub fn reveals(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.action > 1 && !r.state.is_known(r.action))
            .count()
    }

    /// `(t, j)` for every agent that received an exploration recommendation.
    pub fn explorations(&self) -> Vec<(usize, usize)> {
        self.records
            .iter()
            .filter(|r| r.kind == RecommendationKind::Explore)
            .map(|r| (r.t, r.action))
            .collect()
    }
}

fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_BASE ^ episode);
    rng
}

fn draw_realization(prior: &ValidatedPrior, rng: &mut ChaCha8Rng) -> Realization {
    let mut rewards = Vec::with_capacity(prior.k());
    let u: f64 = rng.random();
    rewards.push(if u < prior.p_plus(1) {
        Reward::Plus
    } else if u < prior.p_plus(1) + prior.p_zero() {
        Reward::Zero
    } else {
        Reward::Minus
    });
    for j in 2..=prior.k() {
        let u: f64 = rng.random();
        rewards.push(if u < prior.p_plus(j) {
            Reward::Plus
        } else {
            Reward::Minus
        });
    }
    Realization::new(rewards)
}

/// Runs episode `episode` of the stream keyed by `seed`.
pub fn run_episode_indexed<P: Policy + ?Sized>(
    policy: &P,
    prior: &ValidatedPrior,
    horizon: usize,
    seed: u64,
    episode: u64,
) -> Result<Trajectory, SimError> {
    if policy.k() != prior.k() {
        return Err(SimError::ActionCountMismatch {
            policy: policy.k(),
            prior: prior.k(),
        });
    }
    let mut rng = episode_rng(seed, episode);
    let y = 1.0 - rng.random::<f64>();
    let realization = draw_realization(prior, &mut rng);
    let mut state = initial_state(prior.k())?;
    let mut records = Vec::with_capacity(horizon);
    let mut welfare = 0.0;
    for t in 1..=horizon {
        let ctx = StepContext {
            state: &state,
            y,
            realization: &realization,
        };
        let rec = match policy.decide(&ctx)? {
            Decision::Pure(r) => r,
            Decision::Split {
                explore,
                prob,
                otherwise,
            } => {
                if rng.random::<f64>() < prob {
                    explore
                } else {
                    otherwise
                }
            }
        };
        let reward = realization.reward(rec.action);
        welfare += reward.value();
        let next = transition(&state, rec.action, reward)?;
        records.push(AgentRecord {
            t,
            state,
            action: rec.action,
            kind: rec.kind,
            reward: reward.value(),
        });
        state = next;
    }
    Ok(Trajectory {
        seed,
        episode,
        horizon,
        y,
        realization,
        records,
        welfare,
    })
}

/// One episode: draws `x` and `y` once, then walks the policy with
/// compliant agents.
pub fn run_episode<P: Policy + ?Sized>(
    policy: &P,
    prior: &ValidatedPrior,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory, SimError> {
    run_episode_indexed(policy, prior, horizon, seed, 0)
}

/// Re-runs the episode that produced `trajectory`.
pub fn replay<P: Policy + ?Sized>(
    policy: &P,
    prior: &ValidatedPrior,
    trajectory: &Trajectory,
) -> Result<Trajectory, SimError> {
    run_episode_indexed(
        policy,
        prior,
        trajectory.horizon,
        trajectory.seed,
        trajectory.episode,
    )
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Maps `f` over episodes `0..reps` in parallel, returning results in
/// episode order.
fn par_episodes<T, F>(reps: usize, f: F) -> Result<Vec<T>, SimError>
where
    T: Send,
    F: Fn(u64) -> Result<T, SimError> + Sync + Send,
{
    let run = || {
        (0..reps as u64)
            .into_par_iter()
            .map(&f)
            .collect::<Result<Vec<T>, SimError>>()
    };
    match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SimError::ThreadPool(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Sample mean with a 95% normal confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelfareEstimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub std_error: f64,
    pub reps: usize,
    /// Set when one replication makes the interval meaningless.
    pub degenerate: bool,
}

impl WelfareEstimate {
    fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            ci_low: mean - Z95 * std_error,
            ci_high: mean + Z95 * std_error,
            std_error,
            reps: n,
            degenerate: n == 1,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

pub fn estimate_welfare<P: Policy + ?Sized>(
    policy: &P,
    prior: &ValidatedPrior,
    horizon: usize,
    reps: usize,
    seed: u64,
) -> Result<WelfareEstimate, SimError> {
    if reps == 0 {
        return Err(SimError::NoReplications);
    }
    let samples = par_episodes(reps, |e| {
        run_episode_indexed(policy, prior, horizon, seed, e).map(|tr| tr.welfare)
    })?;
    Ok(WelfareEstimate::from_samples(&samples))
}

/// Fraction of episodes in which agent `t` explores action `j`,
/// `out[t][j]`, for `t <= horizon`.
pub fn explorer_frequencies<P: Policy + ?Sized>(
    policy: &P,
    prior: &ValidatedPrior,
    horizon: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, SimError> {
    if reps == 0 {
        return Err(SimError::NoReplications);
    }
    let per_episode = par_episodes(reps, |e| {
        run_episode_indexed(policy, prior, horizon, seed, e).map(|tr| tr.explorations())
    })?;
    let mut counts = vec![vec![0usize; prior.k() + 1]; horizon + 1];
    for list in &per_episode {
        for &(t, j) in list {
            counts[t][j] += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / reps as f64).collect())
        .collect())
}

/// One row of a policy comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub mean_welfare: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_terminal_t: f64,
    /// Mean number of agents sent to a not-yet-tried action.
    #[serde(skip)]
    pub mean_reveals: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Runs every policy on the same `x` and `y` draws.
///
/// Episode `e` of every policy uses the same generator stream, and the
/// reward vector and shared draw come first in that stream, so all policies
/// face identical instances.
pub fn compare_policies(
    policies: &[&dyn Policy],
    prior: &ValidatedPrior,
    horizon: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<ComparisonRow>, SimError> {
    if reps == 0 {
        return Err(SimError::NoReplications);
    }
    for (i, p) in policies.iter().enumerate() {
        if policies[..i].iter().any(|q| q.name() == p.name()) {
            return Err(SimError::DuplicatePolicy {
                name: p.name().to_string(),
            });
        }
    }
    let mut rows = Vec::with_capacity(policies.len());
    for policy in policies {
        let summaries = par_episodes(reps, |e| {
            run_episode_indexed(*policy, prior, horizon, seed, e)
                .map(|tr| (tr.welfare, tr.terminal_time(), tr.reveals()))
        })?;
        let welfare: Vec<f64> = summaries.iter().map(|s| s.0).collect();
        let est = WelfareEstimate::from_samples(&welfare);
        let n = reps as f64;
        rows.push(ComparisonRow {
            policy: policy.name().to_string(),
            mean_welfare: est.mean,
            ci_low: est.ci_low,
            ci_high: est.ci_high,
            mean_terminal_t: summaries.iter().map(|s| s.1 as f64).sum::<f64>() / n,
            mean_reveals: summaries.iter().map(|s| s.2 as f64).sum::<f64>() / n,
            reps,
            seed,
        });
    }
    Ok(rows)
}

/// Writes comparison rows with header
/// `policy,mean_welfare,ci_low,ci_high,mean_terminal_t,reps,seed`.
pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}
