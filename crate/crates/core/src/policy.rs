//! Recommendation policies over information states.
//!
//! A policy maps the planner's state (plus the shared draw `y`) to a
//! recommendation, or to a coin flip between two recommendations. Exact
//! enumeration and Monte-Carlo simulation both drive policies through the
//! [`Policy`] trait.

use serde::Serialize;
use thiserror::Error;

use crate::engine::{
    recommend_with, EngineError, InformationState, PositiveMeanPlan, Recommendation,
    RecommendationKind,
};
use crate::prior::{DiscretePrior, Realization, ValidatedPrior};
use crate::rates::{compute_rate_schedule, HorizonMode, RateError, RateSchedule};
use crate::sampler::{explorer_index, y_cells, SamplerError};

/// Rates may exceed the available mass by this much before being rejected.
pub const RATE_FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error("rate {psi} for action {j} at agent {t} exceeds the available mass {available}")]
    InfeasibleRate {
        t: usize,
        j: usize,
        psi: f64,
        available: f64,
    },
    #[error("policy covers {expected} actions, instance has {got}")]
    ActionCountMismatch { expected: usize, got: usize },
}

/// What a policy does in one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Decision {
    Pure(Recommendation),
    /// `explore` with probability `prob`, otherwise `otherwise`.
    Split {
        explore: Recommendation,
        prob: f64,
        otherwise: Recommendation,
    },
}

/// Inputs available when agent `state.t()` arrives.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub state: &'a InformationState,
    pub y: f64,
    /// The full reward vector; only clairvoyant benchmarks may look at it.
    pub realization: &'a Realization,
}

pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    fn k(&self) -> usize;

    /// Interior points of `(0, 1)` where the policy's use of `y` can change.
    fn y_breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    fn decide(&self, ctx: &StepContext<'_>) -> Result<Decision, PolicyError>;
}

/// The optimal incentive-compatible policy driven by the coordinated sampler.
#[derive(Debug, Clone)]
pub struct OptimalPolicy {
    schedule: RateSchedule,
}

impl OptimalPolicy {
    pub fn new(prior: &ValidatedPrior, mode: HorizonMode) -> Result<Self, PolicyError> {
        Ok(Self::from_schedule(compute_rate_schedule(prior, mode)?))
    }

    pub fn from_schedule(schedule: RateSchedule) -> Self {
        Self { schedule }
    }

    pub fn schedule(&self) -> &RateSchedule {
        &self.schedule
    }

    pub fn recommend(
        &self,
        state: &InformationState,
        y: f64,
    ) -> Result<Recommendation, PolicyError> {
        if !(y > 0.0 && y <= 1.0) {
            return Err(SamplerError::YOutOfRange { y }.into());
        }
        // y is in range, so the sampler can only fail on the action index,
        // which the engine keeps within 2..=k.
        let rec = recommend_with(state, |j| {
            explorer_index(&self.schedule, j, y).ok().flatten()
        })?;
        Ok(rec)
    }
}

impl Policy for OptimalPolicy {
    fn name(&self) -> &str {
        "optimal"
    }

    fn k(&self) -> usize {
        self.schedule.k()
    }

    fn y_breakpoints(&self) -> Vec<f64> {
        interior_breakpoints(&self.schedule)
    }

    fn decide(&self, ctx: &StepContext<'_>) -> Result<Decision, PolicyError> {
        Ok(Decision::Pure(self.recommend(ctx.state, ctx.y)?))
    }
}

fn interior_breakpoints(schedule: &RateSchedule) -> Vec<f64> {
    let cells = y_cells(schedule);
    cells[..cells.len() - 1].iter().map(|c| c.hi).collect()
}

/// Optimal policy for priors that may contain nonnegative tail means: a
/// sequential prefix followed by the optimal policy on the residual instance.
#[derive(Debug, Clone)]
pub struct PlannedPolicy {
    plan: PositiveMeanPlan,
    inner: Option<OptimalPolicy>,
}

impl PlannedPolicy {
    pub fn new(prior: &DiscretePrior, mode: HorizonMode) -> Result<Self, PolicyError> {
        let plan = crate::engine::preprocess_positive_means(prior)?;
        let inner = match &plan.residual {
            Some(r) => {
                let mode = match mode {
                    HorizonMode::Limited { horizon } if horizon >= plan.prefix_end => {
                        HorizonMode::Limited {
                            horizon: plan.residual_time(horizon),
                        }
                    }
                    HorizonMode::Limited { .. } => HorizonMode::Limited { horizon: 1 },
                    HorizonMode::Unlimited => HorizonMode::Unlimited,
                };
                Some(OptimalPolicy::new(r, mode)?)
            }
            None => None,
        };
        Ok(Self { plan, inner })
    }

    pub fn plan(&self) -> &PositiveMeanPlan {
        &self.plan
    }

    pub fn recommend(
        &self,
        state: &InformationState,
        y: f64,
    ) -> Result<Recommendation, PolicyError> {
        use RecommendationKind::*;
        let m = self.plan.prefix_end;
        let t = state.t();
        if m == 1 {
            return self
                .inner
                .as_ref()
                .expect("identity plan")
                .recommend(state, y);
        }
        state.check_feasible()?;
        if t == 1 {
            return Ok(Recommendation::new(1, ExploitUnknown));
        }
        if let Some(j) = state.first_plus() {
            return Ok(Recommendation::new(j, Terminal));
        }
        if t <= m {
            return Ok(Recommendation::new(t, ExploitUnknown));
        }
        let Some(inner) = &self.inner else {
            let best = state.best_known().expect("action 1 is known");
            return Ok(Recommendation::new(best, Terminal));
        };
        // Collapse actions 1..=m into one residual action holding their best value.
        let head = state.get(1);
        let mut z = Vec::with_capacity(inner.k());
        z.push(head);
        for j in m + 1..=self.plan.original.k() {
            z.push(state.get(j));
        }
        let residual_state = InformationState::new(z, self.plan.residual_time(t));
        let rec = inner.recommend(&residual_state, y)?;
        let action = if rec.action == 1 {
            state.best_known().expect("action 1 is known")
        } else {
            self.plan.original_action(rec.action)
        };
        Ok(Recommendation::new(action, rec.kind))
    }
}

impl Policy for PlannedPolicy {
    fn name(&self) -> &str {
        "planned"
    }

    fn k(&self) -> usize {
        self.plan.original.k()
    }

    fn y_breakpoints(&self) -> Vec<f64> {
        self.inner
            .as_ref()
            .map(|p| p.y_breakpoints())
            .unwrap_or_default()
    }

    fn decide(&self, ctx: &StepContext<'_>) -> Result<Decision, PolicyError> {
        Ok(Decision::Pure(self.recommend(ctx.state, ctx.y)?))
    }
}

/// Per-agent exploration rates `psi_t^j`, `t = 1..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    k: usize,
    horizon: usize,
    /// `values[j - 2][t - 1]`.
    values: Vec<Vec<f64>>,
}

impl RateTable {
    pub fn zeros(k: usize, horizon: usize) -> Self {
        Self {
            k,
            horizon,
            values: vec![vec![0.0; horizon]; k.saturating_sub(1)],
        }
    }

    pub fn from_schedule(schedule: &RateSchedule, horizon: usize) -> Self {
        let mut table = Self::zeros(schedule.k(), horizon);
        for j in 2..=schedule.k() {
            for t in 1..=horizon {
                table.set(t, j, schedule.q(t, j));
            }
        }
        table
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        if j < 2 || j > self.k || t == 0 || t > self.horizon {
            return 0.0;
        }
        self.values[j - 2][t - 1]
    }

    pub fn set(&mut self, t: usize, j: usize, v: f64) {
        self.values[j - 2][t - 1] = v;
    }

    /// Coordinates with a positive rate, ordered by `t` then `j`.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for t in 1..=self.horizon {
            for j in 2..=self.k {
                if self.get(t, j) > 0.0 {
                    out.push((t, j));
                }
            }
        }
        out
    }
}

/// Table-driven exploration: in the exploration state for `j` at agent `t`,
/// explore with conditional probability `psi_t^j / E_t^j`, where `E_t^j` is
/// the probability of being in that state. Exploitation rows match the
/// optimal policy.
#[derive(Debug, Clone)]
pub struct RatePolicy {
    name: String,
    rates: RateTable,
    available: RateTable,
}

impl RatePolicy {
    pub fn new(
        name: impl Into<String>,
        prior: &ValidatedPrior,
        rates: RateTable,
    ) -> Result<Self, PolicyError> {
        if rates.k() != prior.k() {
            return Err(PolicyError::ActionCountMismatch {
                expected: rates.k(),
                got: prior.k(),
            });
        }
        let available = exploration_state_mass(prior, &rates)?;
        Ok(Self {
            name: name.into(),
            rates,
            available,
        })
    }

    pub fn rates(&self) -> &RateTable {
        &self.rates
    }

    /// Probability of sitting in the exploration state for `j` before agent `t`.
    pub fn available(&self, t: usize, j: usize) -> f64 {
        self.available.get(t, j)
    }
}

/// Forward chain of exploration-state probabilities under `rates`.
fn exploration_state_mass(
    prior: &ValidatedPrior,
    rates: &RateTable,
) -> Result<RateTable, PolicyError> {
    let k = prior.k();
    let horizon = rates.horizon();
    let mut mass = RateTable::zeros(k, horizon);
    let mut current = vec![0.0; k + 1];
    for t in 1..=horizon {
        if t == 2 {
            current[2] = prior.p_zero();
        }
        let mut next = current.clone();
        for j in 2..=k {
            mass.set(t, j, current[j]);
            let psi = rates.get(t, j);
            if psi < 0.0 || psi > current[j] + RATE_FEASIBILITY_SLACK {
                return Err(PolicyError::InfeasibleRate {
                    t,
                    j,
                    psi,
                    available: current[j],
                });
            }
            let psi = psi.min(current[j]);
            next[j] -= psi;
            if j < k {
                next[j + 1] += prior.p_minus(j) * psi;
            }
        }
        current = next;
    }
    Ok(mass)
}

impl Policy for RatePolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn k(&self) -> usize {
        self.rates.k()
    }

    fn decide(&self, ctx: &StepContext<'_>) -> Result<Decision, PolicyError> {
        let state = ctx.state;
        let t = state.t();
        let rec = recommend_with(state, |_| Some(usize::MAX))?;
        if rec.kind != RecommendationKind::ExploitKnown {
            return Ok(Decision::Pure(rec));
        }
        // Only the exploration state reaches this point.
        let j = state.least_unexplored().expect("exploration state");
        let psi = self.rates.get(t, j);
        let available = self.available(t, j);
        if psi <= 0.0 || available <= 0.0 {
            return Ok(Decision::Pure(rec));
        }
        let prob = (psi / available).min(1.0);
        Ok(Decision::Split {
            explore: Recommendation::new(j, RecommendationKind::Explore),
            prob,
            otherwise: rec,
        })
    }
}

/// Myopic recommendation: highest expected reward given what is known,
/// ties toward the lowest index.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    prior: ValidatedPrior,
}

impl GreedyPolicy {
    pub fn new(prior: &ValidatedPrior) -> Self {
        Self {
            prior: prior.clone(),
        }
    }
}

impl Policy for GreedyPolicy {
    fn name(&self) -> &str {
        "greedy"
    }

    fn k(&self) -> usize {
        self.prior.k()
    }

    fn decide(&self, ctx: &StepContext<'_>) -> Result<Decision, PolicyError> {
        let state = ctx.state;
        let mut best = (1, f64::NEG_INFINITY, false);
        for j in 1..=self.prior.k() {
            let (v, known) = match state.get(j) {
                Some(r) => (r.value(), true),
                None => (self.prior.mu(j), false),
            };
            if v > best.1 {
                best = (j, v, known);
            }
        }
        let kind = if best.2 {
            RecommendationKind::ExploitKnown
        } else {
            RecommendationKind::ExploitUnknown
        };
        Ok(Decision::Pure(Recommendation::new(best.0, kind)))
    }
}

/// Recommends action 1 to everybody.
#[derive(Debug, Clone)]
pub struct AlwaysFirst {
    k: usize,
}

impl AlwaysFirst {
    pub fn new(k: usize) -> Self {
        Self { k }
    }
}

impl Policy for AlwaysFirst {
    fn name(&self) -> &str {
        "always_first"
    }

    fn k(&self) -> usize {
        self.k
    }

    fn decide(&self, ctx: &StepContext<'_>) -> Result<Decision, PolicyError> {
        let kind = if ctx.state.is_known(1) {
            RecommendationKind::ExploitKnown
        } else {
            RecommendationKind::ExploitUnknown
        };
        Ok(Decision::Pure(Recommendation::new(1, kind)))
    }
}

/// Clairvoyant benchmark that sees every reward and ignores incentives.
#[derive(Debug, Clone)]
pub struct FullInformation {
    k: usize,
}

impl FullInformation {
    pub fn new(k: usize) -> Self {
        Self { k }
    }
}

impl Policy for FullInformation {
    fn name(&self) -> &str {
        "full_information"
    }

    fn k(&self) -> usize {
        self.k
    }

    fn decide(&self, ctx: &StepContext<'_>) -> Result<Decision, PolicyError> {
        let j = ctx.realization.best_action();
        Ok(Decision::Pure(Recommendation::new(
            j,
            RecommendationKind::ExploitKnown,
        )))
    }
}
