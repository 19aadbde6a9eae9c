//! Information-state machine and the optimal recommendation rule.
//!
//! The planner's knowledge before agent `t` is a vector over actions of
//! "unknown" or the realized reward. Recommendations depend only on that
//! vector, the rate schedule and the shared draw `y`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prior::{
    validate, validate_allowing_nonnegative_tail, DiscretePrior, PriorError, Reward, ValidatedPrior,
};
use crate::rates::RateSchedule;
use crate::sampler::ExplorerAssignment;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("the model needs at least two actions, got k = {k}")]
    DegenerateK { k: usize },
    #[error("state {state} cannot occur: {reason}")]
    InfeasibleState { state: String, reason: String },
    #[error("action {action} already revealed {known}, cannot now yield {got}")]
    RewardMismatch {
        action: usize,
        known: Reward,
        got: Reward,
    },
    #[error("action {action} cannot yield reward {got}")]
    InvalidReward { action: usize, got: Reward },
    #[error("action index {j} out of range 1..={k}")]
    ActionOutOfRange { j: usize, k: usize },
    #[error("explorer of action {j} was agent {explorer}, but agent {t} still sees it unexplored")]
    ExplorerMissed { j: usize, explorer: usize, t: usize },
    #[error(transparent)]
    Prior(#[from] PriorError),
}

/// Planner knowledge before agent `t`: `z[j - 1]` is `None` while action `j`
/// is unexplored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InformationState {
    z: Vec<Option<Reward>>,
    t: usize,
}

impl InformationState {
    pub fn new(z: Vec<Option<Reward>>, t: usize) -> Self {
        Self { z, t }
    }

    pub fn k(&self) -> usize {
        self.z.len()
    }

    /// Index of the agent about to act.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn get(&self, j: usize) -> Option<Reward> {
        self.z[j - 1]
    }

    pub fn is_known(&self, j: usize) -> bool {
        self.z[j - 1].is_some()
    }

    pub fn values(&self) -> &[Option<Reward>] {
        &self.z
    }

    /// Lowest-index action holding a revealed `+1`.
    pub fn first_plus(&self) -> Option<usize> {
        self.z
            .iter()
            .position(|v| *v == Some(Reward::Plus))
            .map(|i| i + 1)
    }

    pub fn least_unexplored(&self) -> Option<usize> {
        self.z.iter().position(Option::is_none).map(|i| i + 1)
    }

    /// Best revealed value, ties toward the lowest index.
    pub fn best_known(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in self.z.iter().enumerate() {
            if let Some(r) = v {
                if best.is_none_or(|(_, b)| r.value() > b) {
                    best = Some((i + 1, r.value()));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    /// The explored actions form a prefix `1..=m` and only action 1 may hold 0.
    pub fn check_feasible(&self) -> Result<(), EngineError> {
        let bad = |reason: &str| {
            Err(EngineError::InfeasibleState {
                state: self.to_string(),
                reason: reason.into(),
            })
        };
        if self.t == 0 {
            return bad("agent indices start at 1");
        }
        if self.z.iter().skip(1).any(|v| *v == Some(Reward::Zero)) {
            return bad("only action 1 can return 0");
        }
        if let Some(first_unknown) = self.least_unexplored() {
            if self.z[first_unknown..].iter().any(Option::is_some) {
                return bad("an action was explored before a lower-index one");
            }
        }
        if self.t > 1 && self.z[0].is_none() {
            return bad("agent 1 always reveals action 1");
        }
        let known = self.z.iter().filter(|v| v.is_some()).count();
        if known >= self.t && known > 0 {
            return bad("more actions revealed than agents have acted");
        }
        Ok(())
    }
}

impl fmt::Display for InformationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<")?;
        for (i, v) in self.z.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match v {
                None => f.write_str("*")?,
                Some(r) => write!(f, "{r}")?,
            }
        }
        f.write_str(">")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecommendationKind {
    /// The recommended action's value is already known.
    ExploitKnown,
    /// Unknown action, but the agent's own expected reward favors it.
    ExploitUnknown,
    /// Unknown action recommended at a cost to the agent, for information.
    Explore,
    /// The same action will be recommended to every later agent.
    Terminal,
}

impl fmt::Display for RecommendationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecommendationKind::ExploitKnown => "exploit_known",
            RecommendationKind::ExploitUnknown => "exploit_unknown",
            RecommendationKind::Explore => "explore",
            RecommendationKind::Terminal => "terminal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Recommendation {
    pub action: usize,
    pub kind: RecommendationKind,
}

impl Recommendation {
    pub fn new(action: usize, kind: RecommendationKind) -> Self {
        Self { action, kind }
    }
}

pub fn initial_state(k: usize) -> Result<InformationState, EngineError> {
    if k < 2 {
        return Err(EngineError::DegenerateK { k });
    }
    Ok(InformationState::new(vec![None; k], 1))
}

/// Any `+1` revealed, or nothing left to reveal.
pub fn is_terminal(state: &InformationState) -> bool {
    state.first_plus().is_some() || state.least_unexplored().is_none()
}

/// The optimal rule on a feasible state.
pub fn recommend(
    state: &InformationState,
    schedule: &RateSchedule,
    assignment: &ExplorerAssignment,
) -> Result<Recommendation, EngineError> {
    if state.k() != schedule.k() {
        return Err(EngineError::InfeasibleState {
            state: state.to_string(),
            reason: format!("schedule has {} actions", schedule.k()),
        });
    }
    recommend_with(state, |j| assignment.explorer(j))
}

/// Shared body of [`recommend`]; `explorer(j)` yields `f^j(y)`.
pub(crate) fn recommend_with(
    state: &InformationState,
    explorer: impl Fn(usize) -> Option<usize>,
) -> Result<Recommendation, EngineError> {
    use RecommendationKind::*;
    state.check_feasible()?;
    let t = state.t();
    if t == 1 {
        return Ok(Recommendation::new(1, ExploitUnknown));
    }
    if let Some(j) = state.first_plus() {
        return Ok(Recommendation::new(j, Terminal));
    }
    let Some(j) = state.least_unexplored() else {
        let best = state.best_known().expect("t > 1 means action 1 is known");
        return Ok(Recommendation::new(best, Terminal));
    };
    match state.get(1) {
        Some(Reward::Minus) => Ok(Recommendation::new(j, ExploitUnknown)),
        Some(Reward::Zero) => match explorer(j) {
            Some(e) if e == t => Ok(Recommendation::new(j, Explore)),
            Some(e) if e > t => Ok(Recommendation::new(1, ExploitKnown)),
            Some(e) => Err(EngineError::ExplorerMissed { j, explorer: e, t }),
            None => Ok(Recommendation::new(1, Terminal)),
        },
        _ => unreachable!("feasibility check covers unknown action 1 and plus"),
    }
}

/// Records the reward of the pulled action and advances to the next agent.
pub fn transition(
    state: &InformationState,
    action: usize,
    reward: Reward,
) -> Result<InformationState, EngineError> {
    let k = state.k();
    if action == 0 || action > k {
        return Err(EngineError::ActionOutOfRange { j: action, k });
    }
    if action > 1 && reward == Reward::Zero {
        return Err(EngineError::InvalidReward {
            action,
            got: reward,
        });
    }
    let mut next = state.clone();
    match state.get(action) {
        Some(known) if known != reward => {
            return Err(EngineError::RewardMismatch {
                action,
                known,
                got: reward,
            })
        }
        Some(_) => {}
        None => next.z[action - 1] = Some(reward),
    }
    next.t += 1;
    Ok(next)
}

/// Sequential prefix for priors where some actions `2..=m` have nonnegative
/// means, together with the instance that remains afterwards.
///
/// Agents `2..=m` are sent to actions `2..=m` in order unless a `+1` has
/// appeared. If nothing better than 0 shows up, the rest of the problem is a
/// fresh instance whose first action stands for "best of `1..=m`" and whose
/// agent `t'` is original agent `t' + m - 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositiveMeanPlan {
    /// Last action with a nonnegative mean; 1 when there is none.
    pub prefix_end: usize,
    /// Residual instance; `None` when every action is in the prefix.
    pub residual: Option<ValidatedPrior>,
    pub original: ValidatedPrior,
}

impl PositiveMeanPlan {
    pub fn is_identity(&self) -> bool {
        self.prefix_end == 1
    }

    /// Original action for residual action `j' >= 2`.
    pub fn original_action(&self, residual_j: usize) -> usize {
        residual_j + self.prefix_end - 1
    }

    /// Residual agent index for original agent `t > prefix_end`.
    pub fn residual_time(&self, t: usize) -> usize {
        t + 1 - self.prefix_end
    }
}

pub fn preprocess_positive_means(prior: &DiscretePrior) -> Result<PositiveMeanPlan, EngineError> {
    let original = validate_allowing_nonnegative_tail(prior)?;
    let k = original.k();
    let m = (2..=k)
        .filter(|&j| original.mu(j) >= 0.0)
        .max()
        .unwrap_or(1);
    if m == 1 {
        return Ok(PositiveMeanPlan {
            prefix_end: 1,
            residual: Some(original.clone()),
            original,
        });
    }
    if m == k {
        return Ok(PositiveMeanPlan {
            prefix_end: m,
            residual: None,
            original,
        });
    }
    let tail: f64 = (2..=m).map(|i| original.p_minus(i)).product();
    let zero = original.p_zero() * tail;
    let minus = original.p_minus(1) * tail;
    let residual = DiscretePrior::new(
        [1.0 - zero - minus, zero, minus],
        prior.p_plus[m - 1..].to_vec(),
    );
    Ok(PositiveMeanPlan {
        prefix_end: m,
        residual: Some(validate(&residual)?),
        original,
    })
}
