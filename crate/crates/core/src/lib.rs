//! Optimal Bayesian-incentive-compatible exploration for a planner who
//! recommends actions to a stream of myopic agents.
//!
//! Rewards are deterministic: each action's reward is drawn once from a
//! common prior and every pull of that action returns the same value. The
//! planner sees every past reward, agents see only their own recommendation,
//! and a recommendation is acceptable only if following it is each agent's
//! best response in expectation.
//!
//! * [`prior`] holds the discrete and continuous priors.
//! * [`rates`] computes the maximal exploration schedule; [`sampler`] turns
//!   it into one shared draw per episode; [`engine`] is the state machine
//!   that issues recommendations.
//! * [`partition`] covers a continuous reward on action 1.
//! * [`enumerate`] and [`verify`] check all of the above exactly at small
//!   scale, and [`sim`] runs seeded Monte-Carlo episodes.

pub mod engine;
pub mod enumerate;
pub mod numeric;
pub mod partition;
pub mod policy;
pub mod prior;
pub mod rates;
pub mod sampler;
pub mod sim;
pub mod verify;

pub use engine::{
    initial_state, is_terminal, preprocess_positive_means, recommend, transition, EngineError,
    InformationState, PositiveMeanPlan, Recommendation, RecommendationKind,
};
pub use partition::{
    compute_interval_schedule, partition_recommend, solve_omega_first, solve_omega_step,
    PartitionError, PartitionSchedule,
};
pub use policy::{
    AlwaysFirst, Decision, FullInformation, GreedyPolicy, OptimalPolicy, PlannedPolicy, Policy,
    PolicyError, RatePolicy, RateTable,
};
pub use prior::{
    mu, validate, ContinuousInstance, ContinuousPrior, DiscretePrior, PriorError, Realization,
    Reward, ValidatedPrior,
};
pub use rates::{
    a_coeff, b_coeff, compute_rate_schedule, limited_horizon_gate, total_exploration_mass,
    HorizonMode, RateError, RateSchedule,
};
pub use sampler::{assign, explorer_index, recommendation_draw, ExplorerAssignment, SamplerError};
pub use sim::{
    compare_policies, estimate_welfare, explorer_frequencies, replay, run_episode,
    write_comparison_csv, ComparisonRow, SimError, Trajectory, WelfareEstimate,
};
