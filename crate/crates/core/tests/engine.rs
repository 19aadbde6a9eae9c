mod common;

use bic_explore::prior::validate_allowing_nonnegative_tail;
use bic_explore::verify::bic_audit;
use bic_explore::{
    assign, compute_rate_schedule, initial_state, is_terminal, preprocess_positive_means,
    recommend, transition, DiscretePrior, EngineError, HorizonMode, InformationState,
    PlannedPolicy, RecommendationKind, Reward,
};
use common::prior_a;

use Reward::{Minus, Plus, Zero};

fn state(z: &[Option<Reward>], t: usize) -> InformationState {
    InformationState::new(z.to_vec(), t)
}

/// Walks the optimal policy on a fixed reward vector and shared draw.
fn walk(x: &[Reward], y: f64, horizon: usize) -> Vec<(usize, RecommendationKind)> {
    let prior = prior_a();
    let schedule = compute_rate_schedule(&prior, HorizonMode::Unlimited).unwrap();
    let a = assign(&schedule, y).unwrap();
    let mut s = initial_state(x.len()).unwrap();
    let mut out = Vec::new();
    for _ in 0..horizon {
        let r = recommend(&s, &schedule, &a).unwrap();
        out.push((r.action, r.kind));
        s = transition(&s, r.action, x[r.action - 1]).unwrap();
    }
    out
}

#[test]
fn first_agent_takes_action_one() {
    let rows = walk(&[Zero, Minus, Plus], 0.5, 1);
    assert_eq!(rows, vec![(1, RecommendationKind::ExploitUnknown)]);
}

#[test]
fn plus_on_action_one_is_terminal() {
    let rows = walk(&[Plus, Minus, Minus], 0.3, 12);
    assert!(rows[1..]
        .iter()
        .all(|&r| r == (1, RecommendationKind::Terminal)));
}

#[test]
fn minus_on_action_one_walks_tail_in_order() {
    let rows = walk(&[Minus, Minus, Plus], 0.9, 6);
    let actions: Vec<usize> = rows.iter().map(|r| r.0).collect();
    assert_eq!(actions, vec![1, 2, 3, 3, 3, 3]);
}

#[test]
fn zero_on_action_one_explores_at_assigned_agents() {
    // y = 0.5: action 2 explored by agent 3, action 3 by a later agent.
    let prior = prior_a();
    let schedule = compute_rate_schedule(&prior, HorizonMode::Unlimited).unwrap();
    let a = assign(&schedule, 0.5).unwrap();
    let e3 = a.explorer(3).unwrap();
    let rows = walk(&[Zero, Minus, Plus], 0.5, 14);
    assert_eq!(rows[2], (2, RecommendationKind::Explore));
    assert_eq!(rows[e3 - 1], (3, RecommendationKind::Explore));
    for (i, r) in rows.iter().enumerate() {
        let t = i + 1;
        if t > e3 {
            assert_eq!(*r, (3, RecommendationKind::Terminal));
        } else if t != 3 && t != e3 && t > 1 {
            assert_eq!(*r, (1, RecommendationKind::ExploitKnown));
        }
    }
}

#[test]
fn all_negative_ends_on_action_one() {
    let rows = walk(&[Zero, Minus, Minus], 0.5, 14);
    let last = rows.last().unwrap();
    assert_eq!(*last, (1, RecommendationKind::Terminal));
}

#[test]
fn infeasible_states_are_rejected() {
    let prior = prior_a();
    let schedule = compute_rate_schedule(&prior, HorizonMode::Unlimited).unwrap();
    let a = assign(&schedule, 0.5).unwrap();
    // Action 3 explored while action 2 is still unknown.
    let s = state(&[Some(Zero), None, Some(Minus)], 5);
    assert!(matches!(
        recommend(&s, &schedule, &a),
        Err(EngineError::InfeasibleState { .. })
    ));
    // Tail action reported as zero.
    assert!(matches!(
        transition(&state(&[Some(Zero), None, None], 2), 2, Zero),
        Err(EngineError::InvalidReward { .. })
    ));
}

#[test]
fn transition_rejects_contradicting_reward() {
    let s = state(&[Some(Zero), Some(Minus), None], 4);
    assert!(matches!(
        transition(&s, 2, Plus),
        Err(EngineError::RewardMismatch { .. })
    ));
    let next = transition(&s, 2, Minus).unwrap();
    assert_eq!(next.t(), 5);
}

#[test]
fn terminal_detection() {
    assert!(is_terminal(&state(&[Some(Zero), Some(Plus), None], 3)));
    assert!(is_terminal(&state(
        &[Some(Zero), Some(Minus), Some(Minus)],
        3
    )));
    assert!(!is_terminal(&state(&[Some(Zero), Some(Minus), None], 3)));
    assert_eq!(
        state(&[Some(Zero), Some(Minus), None], 3).to_string(),
        "<0,-1,*>"
    );
}

#[test]
fn degenerate_k_is_rejected() {
    assert!(matches!(
        initial_state(1),
        Err(EngineError::DegenerateK { k: 1 })
    ));
}

#[test]
fn nonnegative_tail_means_are_explored_first() {
    // mu_2 = 0.2 >= 0 > mu_3 > mu_4.
    let raw = DiscretePrior::new([0.5, 0.3, 0.2], vec![0.6, 0.3, 0.2]);
    let plan = preprocess_positive_means(&raw).unwrap();
    assert_eq!(plan.prefix_end, 2);
    assert_eq!(plan.original_action(2), 3);
    assert_eq!(plan.residual_time(3), 2);
    let policy = PlannedPolicy::new(&raw, HorizonMode::Unlimited).unwrap();
    let prior = validate_allowing_nonnegative_tail(&raw).unwrap();
    let report = bic_audit(&policy, &prior, 16, 1e-9).unwrap();
    assert!(report.pass, "{}", report.to_json());
}

#[test]
fn identity_plan_for_negative_tails() {
    let raw = DiscretePrior::new([0.4, 0.3, 0.3], vec![0.1, 0.05]);
    let plan = preprocess_positive_means(&raw).unwrap();
    assert!(plan.is_identity());
}
