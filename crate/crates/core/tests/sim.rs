mod common;

use bic_explore::enumerate::welfare_exact;
use bic_explore::sim::{run_episode_indexed, THREADS_ENV};
use bic_explore::{
    compare_policies, estimate_welfare, replay, run_episode, write_comparison_csv, AlwaysFirst,
    FullInformation, GreedyPolicy, HorizonMode, OptimalPolicy, Policy, RecommendationKind, Reward,
    SimError, Trajectory,
};
use common::prior_a;

use Reward::{Minus, Plus, Zero};

fn optimal() -> OptimalPolicy {
    OptimalPolicy::new(&prior_a(), HorizonMode::Unlimited).unwrap()
}

/// First episode of seed 0 whose reward vector is `x`.
fn find_episode(policy: &OptimalPolicy, x: &[Reward], horizon: usize) -> Trajectory {
    (0..10_000)
        .map(|e| run_episode_indexed(policy, &prior_a(), horizon, 0, e).unwrap())
        .find(|tr| tr.realization.rewards() == x)
        .expect("reward vector drawn within 10000 episodes")
}

#[test]
fn replay_is_bit_exact() {
    let policy = optimal();
    let prior = prior_a();
    for seed in 0..20 {
        let tr = run_episode(&policy, &prior, 15, seed).unwrap();
        assert_eq!(replay(&policy, &prior, &tr).unwrap(), tr);
    }
}

#[test]
fn plus_on_first_action_stays_there() {
    let policy = optimal();
    let tr = find_episode(&policy, &[Plus, Minus, Minus], 12);
    assert!(tr.records.iter().all(|r| r.action == 1));
    assert_eq!(tr.welfare, 12.0);
}

#[test]
fn plus_on_third_action_is_kept_after_discovery() {
    let policy = optimal();
    let tr = find_episode(&policy, &[Zero, Minus, Plus], 14);
    let t3 = tr
        .records
        .iter()
        .find(|r| r.kind == RecommendationKind::Explore && r.action == 3)
        .unwrap()
        .t;
    assert!(tr.records[t3..].iter().all(|r| r.action == 3));
}

#[test]
fn all_negative_tail_ends_on_first_action() {
    let policy = optimal();
    let tr = find_episode(&policy, &[Zero, Minus, Minus], 14);
    let last = tr.records.last().unwrap();
    assert_eq!((last.action, last.kind), (1, RecommendationKind::Terminal));
    assert_eq!(last.reward, 0.0);
    assert!(tr.terminal_time() <= 11);
}

#[test]
fn single_agent_welfare_is_first_mean() {
    let prior = prior_a();
    let est = estimate_welfare(&optimal(), &prior, 1, 20_000, 5).unwrap();
    assert!(est.covers(0.1), "{est:?}");
}

#[test]
fn estimate_brackets_exact_welfare() {
    let prior = prior_a();
    let policy = optimal();
    let exact = welfare_exact(&policy, &prior, 10).unwrap();
    let est = estimate_welfare(&policy, &prior, 10, 20_000, 9).unwrap();
    assert!(est.covers(exact), "{est:?} vs {exact}");
}

#[test]
fn comparison_uses_common_random_numbers() {
    let prior = prior_a();
    let opt = optimal();
    let greedy = GreedyPolicy::new(&prior);
    let full = FullInformation::new(3);
    let policies: Vec<&dyn Policy> = vec![&opt, &greedy, &full];
    let rows = compare_policies(&policies, &prior, 40, 4_000, 3).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].mean_welfare >= rows[1].mean_welfare);
    assert!(rows[0].mean_welfare <= rows[2].mean_welfare);
    let again = compare_policies(&policies, &prior, 40, 4_000, 3).unwrap();
    assert_eq!(rows, again);

    let mut csv = Vec::new();
    write_comparison_csv(&rows, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("policy,mean_welfare,ci_low,ci_high,mean_terminal_t,reps,seed\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn duplicate_policy_names_are_rejected() {
    let prior = prior_a();
    let a = AlwaysFirst::new(3);
    let policies: Vec<&dyn Policy> = vec![&a, &a];
    assert!(matches!(
        compare_policies(&policies, &prior, 5, 10, 0),
        Err(SimError::DuplicatePolicy { .. })
    ));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let prior = prior_a();
    let policy = optimal();
    let before = estimate_welfare(&policy, &prior, 12, 3_000, 17).unwrap();
    std::env::set_var(THREADS_ENV, "1");
    let single = estimate_welfare(&policy, &prior, 12, 3_000, 17).unwrap();
    std::env::remove_var(THREADS_ENV);
    assert_eq!(before, single);
}

#[test]
fn mismatched_policy_is_rejected() {
    let prior = prior_a();
    assert!(matches!(
        run_episode(&AlwaysFirst::new(4), &prior, 3, 0),
        Err(SimError::ActionCountMismatch { .. })
    ));
}
