use serde::Serialize;

use crate::engine::is_terminal;
use crate::enumerate::enumerate;
use crate::policy::Policy;
use crate::prior::ValidatedPrior;

use super::VerifyError;

/// Probability differences below this are treated as ties.
pub const DOMINANCE_TOLERANCE: f64 = 1e-12;

/// `known[t][j]`: probability that action `j` is revealed before agent `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RevealProfile {
    pub horizon: usize,
    pub k: usize,
    pub known: Vec<Vec<f64>>,
}

pub fn reveal_profile<P: Policy + ?Sized>(
    policy: &P,
    prior: &ValidatedPrior,
    horizon: usize,
) -> Result<RevealProfile, VerifyError> {
    let k = prior.k();
    let mut known = vec![vec![0.0; k + 1]; horizon + 1];
    enumerate(policy, prior, horizon, |s| {
        for j in 1..=k {
            if s.state.is_known(j) {
                known[s.t][j] += s.mass;
            }
        }
    })?;
    Ok(RevealProfile { horizon, k, known })
}

/// `out[t]`: probability that the state before agent `t` is terminal.
pub fn terminal_profile<P: Policy + ?Sized>(
    policy: &P,
    prior: &ValidatedPrior,
    horizon: usize,
) -> Result<Vec<f64>, VerifyError> {
    let mut out = vec![0.0; horizon + 1];
    enumerate(policy, prior, horizon, |s| {
        if is_terminal(s.state) {
            out[s.t] += s.mass;
        }
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Dominance {
    /// The first policy reveals every action weakly earlier, strictly somewhere.
    ADominates,
    BDominates,
    Equal,
    Incomparable,
}

/// Componentwise comparison of reveal probabilities over `t <= horizon`.
pub fn stochastic_dominance_compare<A, B>(
    a: &A,
    b: &B,
    prior: &ValidatedPrior,
    horizon: usize,
) -> Result<Dominance, VerifyError>
where
    A: Policy + ?Sized,
    B: Policy + ?Sized,
{
    let pa = reveal_profile(a, prior, horizon)?;
    let pb = reveal_profile(b, prior, horizon)?;
    let (mut a_ahead, mut b_ahead) = (false, false);
    for t in 1..=horizon {
        for j in 1..=prior.k() {
            let d = pa.known[t][j] - pb.known[t][j];
            if d > DOMINANCE_TOLERANCE {
                a_ahead = true;
            } else if d < -DOMINANCE_TOLERANCE {
                b_ahead = true;
            }
        }
    }
    Ok(match (a_ahead, b_ahead) {
        (true, false) => Dominance::ADominates,
        (false, true) => Dominance::BDominates,
        (false, false) => Dominance::Equal,
        (true, true) => Dominance::Incomparable,
    })
}
