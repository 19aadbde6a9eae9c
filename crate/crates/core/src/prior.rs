//! Priors over action rewards.
//!
//! Actions are numbered `1..=k`. Action 1 is the a priori best action; in the
//! discrete setting its reward lives on `{-1, 0, +1}`, in the continuous
//! setting on `[-1, 1]`. Every other action `j >= 2` is a two-point `{-1, +1}`
//! variable with `Pr[X_j = +1] = p_j`.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{adaptive_integrate, QuadratureError};

/// Probabilities must sum to one within this tolerance. No renormalization.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-12;

/// Absolute tolerance used by generic-cdf partial expectations.
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriorError {
    #[error("the model needs at least two actions, got k = {k}")]
    DegenerateK { k: usize },
    #[error("expected {expected} tail probabilities for k actions, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("probability {what} = {value} is out of range")]
    ProbabilityOutOfRange { what: String, value: f64 },
    #[error("action {action} has zero support where the model requires mass")]
    ZeroSupport { action: usize },
    #[error("means must be strictly decreasing: mu_{prev} = {mu_prev}, mu_{action} = {mu}")]
    NonStrictOrdering {
        prev: usize,
        action: usize,
        mu_prev: f64,
        mu: f64,
    },
    #[error("action {action} has nonnegative mean {mu}; route the prior through preprocessing")]
    PositiveTailMean { action: usize, mu: f64 },
    #[error("action index {j} out of range 1..={k}")]
    ActionOutOfRange { j: usize, k: usize },
    #[error("invalid continuous distribution: {0}")]
    InvalidContinuous(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// A realized reward value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Reward {
    Minus,
    Zero,
    Plus,
}

impl Reward {
    pub fn value(self) -> f64 {
        match self {
            Reward::Minus => -1.0,
            Reward::Zero => 0.0,
            Reward::Plus => 1.0,
        }
    }
}

impl fmt::Display for Reward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reward::Minus => f.write_str("-1"),
            Reward::Zero => f.write_str("0"),
            Reward::Plus => f.write_str("1"),
        }
    }
}

/// One draw of every action's reward, `rewards[j - 1]` for action `j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Realization {
    rewards: Vec<Reward>,
}

impl Realization {
    pub fn new(rewards: Vec<Reward>) -> Self {
        Self { rewards }
    }

    pub fn k(&self) -> usize {
        self.rewards.len()
    }

    /// Reward of action `j` (1-based).
    pub fn reward(&self, j: usize) -> Reward {
        self.rewards[j - 1]
    }

    pub fn value(&self, j: usize) -> f64 {
        self.reward(j).value()
    }

    pub fn rewards(&self) -> &[Reward] {
        &self.rewards
    }

    /// Best realized value, ties to the lowest index.
    pub fn best_action(&self) -> usize {
        let mut best = 1;
        for j in 2..=self.k() {
            if self.value(j) > self.value(best) {
                best = j;
            }
        }
        best
    }
}

impl fmt::Display for Realization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, r) in self.rewards.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{r}")?;
        }
        f.write_str(")")
    }
}

/// Raw discrete prior as supplied by a caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePrior {
    pub k: usize,
    pub p1_plus: f64,
    pub p1_zero: f64,
    pub p1_minus: f64,
    /// `p_plus[j - 2] = Pr[X_j = +1]` for `j = 2..=k`.
    pub p_plus: Vec<f64>,
}

impl DiscretePrior {
    pub fn new(p1: [f64; 3], p_plus: Vec<f64>) -> Self {
        Self {
            k: p_plus.len() + 1,
            p1_plus: p1[0],
            p1_zero: p1[1],
            p1_minus: p1[2],
            p_plus,
        }
    }

    /// Validates the core-algorithm assumptions, including negative tail means.
    pub fn validate(&self) -> Result<ValidatedPrior, PriorError> {
        validate(self)
    }
}

/// Expected reward of action `j` computed directly from the raw prior.
pub fn mu(prior: &DiscretePrior, j: usize) -> Result<f64, PriorError> {
    if j == 0 || j > prior.k {
        return Err(PriorError::ActionOutOfRange { j, k: prior.k });
    }
    if j == 1 {
        Ok(prior.p1_plus - prior.p1_minus)
    } else {
        let p = *prior
            .p_plus
            .get(j - 2)
            .ok_or(PriorError::ActionOutOfRange { j, k: prior.k })?;
        Ok(2.0 * p - 1.0)
    }
}

/// Validated discrete prior with cached means and failure probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedPrior {
    prior: DiscretePrior,
    mu: Vec<f64>,
    p_minus: Vec<f64>,
}

/// Strict validation: rejects priors with some `mu_j >= 0` for `j >= 2`.
pub fn validate(prior: &DiscretePrior) -> Result<ValidatedPrior, PriorError> {
    let v = validate_allowing_nonnegative_tail(prior)?;
    if let Some(j) = v.first_nonnegative_tail() {
        return Err(PriorError::PositiveTailMean {
            action: j,
            mu: v.mu(j),
        });
    }
    Ok(v)
}

/// Validation that accepts nonnegative tail means (input to preprocessing).
pub fn validate_allowing_nonnegative_tail(
    prior: &DiscretePrior,
) -> Result<ValidatedPrior, PriorError> {
    if prior.k < 2 {
        return Err(PriorError::DegenerateK { k: prior.k });
    }
    if prior.p_plus.len() != prior.k - 1 {
        return Err(PriorError::LengthMismatch {
            expected: prior.k - 1,
            got: prior.p_plus.len(),
        });
    }
    for (what, value) in [
        ("p1_plus", prior.p1_plus),
        ("p1_zero", prior.p1_zero),
        ("p1_minus", prior.p1_minus),
    ] {
        check_unit(what.to_string(), value)?;
    }
    let sum = prior.p1_plus + prior.p1_zero + prior.p1_minus;
    if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
        return Err(PriorError::ProbabilityOutOfRange {
            what: "p1_plus + p1_zero + p1_minus".into(),
            value: sum,
        });
    }
    if prior.p1_zero == 0.0 {
        return Err(PriorError::ZeroSupport { action: 1 });
    }
    for (idx, &p) in prior.p_plus.iter().enumerate() {
        let j = idx + 2;
        check_unit(format!("p_{j}"), p)?;
        if p == 0.0 {
            return Err(PriorError::ZeroSupport { action: j });
        }
        if p == 1.0 {
            return Err(PriorError::ProbabilityOutOfRange {
                what: format!("p_{j} (two-point support needs p < 1)"),
                value: p,
            });
        }
    }

    let mut mus = Vec::with_capacity(prior.k);
    let mut p_minus = Vec::with_capacity(prior.k);
    mus.push(prior.p1_plus - prior.p1_minus);
    p_minus.push(prior.p1_minus);
    for &p in &prior.p_plus {
        mus.push(2.0 * p - 1.0);
        p_minus.push(1.0 - p);
    }
    for j in 2..=prior.k {
        let (prev, cur) = (mus[j - 2], mus[j - 1]);
        if cur >= prev {
            return Err(PriorError::NonStrictOrdering {
                prev: j - 1,
                action: j,
                mu_prev: prev,
                mu: cur,
            });
        }
    }
    Ok(ValidatedPrior {
        prior: prior.clone(),
        mu: mus,
        p_minus,
    })
}

fn check_unit(what: String, value: f64) -> Result<(), PriorError> {
    if !value.is_finite() || !(0.0..=1.0).contains(&value) {
        return Err(PriorError::ProbabilityOutOfRange { what, value });
    }
    Ok(())
}

impl ValidatedPrior {
    pub fn prior(&self) -> &DiscretePrior {
        &self.prior
    }

    pub fn k(&self) -> usize {
        self.prior.k
    }

    pub fn mu(&self, j: usize) -> f64 {
        self.mu[j - 1]
    }

    pub fn means(&self) -> &[f64] {
        &self.mu
    }

    /// `Pr[X_j = +1]`; for `j = 1` this is `p1_plus`.
    pub fn p_plus(&self, j: usize) -> f64 {
        if j == 1 {
            self.prior.p1_plus
        } else {
            self.prior.p_plus[j - 2]
        }
    }

    /// `Pr[X_j = -1]`.
    pub fn p_minus(&self, j: usize) -> f64 {
        self.p_minus[j - 1]
    }

    pub fn p_zero(&self) -> f64 {
        self.prior.p1_zero
    }

    /// `prod_{i < j} Pr[X_i = -1]`, including action 1.
    pub fn minus_product(&self, j: usize) -> f64 {
        (1..j).map(|i| self.p_minus(i)).product()
    }

    /// Total exploration mass of action `j`: `p1_zero * prod_{i=2}^{j-1} Pr[X_i = -1]`.
    pub fn rho(&self, j: usize) -> f64 {
        (2..j).fold(self.p_zero(), |acc, i| acc * self.p_minus(i))
    }

    pub fn first_nonnegative_tail(&self) -> Option<usize> {
        (2..=self.k()).find(|&j| self.mu(j) >= 0.0)
    }

    /// Probability of a full realization vector.
    pub fn probability(&self, x: &Realization) -> f64 {
        let mut p = match x.reward(1) {
            Reward::Plus => self.prior.p1_plus,
            Reward::Zero => self.prior.p1_zero,
            Reward::Minus => self.prior.p1_minus,
        };
        for j in 2..=self.k() {
            p *= match x.reward(j) {
                Reward::Plus => self.p_plus(j),
                Reward::Minus => self.p_minus(j),
                Reward::Zero => 0.0,
            };
        }
        p
    }

    /// All `3 * 2^(k-1)` realization vectors with positive probability.
    pub fn realizations(&self) -> Vec<(Realization, f64)> {
        let k = self.k();
        let mut out = Vec::with_capacity(3 << (k - 1));
        for first in [Reward::Plus, Reward::Zero, Reward::Minus] {
            for bits in 0..(1usize << (k - 1)) {
                let mut rewards = Vec::with_capacity(k);
                rewards.push(first);
                for j in 2..=k {
                    let plus = bits & (1 << (j - 2)) != 0;
                    rewards.push(if plus { Reward::Plus } else { Reward::Minus });
                }
                let x = Realization::new(rewards);
                let p = self.probability(&x);
                if p > 0.0 {
                    out.push((x, p));
                }
            }
        }
        out
    }

    /// Short stable identifier derived from the probabilities' bit patterns.
    pub fn id(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |v: f64| {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(self.prior.p1_plus);
        feed(self.prior.p1_zero);
        feed(self.prior.p1_minus);
        for &p in &self.prior.p_plus {
            feed(p);
        }
        format!("{h:016x}")
    }
}

type CdfFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Shape of a continuous distribution for action 1 on `[-1, 1]`.
#[derive(Clone)]
pub enum ContinuousFamily {
    Uniform,
    /// Piecewise-linear cdf through `(x, F(x))` knots from `(-1, 0)` to `(1, 1)`.
    PiecewiseLinearCdf {
        knots: Vec<(f64, f64)>,
    },
    /// Arbitrary cdf; partial expectations fall back to adaptive quadrature.
    Custom {
        name: String,
        cdf: CdfFn,
    },
}

impl fmt::Debug for ContinuousFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContinuousFamily::Uniform => f.write_str("Uniform"),
            ContinuousFamily::PiecewiseLinearCdf { knots } => f
                .debug_struct("PiecewiseLinearCdf")
                .field("knots", knots)
                .finish(),
            ContinuousFamily::Custom { name, .. } => {
                f.debug_struct("Custom").field("name", name).finish()
            }
        }
    }
}

/// Continuous prior for action 1 with full support on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct ContinuousPrior {
    family: ContinuousFamily,
    mean: f64,
}

impl ContinuousPrior {
    pub fn uniform() -> Self {
        Self {
            family: ContinuousFamily::Uniform,
            mean: 0.0,
        }
    }

    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self, PriorError> {
        if knots.len() < 2 {
            return Err(PriorError::InvalidContinuous(
                "piecewise-linear cdf needs at least two knots".into(),
            ));
        }
        let (x0, f0) = knots[0];
        let (xn, fn_) = knots[knots.len() - 1];
        if x0 != -1.0 || f0 != 0.0 || xn != 1.0 || (fn_ - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(PriorError::InvalidContinuous(
                "knots must start at (-1, 0) and end at (1, 1)".into(),
            ));
        }
        for w in knots.windows(2) {
            if w[1].0.partial_cmp(&w[0].0) != Some(Ordering::Greater)
                || w[1].1.partial_cmp(&w[0].1) != Some(Ordering::Greater)
            {
                return Err(PriorError::InvalidContinuous(
                    "knots must be strictly increasing in x and F (full support, no flat parts)"
                        .into(),
                ));
            }
        }
        let mut prior = Self {
            family: ContinuousFamily::PiecewiseLinearCdf { knots },
            mean: 0.0,
        };
        prior.mean = prior.partial_expectation(-1.0, 1.0, 0.0);
        Ok(prior)
    }

    /// Wraps an arbitrary cdf. It is checked for boundary values and strict
    /// monotonicity on a 1001-point grid.
    pub fn custom(
        name: impl Into<String>,
        cdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, PriorError> {
        let cdf: CdfFn = Arc::new(cdf);
        if cdf(-1.0).abs() > 1e-12 || (cdf(1.0) - 1.0).abs() > 1e-12 {
            return Err(PriorError::InvalidContinuous(
                "cdf must satisfy F(-1) = 0 and F(1) = 1".into(),
            ));
        }
        let mut prev = cdf(-1.0);
        for i in 1..=1000 {
            let x = -1.0 + 2.0 * i as f64 / 1000.0;
            let v = cdf(x);
            if v.partial_cmp(&prev) != Some(Ordering::Greater) {
                return Err(PriorError::InvalidContinuous(format!(
                    "cdf is not strictly increasing near x = {x}"
                )));
            }
            prev = v;
        }
        let mut prior = Self {
            family: ContinuousFamily::Custom {
                name: name.into(),
                cdf,
            },
            mean: 0.0,
        };
        prior.mean = prior.try_partial_expectation(-1.0, 1.0, 0.0)?;
        Ok(prior)
    }

    pub fn family(&self) -> &ContinuousFamily {
        &self.family
    }

    pub fn family_tag(&self) -> &str {
        match &self.family {
            ContinuousFamily::Uniform => "uniform",
            ContinuousFamily::PiecewiseLinearCdf { .. } => "piecewise_linear",
            ContinuousFamily::Custom { name, .. } => name,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(-1.0, 1.0);
        match &self.family {
            ContinuousFamily::Uniform => (x + 1.0) / 2.0,
            ContinuousFamily::PiecewiseLinearCdf { knots } => {
                let seg = segment_of(knots, x);
                let ((xa, fa), (xb, fb)) = (knots[seg], knots[seg + 1]);
                fa + (fb - fa) * (x - xa) / (xb - xa)
            }
            ContinuousFamily::Custom { cdf, .. } => cdf(x),
        }
    }

    /// Density where it exists in closed form (builtin families only).
    pub fn density(&self, x: f64) -> Option<f64> {
        if !(-1.0..=1.0).contains(&x) {
            return Some(0.0);
        }
        match &self.family {
            ContinuousFamily::Uniform => Some(0.5),
            ContinuousFamily::PiecewiseLinearCdf { knots } => {
                let seg = segment_of(knots, x);
                let ((xa, fa), (xb, fb)) = (knots[seg], knots[seg + 1]);
                Some((fb - fa) / (xb - xa))
            }
            ContinuousFamily::Custom { .. } => None,
        }
    }

    /// Quantile function, by closed form for builtins and bisection otherwise.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.family {
            ContinuousFamily::Uniform => 2.0 * u - 1.0,
            ContinuousFamily::PiecewiseLinearCdf { knots } => {
                let seg = knots
                    .windows(2)
                    .position(|w| u <= w[1].1)
                    .unwrap_or(knots.len() - 2);
                let ((xa, fa), (xb, fb)) = (knots[seg], knots[seg + 1]);
                xa + (xb - xa) * (u - fa) / (fb - fa)
            }
            ContinuousFamily::Custom { cdf, .. } => {
                let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if cdf(mid) < u {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-15 {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// `∫_{a < X <= b} (X - c) dD_1`, with `a`, `b` clipped to `[-1, 1]`.
    ///
    /// Panics only if a custom cdf makes the quadrature diverge; use
    /// [`ContinuousPrior::try_partial_expectation`] to get the error instead.
    pub fn partial_expectation(&self, a: f64, b: f64, c: f64) -> f64 {
        self.try_partial_expectation(a, b, c)
            .expect("partial expectation quadrature failed")
    }

    pub fn try_partial_expectation(&self, a: f64, b: f64, c: f64) -> Result<f64, PriorError> {
        let a = a.clamp(-1.0, 1.0);
        let b = b.clamp(-1.0, 1.0);
        if b <= a {
            return Ok(0.0);
        }
        match &self.family {
            ContinuousFamily::Uniform => Ok(((b - c).powi(2) - (a - c).powi(2)) / 4.0),
            ContinuousFamily::PiecewiseLinearCdf { knots } => {
                let mut total = 0.0;
                for w in knots.windows(2) {
                    let ((xa, fa), (xb, fb)) = (w[0], w[1]);
                    let lo = a.max(xa);
                    let hi = b.min(xb);
                    if hi > lo {
                        let d = (fb - fa) / (xb - xa);
                        total += d * ((hi - c).powi(2) - (lo - c).powi(2)) / 2.0;
                    }
                }
                Ok(total)
            }
            ContinuousFamily::Custom { cdf, .. } => {
                // Integration by parts keeps the integrand continuous.
                let area = adaptive_integrate(|x| cdf(x), a, b, QUADRATURE_TOLERANCE)?;
                Ok((b - c) * cdf(b) - (a - c) * cdf(a) - area)
            }
        }
    }
}

fn segment_of(knots: &[(f64, f64)], x: f64) -> usize {
    knots
        .windows(2)
        .position(|w| x <= w[1].0)
        .unwrap_or(knots.len() - 2)
}

/// Continuous action 1 plus two-point tail actions `2..=k`.
#[derive(Debug, Clone)]
pub struct ContinuousInstance {
    d1: ContinuousPrior,
    p_plus: Vec<f64>,
}

impl ContinuousInstance {
    pub fn new(d1: ContinuousPrior, p_plus: Vec<f64>) -> Result<Self, PriorError> {
        let k = p_plus.len() + 1;
        if k < 2 {
            return Err(PriorError::DegenerateK { k });
        }
        let mut prev = (1, d1.mean());
        for (idx, &p) in p_plus.iter().enumerate() {
            let j = idx + 2;
            check_unit(format!("p_{j}"), p)?;
            if p == 0.0 {
                return Err(PriorError::ZeroSupport { action: j });
            }
            if p == 1.0 {
                return Err(PriorError::ProbabilityOutOfRange {
                    what: format!("p_{j} (two-point support needs p < 1)"),
                    value: p,
                });
            }
            let m = 2.0 * p - 1.0;
            if m >= prev.1 {
                return Err(PriorError::NonStrictOrdering {
                    prev: prev.0,
                    action: j,
                    mu_prev: prev.1,
                    mu: m,
                });
            }
            prev = (j, m);
        }
        Ok(Self { d1, p_plus })
    }

    pub fn d1(&self) -> &ContinuousPrior {
        &self.d1
    }

    pub fn k(&self) -> usize {
        self.p_plus.len() + 1
    }

    pub fn p_plus(&self, j: usize) -> f64 {
        self.p_plus[j - 2]
    }

    pub fn p_minus(&self, j: usize) -> f64 {
        1.0 - self.p_plus(j)
    }

    pub fn mu(&self, j: usize) -> f64 {
        if j == 1 {
            self.d1.mean()
        } else {
            2.0 * self.p_plus(j) - 1.0
        }
    }

    pub fn tail_p_plus(&self) -> &[f64] {
        &self.p_plus
    }

    /// `prod_{n=2}^{j-1} Pr[X_n = -1]`.
    pub fn tail_minus_product(&self, j: usize) -> f64 {
        (2..j).map(|n| self.p_minus(n)).product()
    }

    /// All `2^(k-1)` tail realizations `x_2..x_k` with their probabilities.
    pub fn tail_realizations(&self) -> Vec<(Vec<Reward>, f64)> {
        let m = self.p_plus.len();
        (0..(1usize << m))
            .map(|bits| {
                let mut p = 1.0;
                let rewards = (0..m)
                    .map(|i| {
                        if bits & (1 << i) != 0 {
                            p *= self.p_plus[i];
                            Reward::Plus
                        } else {
                            p *= 1.0 - self.p_plus[i];
                            Reward::Minus
                        }
                    })
                    .collect();
                (rewards, p)
            })
            .collect()
    }
}
