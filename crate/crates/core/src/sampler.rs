//! Correlated choice of explorers.
//!
//! One uniform draw `y` in `(0, 1]` fixes, for every action `j`, the agent
//! `f^j(y)` that explores it: the agent whose cell
//! `(prefix_t, prefix_{t+1}]` of cumulative rates contains `y * rho_j`.
//! Because the cumulative rates of action `j + 1` always lag behind those of
//! action `j`, the explorers come out strictly increasing in `j`.

use serde::Serialize;
use thiserror::Error;

use crate::rates::RateSchedule;

/// Adjacent y-breakpoints closer than this are merged.
pub const BREAKPOINT_MERGE: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("y = {y} is outside (0, 1]")]
    YOutOfRange { y: f64 },
    #[error("action index {j} out of range 2..={k}")]
    ActionOutOfRange { j: usize, k: usize },
}

/// Explorers of every action for one value of `y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplorerAssignment {
    y: f64,
    /// `explorers[j - 2]` for action `j`.
    explorers: Vec<Option<usize>>,
}

impl ExplorerAssignment {
    pub fn y(&self) -> f64 {
        self.y
    }

    /// `f^j(y)`; `None` if a limited-horizon schedule has no agent for this `y`.
    pub fn explorer(&self, j: usize) -> Option<usize> {
        if j < 2 {
            return None;
        }
        self.explorers.get(j - 2).copied().flatten()
    }
}

fn check_y(y: f64) -> Result<(), SamplerError> {
    if !(y > 0.0 && y <= 1.0) {
        return Err(SamplerError::YOutOfRange { y });
    }
    Ok(())
}

/// The unique `t` with `prefix_t < y * rho_j <= prefix_{t+1}`.
///
/// The target always uses the untruncated `rho_j`. In limited mode the gated
/// schedule covers only part of that range and the remaining `y` values get
/// no explorer, which keeps each recommendation's conditional odds equal to
/// those of the unlimited schedule.
pub fn explorer_index(
    schedule: &RateSchedule,
    j: usize,
    y: f64,
) -> Result<Option<usize>, SamplerError> {
    check_y(y)?;
    if j < 2 || j > schedule.k() {
        return Err(SamplerError::ActionOutOfRange { j, k: schedule.k() });
    }
    Ok(locate(schedule, j, y))
}

fn locate(schedule: &RateSchedule, j: usize, y: f64) -> Option<usize> {
    let target = y * schedule.rho(j);
    let rows = schedule.rows_computed(j);
    // Cumulative through t is prefix(j, t + 1); find the first t reaching target.
    let (mut lo, mut hi) = (1usize, rows + 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if schedule.prefix(j, mid + 1) < target {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    if lo <= rows {
        return Some(lo);
    }
    if schedule.is_limited() {
        None
    } else {
        // Rounding in the summed rates can leave the top sliver uncovered.
        schedule.last_explorer(j)
    }
}

/// Explorers of all actions at once.
pub fn assign(schedule: &RateSchedule, y: f64) -> Result<ExplorerAssignment, SamplerError> {
    check_y(y)?;
    let explorers = (2..=schedule.k()).map(|j| locate(schedule, j, y)).collect();
    Ok(ExplorerAssignment { y, explorers })
}

/// `j` if agent `t` is the explorer of `j` under `y`, otherwise action 1.
pub fn recommendation_draw(
    schedule: &RateSchedule,
    j: usize,
    t: usize,
    y: f64,
) -> Result<usize, SamplerError> {
    Ok(if explorer_index(schedule, j, y)? == Some(t) {
        j
    } else {
        1
    })
}

/// A maximal interval of `y` on which every explorer is constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YCell {
    pub lo: f64,
    pub hi: f64,
}

impl YCell {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Partition of `(0, 1]` by every `prefix_t^j / rho_j` breakpoint.
pub fn y_cells(schedule: &RateSchedule) -> Vec<YCell> {
    let mut points = vec![0.0, 1.0];
    for j in 2..=schedule.k() {
        let rho = schedule.rho(j);
        for t in 2..=schedule.rows_computed(j) + 1 {
            let v = schedule.prefix(j, t) / rho;
            if v > 0.0 && v < 1.0 {
                points.push(v);
            }
        }
    }
    points.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::with_capacity(points.len());
    for p in points {
        match merged.last() {
            Some(&last) if p - last <= BREAKPOINT_MERGE => {
                if p == 1.0 {
                    *merged.last_mut().unwrap() = 1.0;
                }
            }
            _ => merged.push(p),
        }
    }
    merged
        .windows(2)
        .map(|w| YCell { lo: w[0], hi: w[1] })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::DiscretePrior;
    use crate::rates::{compute_rate_schedule, HorizonMode};

    fn schedule() -> RateSchedule {
        let p = DiscretePrior::new([0.4, 0.3, 0.3], vec![0.1, 0.05])
            .validate()
            .unwrap();
        compute_rate_schedule(&p, HorizonMode::Unlimited).unwrap()
    }

    #[test]
    fn explorer_examples() {
        let s = schedule();
        assert_eq!(explorer_index(&s, 2, 0.2).unwrap(), Some(2));
        assert_eq!(explorer_index(&s, 2, 0.5).unwrap(), Some(3));
        assert_eq!(explorer_index(&s, 2, 1.0).unwrap(), Some(5));
        assert_eq!(recommendation_draw(&s, 2, 2, 0.2).unwrap(), 2);
        assert_eq!(recommendation_draw(&s, 2, 3, 0.2).unwrap(), 1);
        let t3 = explorer_index(&s, 3, 0.2).unwrap().unwrap();
        assert!(t3 > 2);
        assert_eq!(recommendation_draw(&s, 3, t3, 0.2).unwrap(), 3);
    }

    #[test]
    fn rejects_bad_y() {
        let s = schedule();
        for y in [0.0, -0.1, 1.0000001, f64::NAN] {
            assert!(matches!(
                explorer_index(&s, 2, y),
                Err(SamplerError::YOutOfRange { .. })
            ));
        }
    }

    #[test]
    fn cells_cover_unit_interval() {
        let cells = y_cells(&schedule());
        assert_eq!(cells[0].lo, 0.0);
        assert_eq!(cells.last().unwrap().hi, 1.0);
        let total: f64 = cells.iter().map(YCell::width).sum();
        assert!((total - 1.0).abs() < 1e-15);
        for w in cells.windows(2) {
            assert_eq!(w[0].hi, w[1].lo);
        }
    }
}
