//! Sample-count and iteration-count schedule for model-based EVI.
//!
//! The iteration count makes the optimization error `gamma^T/(1-gamma)`
//! at most `epsilon/5`. The covering radius `xi` makes the
//! preference-discretization term `2 xi m/(1-gamma)` equal `epsilon/5`.
//! The sample count is the smallest integer bringing each of the three
//! concentration terms of the model-error bound under `epsilon/5`:
//!
//! ```text
//! sqrt(4 m log(8SA/(xi delta)) / (N (1-gamma)^3))
//! (5 (gamma/(1-gamma)^2)^(4/3) m log(12SA/(xi delta)) / N)^(3/4)
//! 3 m log(24SA/(xi delta)) / ((1-gamma)^3 N)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::ScheduleError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EviSchedule {
    pub epsilon: f64,
    pub delta: f64,
    pub xi: f64,
    /// `N`: next-state samples drawn per state-action pair.
    pub samples_per_pair: u64,
    /// `T`: operator applications.
    pub iterations: usize,
}

impl EviSchedule {
    /// Replace `N` and/or `T`, keeping the accuracy parameters for reference.
    pub fn with_overrides(mut self, samples_per_pair: Option<u64>, iterations: Option<usize>) -> Self {
        if let Some(n) = samples_per_pair {
            self.samples_per_pair = n;
        }
        if let Some(t) = iterations {
            self.iterations = t;
        }
        self
    }
}

/// Lower bounds on `N` from each concentration term, before rounding up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleBounds {
    pub variance_term: f64,
    pub higher_order_term: f64,
    pub range_term: f64,
}

impl SampleBounds {
    pub fn max(&self) -> f64 {
        self.variance_term.max(self.higher_order_term).max(self.range_term)
    }
}

fn check_args(epsilon: f64, delta: f64, gamma: f64, dims: [usize; 3]) -> Result<(), ScheduleError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ScheduleError::Epsilon(epsilon));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ScheduleError::Delta(delta));
    }
    if !(gamma >= 0.0 && gamma < 1.0) {
        return Err(ScheduleError::Gamma(gamma));
    }
    if dims.contains(&0) {
        return Err(ScheduleError::Dimension);
    }
    Ok(())
}

/// `T = ceil(log(5/((1-gamma) epsilon)) / (1-gamma))`
pub fn iteration_count(epsilon: f64, gamma: f64) -> usize {
    ((5.0 / ((1.0 - gamma) * epsilon)).ln() / (1.0 - gamma)).ceil() as usize
}

/// `xi = (1-gamma) epsilon / (10 m)`
pub fn covering_radius(epsilon: f64, gamma: f64, m: usize) -> f64 {
    (1.0 - gamma) * epsilon / (10.0 * m as f64)
}

pub fn sample_bounds(
    epsilon: f64,
    delta: f64,
    m: usize,
    num_states: usize,
    num_actions: usize,
    gamma: f64,
) -> SampleBounds {
    let mf = m as f64;
    let sa = (num_states * num_actions) as f64;
    let xi = covering_radius(epsilon, gamma, m);
    let horizon3 = (1.0 - gamma).powi(3);
    let log_term = |c: f64| (c * sa / (xi * delta)).ln();
    SampleBounds {
        variance_term: 100.0 * mf * log_term(8.0) / (epsilon * epsilon * horizon3),
        higher_order_term: 5.0 * (gamma / (1.0 - gamma).powi(2)).powf(4.0 / 3.0) * mf * log_term(12.0)
            / (epsilon / 5.0).powf(4.0 / 3.0),
        range_term: 15.0 * mf * log_term(24.0) / (epsilon * horizon3),
    }
}

/// Derive `(xi, N, T)` for target accuracy `epsilon` and failure
/// probability `delta`.
pub fn compute_schedule(
    epsilon: f64,
    delta: f64,
    m: usize,
    num_states: usize,
    num_actions: usize,
    gamma: f64,
) -> Result<EviSchedule, ScheduleError> {
    check_args(epsilon, delta, gamma, [m, num_states, num_actions])?;
    let bound = sample_bounds(epsilon, delta, m, num_states, num_actions, gamma).max().ceil();
    if !(bound <= u64::MAX as f64) {
        return Err(ScheduleError::Overflow(bound));
    }
    Ok(EviSchedule {
        epsilon,
        delta,
        xi: covering_radius(epsilon, gamma, m),
        samples_per_pair: (bound as u64).max(1),
        iterations: iteration_count(epsilon, gamma).max(1),
    })
}
