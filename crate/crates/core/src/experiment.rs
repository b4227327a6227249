//! Desk-scale experiments: oracle cross-checks, per-iteration convergence
//! against the empirical optimum, and the sample-size sweep.

use std::io;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use crate::envelope::{envelope_value_iteration, exact_evi, fixed_step_evi, initial_moq, model_based_evi, moq_distance, StopRule};
use crate::error::{EnvelopeError, OracleError};
use crate::generate::random_momdp;
use crate::momdp::{load_momdp, TabularMomdp};
use crate::moq::{MoqShape, MoqTable};
use crate::oracles::{assemble_reference_moq, scalar_value_iteration};
use crate::preference::{make_simplex_grid, PreferenceSet};
use crate::sampling::{build_empirical_model, TabularSimulator};
use crate::schedule::EviSchedule;

/// Tolerance used whenever an experiment needs a converged optimum.
pub const REFERENCE_TOLERANCE: f64 = 1e-12;

pub const DEFAULT_STATES: usize = 5;
pub const DEFAULT_ACTIONS: usize = 3;
pub const DEFAULT_OBJECTIVES: usize = 2;
pub const DEFAULT_GAMMA: f64 = 0.9;
pub const DEFAULT_GRID_K: usize = 10;
pub const DEFAULT_INSTANCE_SEED: u64 = 0;

/// The instance the sweeps run on when none is given.
pub fn default_instance() -> TabularMomdp {
    random_momdp(DEFAULT_STATES, DEFAULT_ACTIONS, DEFAULT_OBJECTIVES, DEFAULT_GAMMA, DEFAULT_INSTANCE_SEED)
}

#[derive(Clone, Debug, PartialEq)]
pub enum InstanceSource {
    File(PathBuf),
    Random { states: usize, actions: usize, objectives: usize, gamma: f64, seed: u64 },
}

impl InstanceSource {
    pub fn load(&self) -> Result<TabularMomdp, ExperimentError> {
        match self {
            InstanceSource::File(path) => Ok(load_momdp(path)?),
            InstanceSource::Random { states, actions, objectives, gamma, seed } => {
                if *states == 0 || *actions == 0 || *objectives == 0 || !(0.0..1.0).contains(gamma) {
                    return Err(ExperimentError::Config("random instance needs positive sizes and gamma in [0,1)".into()));
                }
                Ok(random_momdp(*states, *actions, *objectives, *gamma, *seed))
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Momdp(#[from] crate::error::MomdpError),
    #[error(transparent)]
    Preference(#[from] crate::error::PreferenceError),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Sampling(#[from] crate::error::SamplingError),
    #[error(transparent)]
    Shape(#[from] crate::error::ShapeError),
    #[error("all median distances are below float resolution; slope is undefined")]
    DegenerateFit,
}

/// Simplex grid of resolution `k` matching the instance's objective count.
pub fn preference_grid(momdp: &TabularMomdp, k: usize) -> Result<PreferenceSet, ExperimentError> {
    Ok(make_simplex_grid(momdp.num_objectives(), k)?)
}

/// Largest gap between the envelope solution and per-preference scalar
/// value iteration, over every `(s, a, w)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleGap {
    pub max_gap: f64,
    pub iterations: usize,
}

pub fn oracle_gap(momdp: &TabularMomdp, prefs: &PreferenceSet, tolerance: f64) -> Result<OracleGap, ExperimentError> {
    let (q, trace) = exact_evi(momdp, prefs, StopRule::new(momdp.gamma(), tolerance))?;
    Ok(OracleGap { max_gap: scalarized_gap(&q, momdp, prefs, tolerance)?, iterations: trace.len() })
}

/// `max_{s,a,w} |w^T Q(s,a;w) - Q*_w(s,a)|` with `Q*_w` from scalar VI.
pub fn scalarized_gap(q: &MoqTable, momdp: &TabularMomdp, prefs: &PreferenceSet, tolerance: f64) -> Result<f64, ExperimentError> {
    let mut gap: f64 = 0.0;
    for (w, weight) in prefs.iter().enumerate() {
        let scalar = scalar_value_iteration(momdp, weight, tolerance)?;
        for s in 0..momdp.num_states() {
            for a in 0..momdp.num_actions() {
                gap = gap.max((q.scalarized(prefs, s, a, w) - scalar.get(s, a)).abs());
            }
        }
    }
    Ok(gap)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub seed: u64,
    pub t: usize,
    pub distance: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceResult {
    pub rows: Vec<ConvergenceRow>,
    /// Rows (by index) where `distance > bound + 1e-9`.
    pub bound_violations: Vec<usize>,
    /// Rows (by index) where `distance > gamma * previous + 1e-10`.
    pub contraction_violations: Vec<usize>,
}

impl ConvergenceResult {
    pub fn passed(&self) -> bool {
        self.bound_violations.is_empty() && self.contraction_violations.is_empty()
    }

    /// CSV with header `seed,t,distance,bound`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["seed", "t", "distance", "bound"])?;
        for r in &self.rows {
            wtr.write_record([r.seed.to_string(), r.t.to_string(), r.distance.to_string(), r.bound.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// For each seed: sample the empirical model, solve it to
/// [`REFERENCE_TOLERANCE`], then run `iterations` empirical backups and
/// record `d(Q_t, Q^_*)` next to `gamma^t/(1-gamma)` for `t = 0..=T`.
pub fn convergence_experiment(
    momdp: &TabularMomdp,
    prefs: &PreferenceSet,
    samples_per_pair: u64,
    iterations: usize,
    seeds: &[u64],
) -> Result<ConvergenceResult, ExperimentError> {
    if seeds.is_empty() {
        return Err(ExperimentError::Config("seed list is empty".into()));
    }
    let gamma = momdp.gamma();
    let per_seed: Vec<Vec<ConvergenceRow>> = seeds
        .par_iter()
        .map(|&seed| {
            let sim = TabularSimulator::of(momdp);
            let empirical = build_empirical_model(momdp, &sim, samples_per_pair, seed)?;
            let (q_hat_star, _) = envelope_value_iteration(
                momdp,
                empirical.p_hat(),
                prefs,
                StopRule::new(gamma, REFERENCE_TOLERANCE),
                None,
            )?;
            let q0 = initial_moq(MoqShape::of(momdp, prefs), gamma);
            let mut rows = vec![ConvergenceRow {
                seed,
                t: 0,
                distance: moq_distance(&q0, &q_hat_star, prefs)?,
                bound: 1.0 / (1.0 - gamma),
            }];
            let (_, trace) = fixed_step_evi(momdp, empirical.p_hat(), prefs, iterations, Some(&q_hat_star))?;
            rows.extend(trace.rows.iter().map(|r| ConvergenceRow {
                seed,
                t: r.t,
                distance: r.distance,
                bound: gamma.powi(r.t as i32) / (1.0 - gamma),
            }));
            Ok(rows)
        })
        .collect::<Result<_, ExperimentError>>()?;

    let rows: Vec<ConvergenceRow> = per_seed.into_iter().flatten().collect();
    let mut bound_violations = Vec::new();
    let mut contraction_violations = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if r.distance > r.bound + 1e-9 {
            bound_violations.push(i);
        }
        if r.t > 0 && r.distance > gamma * rows[i - 1].distance + 1e-10 {
            contraction_violations.push(i);
        }
    }
    Ok(ConvergenceResult { rows, bound_violations, contraction_violations })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub samples_per_pair: u64,
    pub seed: u64,
    pub distance: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// `(N, median distance)` in sweep order.
    pub medians: Vec<(u64, f64)>,
    /// Least-squares slope of `ln median` against `ln N`.
    pub slope: f64,
}

impl SweepResult {
    /// CSV with header `n,seed,distance`, plus `wall_time_s` when
    /// `with_timing` is set (timings make the file nondeterministic).
    pub fn write_csv<W: io::Write>(&self, out: W, with_timing: bool) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["n", "seed", "distance"];
        if with_timing {
            header.push("wall_time_s");
        }
        wtr.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.samples_per_pair.to_string(), r.seed.to_string(), r.distance.to_string()];
            if with_timing {
                rec.push(r.wall_time_s.to_string());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// CSV with header `n,median_distance`.
    pub fn write_summary_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["n", "median_distance"])?;
        for (n, d) in &self.medians {
            wtr.write_record([n.to_string(), d.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// True when the medians never increase with `N`.
    pub fn medians_monotone(&self) -> bool {
        self.medians.windows(2).all(|w| w[1].1 <= w[0].1)
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// For every `(N, seed)`: run model-based EVI with `N` samples per pair and
/// `schedule.iterations` backups and measure `d(Q_T, Q*)` against the
/// reference MOQ of the true model.
pub fn sample_sweep(
    momdp: &TabularMomdp,
    prefs: &PreferenceSet,
    schedule: &EviSchedule,
    sample_sizes: &[u64],
    seeds: &[u64],
) -> Result<SweepResult, ExperimentError> {
    if sample_sizes.len() < 2 || seeds.is_empty() {
        return Err(ExperimentError::Config("need at least two sample sizes and one seed".into()));
    }
    let reference = assemble_reference_moq(momdp, prefs, REFERENCE_TOLERANCE)?;
    let cells: Vec<(u64, u64)> = sample_sizes.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(n, seed)| {
            let start = Instant::now();
            let sim = TabularSimulator::of(momdp);
            let sched = schedule.with_overrides(Some(n), None);
            let (q, _, _) = model_based_evi(momdp, &sim, &sched, prefs, seed)?;
            let distance = moq_distance(&q, &reference, prefs)?;
            Ok(SweepRow { samples_per_pair: n, seed, distance, wall_time_s: start.elapsed().as_secs_f64() })
        })
        .collect::<Result<_, ExperimentError>>()?;

    let medians: Vec<(u64, f64)> = sample_sizes
        .iter()
        .map(|&n| {
            let mut d: Vec<f64> = rows.iter().filter(|r| r.samples_per_pair == n).map(|r| r.distance).collect();
            (n, median(&mut d))
        })
        .collect();
    if medians.iter().all(|&(_, d)| d <= f64::EPSILON) {
        return Err(ExperimentError::DegenerateFit);
    }
    let x: Vec<f64> = medians.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let y: Vec<f64> = medians.iter().map(|&(_, d)| d.max(f64::MIN_POSITIVE).ln()).collect();
    Ok(SweepResult { slope: fit_slope(&x, &y), rows, medians })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_slope_helpers() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        assert!((fit_slope(&x, &y) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn bound_at_t22_for_gamma_0_9() {
        let bound = 0.9f64.powi(22) / 0.1;
        assert!((bound - 0.984770902).abs() < 1e-8);
    }

    #[test]
    fn empty_seed_list_is_a_config_error() {
        let m = random_momdp(2, 2, 2, 0.5, 0);
        let prefs = make_simplex_grid(2, 2).unwrap();
        assert!(matches!(convergence_experiment(&m, &prefs, 10, 5, &[]), Err(ExperimentError::Config(_))));
    }
}
