//! The envelope operators: optimality filter, multi-objective optimality
//! operator (true or empirical dynamics), the MOQ pseudometric, and the
//! value-iteration loops built on them.

use std::io;

use rayon::prelude::*;

use crate::error::{EnvelopeError, ShapeError};
use crate::momdp::{TabularMomdp, Transitions};
use crate::moq::{MoqShape, MoqTable};
use crate::preference::{dot, PreferenceSet};
use crate::sampling::{build_empirical_model, EmpiricalModel, GenerativeModel};
use crate::schedule::EviSchedule;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Maximizer of `w^T Q(s, a; w')` over all actions and preferences.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterResult {
    pub value: Vec<f64>,
    pub argmax_action: usize,
    pub argmax_pref: usize,
    pub scalar: f64,
}

/// Evaluate the optimality filter at state `s` for query preference `w`.
///
/// Ties go to the lexicographically smallest `(action, preference)` pair.
pub fn optimality_filter(
    q: &MoqTable,
    prefs: &PreferenceSet,
    s: usize,
    w: usize,
) -> Result<FilterResult, EnvelopeError> {
    let shape = q.shape();
    if s >= shape.num_states {
        return Err(EnvelopeError::IndexOutOfRange { what: "state", index: s, len: shape.num_states });
    }
    if w >= prefs.len() {
        return Err(EnvelopeError::IndexOutOfRange { what: "preference", index: w, len: prefs.len() });
    }
    if shape.num_prefs != prefs.len() || shape.num_objectives != prefs.dim() {
        return Err(ShapeError::Mismatch { what: "preferences", expected: shape.num_prefs, found: prefs.len() }.into());
    }
    let (argmax_action, argmax_pref, scalar) = filter_argmax(q, prefs.get(w), s);
    Ok(FilterResult {
        value: q.get(s, argmax_action, argmax_pref).to_vec(),
        argmax_action,
        argmax_pref,
        scalar,
    })
}

#[inline]
fn filter_argmax(q: &MoqTable, weight: &[f64], s: usize) -> (usize, usize, f64) {
    let shape = q.shape();
    let mut best = (0, 0, f64::NEG_INFINITY);
    for a in 0..shape.num_actions {
        for wp in 0..shape.num_prefs {
            let v = dot(weight, q.get(s, a, wp));
            if v > best.2 {
                best = (a, wp, v);
            }
        }
    }
    best
}

fn check_operator_inputs(
    q: &MoqTable,
    momdp: &TabularMomdp,
    transitions: &Transitions,
    prefs: &PreferenceSet,
) -> Result<(), ShapeError> {
    q.shape().ensure_matches(momdp, prefs)?;
    if transitions.num_states() != momdp.num_states() || transitions.num_actions() != momdp.num_actions() {
        return Err(ShapeError::Mismatch {
            what: "transition tensor",
            expected: momdp.num_states() * momdp.num_actions(),
            found: transitions.num_states() * transitions.num_actions(),
        });
    }
    Ok(())
}

/// Cell indices chosen by the filter, laid out `[s' * W + w]`.
fn filter_table(q: &MoqTable, prefs: &PreferenceSet) -> Vec<(usize, usize)> {
    let shape = q.shape();
    let mut out = Vec::with_capacity(shape.num_states * shape.num_prefs);
    for s in 0..shape.num_states {
        for w in 0..shape.num_prefs {
            let (a, wp, _) = filter_argmax(q, prefs.get(w), s);
            out.push((a, wp));
        }
    }
    out
}

/// Write `r(s,a) + gamma * sum_s' P(s'|s,a) [HQ](s'; w)` into `out`.
#[inline]
fn backup_cell(
    out: &mut [f64],
    q: &MoqTable,
    momdp: &TabularMomdp,
    row: &[f64],
    chosen: &[(usize, usize)],
    s: usize,
    a: usize,
    w: usize,
) {
    let num_prefs = q.shape().num_prefs;
    let gamma = momdp.gamma();
    let reward = momdp.reward(s, a);
    for (k, o) in out.iter_mut().enumerate() {
        let mut expect = 0.0;
        for (next, &p) in row.iter().enumerate() {
            let (ca, cw) = chosen[next * num_prefs + w];
            expect += p * q.get(next, ca, cw)[k];
        }
        *o = reward[k] + gamma * expect;
    }
}

/// One application of the multi-objective optimality operator under the
/// given dynamics. Pass `momdp.transitions()` for the exact operator or an
/// empirical estimate for the sample-based one.
pub fn apply_operator(
    q: &MoqTable,
    momdp: &TabularMomdp,
    transitions: &Transitions,
    prefs: &PreferenceSet,
) -> Result<MoqTable, EnvelopeError> {
    check_operator_inputs(q, momdp, transitions, prefs)?;
    let shape = q.shape();
    let chosen = filter_table(q, prefs);
    let mut out = MoqTable::filled(shape, 0.0);
    for s in 0..shape.num_states {
        for a in 0..shape.num_actions {
            let row = transitions.row(s, a);
            for w in 0..shape.num_prefs {
                backup_cell(out.get_mut(s, a, w), q, momdp, row, &chosen, s, a, w);
            }
        }
    }
    Ok(out)
}

/// Same as [`apply_operator`] with the filter and backups spread over the
/// rayon pool. Output is bit-identical to the sequential version.
pub fn apply_operator_parallel(
    q: &MoqTable,
    momdp: &TabularMomdp,
    transitions: &Transitions,
    prefs: &PreferenceSet,
) -> Result<MoqTable, EnvelopeError> {
    check_operator_inputs(q, momdp, transitions, prefs)?;
    let shape = q.shape();
    let chosen: Vec<(usize, usize)> = (0..shape.num_states * shape.num_prefs)
        .into_par_iter()
        .map(|i| {
            let (s, w) = (i / shape.num_prefs, i % shape.num_prefs);
            let (a, wp, _) = filter_argmax(q, prefs.get(w), s);
            (a, wp)
        })
        .collect();
    let m = shape.num_objectives;
    let mut out = MoqTable::filled(shape, 0.0);
    out.values_mut().par_chunks_mut(m).enumerate().for_each(|(cell, slot)| {
        let w = cell % shape.num_prefs;
        let sa = cell / shape.num_prefs;
        let (s, a) = (sa / shape.num_actions, sa % shape.num_actions);
        backup_cell(slot, q, momdp, transitions.row(s, a), &chosen, s, a, w);
    });
    Ok(out)
}

/// `sup_{s,a,w} |w^T Q(s,a;w) - w^T Q'(s,a;w)|` over the finite grid.
pub fn moq_distance(q: &MoqTable, qp: &MoqTable, prefs: &PreferenceSet) -> Result<f64, ShapeError> {
    let shape = q.shape();
    if shape != qp.shape() {
        return Err(ShapeError::Mismatch { what: "moq size", expected: shape.len(), found: qp.shape().len() });
    }
    if shape.num_prefs != prefs.len() || shape.num_objectives != prefs.dim() {
        return Err(ShapeError::Mismatch { what: "preferences", expected: shape.num_prefs, found: prefs.len() });
    }
    let mut d: f64 = 0.0;
    for s in 0..shape.num_states {
        for a in 0..shape.num_actions {
            for w in 0..shape.num_prefs {
                let weight = prefs.get(w);
                d = d.max((dot(weight, q.get(s, a, w)) - dot(weight, qp.get(s, a, w))).abs());
            }
        }
    }
    Ok(d)
}

/// The optimistic starting table: every component set to `1/(1-gamma)`.
pub fn initial_moq(shape: MoqShape, gamma: f64) -> MoqTable {
    MoqTable::filled(shape, 1.0 / (1.0 - gamma))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub distance: f64,
    pub max_change: f64,
}

/// One row per operator application. `distance` is measured against the
/// reference table when one was supplied, otherwise against the previous
/// iterate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationTrace {
    pub rows: Vec<TraceRow>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// CSV with header `t,distance,max_change`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["t", "distance", "max_change"])?;
        for r in &self.rows {
            wtr.write_record([r.t.to_string(), r.distance.to_string(), r.max_change.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopRule {
    pub tolerance: f64,
    pub max_iters: usize,
}

impl StopRule {
    /// Cap of `10 * ceil(1/(1-gamma)) * ceil(log(1/tolerance))` iterations.
    pub fn new(gamma: f64, tolerance: f64) -> Self {
        // 1/(1-0.9) evaluates to 10.000000000000002
        let horizon = (1.0 / (1.0 - gamma) - 1e-9).ceil();
        let logs = (1.0 / tolerance).ln().ceil().max(1.0);
        StopRule { tolerance, max_iters: (10.0 * horizon * logs) as usize }
    }

    pub fn default_for(gamma: f64) -> Self {
        StopRule::new(gamma, DEFAULT_TOLERANCE)
    }
}

enum Termination {
    Converged(StopRule),
    Fixed(usize),
}

fn iterate(
    momdp: &TabularMomdp,
    transitions: &Transitions,
    prefs: &PreferenceSet,
    termination: Termination,
    reference: Option<&MoqTable>,
) -> Result<(MoqTable, IterationTrace), EnvelopeError> {
    let shape = MoqShape::of(momdp, prefs);
    if let Some(r) = reference {
        r.shape().ensure_matches(momdp, prefs)?;
    }
    let max_iters = match termination {
        Termination::Converged(rule) => rule.max_iters,
        Termination::Fixed(t) => t,
    };
    let mut q = initial_moq(shape, momdp.gamma());
    let mut trace = IterationTrace::default();
    for t in 1..=max_iters {
        let next = apply_operator(&q, momdp, transitions, prefs)?;
        if !next.all_finite() {
            return Err(EnvelopeError::NonFinite { iteration: t });
        }
        let max_change = next.max_abs_diff(&q)?;
        let distance = match reference {
            Some(r) => moq_distance(&next, r, prefs)?,
            None => moq_distance(&next, &q, prefs)?,
        };
        trace.rows.push(TraceRow { t, distance, max_change });
        q = next;
        if let Termination::Converged(rule) = termination {
            // with gamma = 0 the first application is already the fixed point
            if max_change <= rule.tolerance || momdp.gamma() == 0.0 {
                break;
            }
        }
    }
    Ok((q, trace))
}

/// Envelope value iteration with known dynamics, iterated to convergence.
pub fn exact_evi(
    momdp: &TabularMomdp,
    prefs: &PreferenceSet,
    stop: StopRule,
) -> Result<(MoqTable, IterationTrace), EnvelopeError> {
    envelope_value_iteration(momdp, momdp.transitions(), prefs, stop, None)
}

/// Envelope value iteration under arbitrary dynamics (for example an
/// empirical estimate), optionally tracing the distance to `reference`.
pub fn envelope_value_iteration(
    momdp: &TabularMomdp,
    transitions: &Transitions,
    prefs: &PreferenceSet,
    stop: StopRule,
    reference: Option<&MoqTable>,
) -> Result<(MoqTable, IterationTrace), EnvelopeError> {
    iterate(momdp, transitions, prefs, Termination::Converged(stop), reference)
}

/// Exactly `iterations` applications of the operator under `transitions`,
/// starting from the optimistic table. No early stop.
pub fn fixed_step_evi(
    momdp: &TabularMomdp,
    transitions: &Transitions,
    prefs: &PreferenceSet,
    iterations: usize,
    reference: Option<&MoqTable>,
) -> Result<(MoqTable, IterationTrace), EnvelopeError> {
    iterate(momdp, transitions, prefs, Termination::Fixed(iterations), reference)
}

/// Model-based envelope value iteration: draw `N` next states per pair
/// from the generative model, form the empirical dynamics, then apply the
/// empirical operator exactly `T` times. The instance's own transition
/// tensor is never read.
pub fn model_based_evi(
    momdp: &TabularMomdp,
    model: &dyn GenerativeModel,
    schedule: &EviSchedule,
    prefs: &PreferenceSet,
    seed: u64,
) -> Result<(MoqTable, EmpiricalModel, IterationTrace), EnvelopeError> {
    if schedule.samples_per_pair == 0 || schedule.iterations == 0 {
        return Err(EnvelopeError::EmptySchedule);
    }
    let empirical = build_empirical_model(momdp, model, schedule.samples_per_pair, seed)?;
    let (q, trace) = fixed_step_evi(momdp, empirical.p_hat(), prefs, schedule.iterations, None)?;
    Ok((q, empirical, trace))
}
