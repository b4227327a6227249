//! Brute-force ground truth for the envelope solver: scalarized value
//! iteration, exact policy evaluation, and exhaustive enumeration of
//! stationary deterministic policies for Pareto / CCS extraction.

use std::collections::HashMap;
use std::io;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::OracleError;
use crate::momdp::{DeterministicPolicy, TabularMomdp, Transitions};
use crate::moq::{MoqShape, MoqTable};
use crate::preference::{dot, PreferenceSet};

/// Slack used when comparing returns for dominance and CCS membership.
pub const DOMINANCE_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Single-objective action values `Q(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarQ {
    num_actions: usize,
    values: Vec<f64>,
}

impl ScalarQ {
    pub fn num_states(&self) -> usize {
        self.values.len() / self.num_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `max_a Q(s, a)`
    pub fn state_value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    /// Greedy policy; ties go to the smallest action index.
    pub fn greedy_policy(&self) -> DeterministicPolicy {
        let actions = (0..self.num_states())
            .map(|s| {
                let row = self.row(s);
                let mut best = 0;
                for (a, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = a;
                    }
                }
                best
            })
            .collect();
        DeterministicPolicy::new(actions, self.num_actions).expect("greedy actions are in range")
    }
}

fn scalar_rewards(momdp: &TabularMomdp, w: &[f64]) -> Result<Vec<f64>, OracleError> {
    if w.len() != momdp.num_objectives() {
        return Err(OracleError::PreferenceLength { expected: momdp.num_objectives(), found: w.len() });
    }
    let (ns, na) = (momdp.num_states(), momdp.num_actions());
    Ok((0..ns * na).map(|sa| dot(w, momdp.reward(sa / na, sa % na))).collect())
}

fn scalar_backup(reward: &[f64], transitions: &Transitions, gamma: f64, q: &[f64], out: &mut [f64]) {
    let (ns, na) = (transitions.num_states(), transitions.num_actions());
    let v: Vec<f64> = (0..ns)
        .map(|s| q[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    for s in 0..ns {
        for a in 0..na {
            let row = transitions.row(s, a);
            let expect: f64 = row.iter().zip(&v).map(|(p, x)| p * x).sum();
            out[s * na + a] = reward[s * na + a] + gamma * expect;
        }
    }
}

/// Optimal Q of the single-objective MDP with reward `w^T r`, to within
/// `tolerance` in sup norm.
pub fn scalar_value_iteration(momdp: &TabularMomdp, w: &[f64], tolerance: f64) -> Result<ScalarQ, OracleError> {
    scalar_value_iteration_with(momdp, momdp.transitions(), w, tolerance)
}

/// [`scalar_value_iteration`] under substitute dynamics.
pub fn scalar_value_iteration_with(
    momdp: &TabularMomdp,
    transitions: &Transitions,
    w: &[f64],
    tolerance: f64,
) -> Result<ScalarQ, OracleError> {
    let reward = scalar_rewards(momdp, w)?;
    let gamma = momdp.gamma();
    let mut q = vec![0.0; reward.len()];
    let mut next = q.clone();
    loop {
        scalar_backup(&reward, transitions, gamma, &q, &mut next);
        let change = q.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut q, &mut next);
        // a-posteriori bound: ||Q_t - Q*|| <= gamma/(1-gamma) ||Q_t - Q_{t-1}||
        if gamma * change <= tolerance * (1.0 - gamma) {
            break;
        }
    }
    Ok(ScalarQ { num_actions: momdp.num_actions(), values: q })
}

/// Plain single-objective value iteration for exactly `iterations` steps
/// from the constant table `init`, under the given dynamics.
pub fn scalar_value_iteration_steps(
    momdp: &TabularMomdp,
    transitions: &Transitions,
    w: &[f64],
    init: f64,
    iterations: usize,
) -> Result<ScalarQ, OracleError> {
    let reward = scalar_rewards(momdp, w)?;
    let mut q = vec![init; reward.len()];
    let mut next = q.clone();
    for _ in 0..iterations {
        scalar_backup(&reward, transitions, momdp.gamma(), &q, &mut next);
        std::mem::swap(&mut q, &mut next);
    }
    Ok(ScalarQ { num_actions: momdp.num_actions(), values: q })
}

/// Vector-valued `V^pi` and `Q^pi` of a stationary policy.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyValues {
    num_actions: usize,
    num_objectives: usize,
    state_values: Vec<f64>,
    action_values: Vec<f64>,
}

impl PolicyValues {
    pub fn state_value(&self, s: usize) -> &[f64] {
        &self.state_values[s * self.num_objectives..(s + 1) * self.num_objectives]
    }

    pub fn action_value(&self, s: usize, a: usize) -> &[f64] {
        let m = self.num_objectives;
        let start = (s * self.num_actions + a) * m;
        &self.action_values[start..start + m]
    }
}

/// Solve `(I - gamma P_pi) V = r_pi` per objective by LU, then
/// `Q(s,a) = r(s,a) + gamma (P V)(s,a)`.
pub fn evaluate_policy(momdp: &TabularMomdp, policy: &DeterministicPolicy) -> Result<PolicyValues, OracleError> {
    let (ns, na, m) = (momdp.num_states(), momdp.num_actions(), momdp.num_objectives());
    if policy.num_states() != ns {
        return Err(crate::error::ShapeError::Mismatch { what: "policy states", expected: ns, found: policy.num_states() }.into());
    }
    if let Some(s) = (0..ns).find(|&s| policy.action(s) >= na) {
        return Err(crate::error::MomdpError::InvalidAction { state: s, action: policy.action(s), num_actions: na }.into());
    }
    let gamma = momdp.gamma();
    let p = momdp.transitions();
    let system = DMatrix::from_fn(ns, ns, |i, j| {
        let diag = if i == j { 1.0 } else { 0.0 };
        diag - gamma * p.row(i, policy.action(i))[j]
    });
    let lu = system.lu();
    let mut state_values = vec![0.0; ns * m];
    for k in 0..m {
        let rhs = DVector::from_fn(ns, |s, _| momdp.reward(s, policy.action(s))[k]);
        let v = lu.solve(&rhs).ok_or(OracleError::Singular { objective: k })?;
        for s in 0..ns {
            state_values[s * m + k] = v[s];
        }
    }
    let mut action_values = vec![0.0; ns * na * m];
    for s in 0..ns {
        for a in 0..na {
            let row = p.row(s, a);
            for k in 0..m {
                let expect: f64 = row.iter().enumerate().map(|(next, pr)| pr * state_values[next * m + k]).sum();
                action_values[(s * na + a) * m + k] = momdp.reward(s, a)[k] + gamma * expect;
            }
        }
    }
    Ok(PolicyValues { num_actions: na, num_objectives: m, state_values, action_values })
}

/// For each grid preference, the vector return of a greedy optimal policy
/// of the scalarized problem: a valid optimal MOQ on the grid.
pub fn assemble_reference_moq(
    momdp: &TabularMomdp,
    prefs: &PreferenceSet,
    tolerance: f64,
) -> Result<MoqTable, OracleError> {
    let shape = MoqShape::of(momdp, prefs);
    let mut cache: HashMap<DeterministicPolicy, PolicyValues> = HashMap::new();
    let mut per_pref = Vec::with_capacity(prefs.len());
    for w in prefs.iter() {
        let policy = scalar_value_iteration(momdp, w, tolerance)?.greedy_policy();
        if !cache.contains_key(&policy) {
            let values = evaluate_policy(momdp, &policy)?;
            cache.insert(policy.clone(), values);
        }
        per_pref.push(policy);
    }
    Ok(MoqTable::from_fn(shape, |s, a, w| cache[&per_pref[w]].action_value(s, a).to_vec()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReturnEntry {
    pub policy_id: u64,
    pub policy: DeterministicPolicy,
    pub returns: Vec<f64>,
}

/// All stationary deterministic policies with their start-state returns,
/// and index lists of the Pareto-optimal and CCS entries.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontierResult {
    pub entries: Vec<ReturnEntry>,
    pub pareto: Vec<usize>,
    pub ccs: Vec<usize>,
}

impl FrontierResult {
    pub fn pareto_returns(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.pareto.iter().map(|&i| self.entries[i].returns.as_slice())
    }

    pub fn ccs_returns(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.ccs.iter().map(|&i| self.entries[i].returns.as_slice())
    }

    /// `max_{q in CCS} w^T q`
    pub fn best_scalarized(&self, w: &[f64]) -> f64 {
        self.ccs_returns().map(|q| dot(w, q)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV with header `policy_id,action_map,q_1..q_m,is_pareto,is_ccs`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let m = self.entries.first().map_or(0, |e| e.returns.len());
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["policy_id".to_string(), "action_map".into()];
        header.extend((1..=m).map(|k| format!("q_{k}")));
        header.extend(["is_pareto".into(), "is_ccs".into()]);
        wtr.write_record(&header)?;
        let mut is_pareto = vec![false; self.entries.len()];
        let mut is_ccs = vec![false; self.entries.len()];
        self.pareto.iter().for_each(|&i| is_pareto[i] = true);
        self.ccs.iter().for_each(|&i| is_ccs[i] = true);
        for (i, e) in self.entries.iter().enumerate() {
            let map = e.policy.actions().iter().map(usize::to_string).collect::<Vec<_>>().join("-");
            let mut row = vec![e.policy_id.to_string(), map];
            row.extend(e.returns.iter().map(f64::to_string));
            row.extend([is_pareto[i].to_string(), is_ccs[i].to_string()]);
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `a` dominates `b`: no worse anywhere and strictly better somewhere,
/// both up to [`DOMINANCE_TOLERANCE`].
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| *x >= y - DOMINANCE_TOLERANCE)
        && a.iter().zip(b).any(|(x, y)| *x > y + DOMINANCE_TOLERANCE)
}

/// Indices of the entries not dominated by any other entry.
pub fn pareto_indices(points: &[&[f64]]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().enumerate().any(|(j, q)| j != i && dominates(q, points[i])))
        .collect()
}

/// Evaluate every one of the `A^S` stationary deterministic policies from
/// `start_state` and extract the Pareto set and the grid CCS.
pub fn enumerate_ccs(
    momdp: &TabularMomdp,
    prefs: &PreferenceSet,
    start_state: usize,
    cap: u64,
) -> Result<FrontierResult, OracleError> {
    let (ns, na) = (momdp.num_states(), momdp.num_actions());
    if start_state >= ns {
        return Err(OracleError::StartState { state: start_state });
    }
    if prefs.dim() != momdp.num_objectives() {
        return Err(OracleError::PreferenceLength { expected: momdp.num_objectives(), found: prefs.dim() });
    }
    let needed = (na as f64).powi(ns as i32);
    if needed > cap as f64 {
        return Err(OracleError::CapExceeded { needed, cap });
    }
    let count = needed as u64;
    let entries: Vec<ReturnEntry> = (0..count)
        .into_par_iter()
        .map(|id| {
            let policy = DeterministicPolicy::from_index(id, ns, na);
            let values = evaluate_policy(momdp, &policy)?;
            Ok(ReturnEntry { policy_id: id, returns: values.state_value(start_state).to_vec(), policy })
        })
        .collect::<Result<_, OracleError>>()?;

    let points: Vec<&[f64]> = entries.iter().map(|e| e.returns.as_slice()).collect();
    let pareto = pareto_indices(&points);
    let mut in_ccs = vec![false; entries.len()];
    for w in prefs.iter() {
        let best = points.iter().map(|q| dot(w, q)).fold(f64::NEG_INFINITY, f64::max);
        for &i in &pareto {
            if dot(w, points[i]) >= best - DOMINANCE_TOLERANCE {
                in_ccs[i] = true;
            }
        }
    }
    let ccs = pareto.iter().copied().filter(|&i| in_ccs[i]).collect();
    Ok(FrontierResult { entries, pareto, ccs })
}
