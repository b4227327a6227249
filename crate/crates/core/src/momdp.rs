//! Tabular multi-objective MDPs: the validated in-memory type, the raw
//! instance-file representation, and validation.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MomdpError, ShapeError};

/// Absolute tolerance on transition row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Raw instance as it appears on disk. Nothing here is checked; convert
/// with [`TabularMomdp::try_from`] to obtain a validated instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomdpData {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub num_states: usize,
    pub num_actions: usize,
    pub num_objectives: usize,
    pub gamma: f64,
    /// Allow reward components in `[-1, 1]` instead of `[0, 1]`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub signed_rewards: bool,
    /// `rewards[s][a][k]`
    pub rewards: Vec<Vec<Vec<f64>>>,
    /// `transitions[s][a][s']`
    pub transitions: Vec<Vec<Vec<f64>>>,
}

/// One reason an instance is rejected.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Gamma { gamma: f64 },
    RowSum { s: usize, a: usize, sum: f64 },
    NegativeProbability { s: usize, a: usize, next: usize, value: f64 },
    RewardOutOfRange { s: usize, a: usize, k: usize, value: f64 },
    NonFinite { what: &'static str, s: usize, a: usize, index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Gamma { gamma } => write!(f, "gamma must be < 1 and >= 0 (got {gamma})"),
            Violation::RowSum { s, a, sum } => write!(f, "row sum {sum} at (s={s},a={a})"),
            Violation::NegativeProbability { s, a, next, value } => {
                write!(f, "negative probability {value} at (s={s},a={a},s'={next})")
            }
            Violation::RewardOutOfRange { s, a, k, value } => {
                write!(f, "reward {value} out of range at (s={s},a={a},k={k})")
            }
            Violation::NonFinite { what, s, a, index } => {
                write!(f, "non-finite {what} at (s={s},a={a},{index})")
            }
        }
    }
}

/// Outcome of [`validate_momdp`]. Empty means the instance is valid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Check tensor shapes against the declared dimensions.
pub fn check_shapes(data: &MomdpData) -> Result<(), ShapeError> {
    let (ns, na, m) = (data.num_states, data.num_actions, data.num_objectives);
    if ns == 0 || na == 0 || m == 0 {
        return Err(ShapeError::EmptyDimension { states: ns, actions: na, objectives: m });
    }
    check_nested("rewards", &data.rewards, ns, na, m)?;
    check_nested("transitions", &data.transitions, ns, na, ns)
}

fn check_nested(
    field: &'static str,
    t: &[Vec<Vec<f64>>],
    ns: usize,
    na: usize,
    inner: usize,
) -> Result<(), ShapeError> {
    if t.len() != ns {
        return Err(ShapeError::Tensor { field, path: String::new(), expected: ns, found: t.len() });
    }
    for (s, row) in t.iter().enumerate() {
        if row.len() != na {
            return Err(ShapeError::Tensor {
                field,
                path: format!("[{s}]"),
                expected: na,
                found: row.len(),
            });
        }
        for (a, v) in row.iter().enumerate() {
            if v.len() != inner {
                return Err(ShapeError::Tensor {
                    field,
                    path: format!("[{s}][{a}]"),
                    expected: inner,
                    found: v.len(),
                });
            }
        }
    }
    Ok(())
}

/// Collect every violation of the instance invariants. Shapes must already
/// agree (see [`check_shapes`]); ragged tensors are skipped silently.
pub fn validate_momdp(data: &MomdpData) -> ValidationReport {
    let mut violations = Vec::new();
    if !(data.gamma >= 0.0 && data.gamma < 1.0) {
        violations.push(Violation::Gamma { gamma: data.gamma });
    }
    let (lo, hi) = if data.signed_rewards { (-1.0, 1.0) } else { (0.0, 1.0) };
    for (s, row) in data.rewards.iter().enumerate() {
        for (a, r) in row.iter().enumerate() {
            for (k, &value) in r.iter().enumerate() {
                if !value.is_finite() {
                    violations.push(Violation::NonFinite { what: "reward", s, a, index: k });
                } else if !(lo..=hi).contains(&value) {
                    violations.push(Violation::RewardOutOfRange { s, a, k, value });
                }
            }
        }
    }
    for (s, row) in data.transitions.iter().enumerate() {
        for (a, p) in row.iter().enumerate() {
            let mut finite = true;
            for (next, &value) in p.iter().enumerate() {
                if !value.is_finite() {
                    finite = false;
                    violations.push(Violation::NonFinite { what: "probability", s, a, index: next });
                } else if value < 0.0 {
                    violations.push(Violation::NegativeProbability { s, a, next, value });
                }
            }
            let sum: f64 = p.iter().sum();
            if finite && (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                violations.push(Violation::RowSum { s, a, sum });
            }
        }
    }
    ValidationReport { violations }
}

/// Dense transition tensor `P(s'|s,a)`, stored row-major by `(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transitions {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl Transitions {
    /// Build from a flat `S*A*S` buffer. Row contents are not validated.
    pub fn from_flat(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self, ShapeError> {
        let expected = num_states * num_actions * num_states;
        if probs.len() != expected {
            return Err(ShapeError::Flat { field: "transitions", expected, found: probs.len() });
        }
        Ok(Transitions { num_states, num_actions, probs })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.probs[start..start + self.num_states]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.probs
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.num_states)
            .map(|s| (0..self.num_actions).map(|a| self.row(s, a).to_vec()).collect())
            .collect()
    }
}

/// A validated discounted MOMDP with deterministic vector rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMomdp {
    name: Option<String>,
    num_objectives: usize,
    gamma: f64,
    signed_rewards: bool,
    rewards: Vec<f64>,
    transitions: Transitions,
}

impl TryFrom<MomdpData> for TabularMomdp {
    type Error = MomdpError;

    fn try_from(data: MomdpData) -> Result<Self, MomdpError> {
        check_shapes(&data)?;
        let report = validate_momdp(&data);
        if !report.is_ok() {
            return Err(MomdpError::Invalid(report));
        }
        let rewards = data.rewards.iter().flatten().flatten().copied().collect();
        let probs = data.transitions.iter().flatten().flatten().copied().collect();
        Ok(TabularMomdp {
            name: data.name,
            num_objectives: data.num_objectives,
            gamma: data.gamma,
            signed_rewards: data.signed_rewards,
            rewards,
            transitions: Transitions::from_flat(data.num_states, data.num_actions, probs)?,
        })
    }
}

impl TabularMomdp {
    /// Build and validate from flat buffers: `rewards` is `S*A*m`,
    /// `transitions` is `S*A*S`.
    pub fn from_flat(
        num_states: usize,
        num_actions: usize,
        num_objectives: usize,
        gamma: f64,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
    ) -> Result<Self, MomdpError> {
        let nest = |v: &[f64], inner: usize| -> Vec<Vec<Vec<f64>>> {
            v.chunks(inner * num_actions)
                .map(|sa| sa.chunks(inner).map(|x| x.to_vec()).collect())
                .collect()
        };
        if rewards.len() != num_states * num_actions * num_objectives {
            return Err(ShapeError::Flat {
                field: "rewards",
                expected: num_states * num_actions * num_objectives,
                found: rewards.len(),
            }
            .into());
        }
        if transitions.len() != num_states * num_actions * num_states {
            return Err(ShapeError::Flat {
                field: "transitions",
                expected: num_states * num_actions * num_states,
                found: transitions.len(),
            }
            .into());
        }
        if num_states == 0 || num_actions == 0 || num_objectives == 0 {
            return Err(ShapeError::EmptyDimension {
                states: num_states,
                actions: num_actions,
                objectives: num_objectives,
            }
            .into());
        }
        TabularMomdp::try_from(MomdpData {
            name: None,
            num_states,
            num_actions,
            num_objectives,
            gamma,
            signed_rewards: false,
            rewards: nest(&rewards, num_objectives),
            transitions: nest(&transitions, num_states),
        })
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn num_states(&self) -> usize {
        self.transitions.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.transitions.num_actions
    }

    pub fn num_objectives(&self) -> usize {
        self.num_objectives
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn signed_rewards(&self) -> bool {
        self.signed_rewards
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> &[f64] {
        let m = self.num_objectives;
        let start = (s * self.num_actions() + a) * m;
        &self.rewards[start..start + m]
    }

    pub fn transitions(&self) -> &Transitions {
        &self.transitions
    }

    /// Same rewards and discount, different dynamics. Used to pose the
    /// empirical MOMDP built from samples.
    pub fn with_transitions(&self, transitions: Transitions) -> Result<Self, MomdpError> {
        if transitions.num_states != self.num_states() || transitions.num_actions != self.num_actions() {
            return Err(ShapeError::Flat {
                field: "transitions",
                expected: self.num_states() * self.num_actions() * self.num_states(),
                found: transitions.probs.len(),
            }
            .into());
        }
        let mut data = self.to_data();
        data.transitions = transitions.to_nested();
        TabularMomdp::try_from(data)
    }

    pub fn to_data(&self) -> MomdpData {
        let na = self.num_actions();
        MomdpData {
            name: self.name.clone(),
            num_states: self.num_states(),
            num_actions: na,
            num_objectives: self.num_objectives,
            gamma: self.gamma,
            signed_rewards: self.signed_rewards,
            rewards: (0..self.num_states())
                .map(|s| (0..na).map(|a| self.reward(s, a).to_vec()).collect())
                .collect(),
            transitions: self.transitions.to_nested(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_data()).expect("instance data is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, MomdpError> {
        let data: MomdpData = serde_json::from_str(text)?;
        TabularMomdp::try_from(data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MomdpError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Read, parse, shape-check and validate an instance file.
pub fn load_momdp(path: impl AsRef<Path>) -> Result<TabularMomdp, MomdpError> {
    let text = fs::read_to_string(path)?;
    TabularMomdp::from_json(&text)
}

/// Stationary deterministic policy `state -> action`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DeterministicPolicy {
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(actions: Vec<usize>, num_actions: usize) -> Result<Self, MomdpError> {
        if let Some((s, &a)) = actions.iter().enumerate().find(|(_, &a)| a >= num_actions) {
            return Err(MomdpError::InvalidAction { state: s, action: a, num_actions });
        }
        Ok(DeterministicPolicy { actions })
    }

    /// Policy number `index` in the mixed-radix enumeration of all `A^S`
    /// policies; state 0 is the least significant digit.
    pub fn from_index(mut index: u64, num_states: usize, num_actions: usize) -> Self {
        let actions = (0..num_states)
            .map(|_| {
                let a = (index % num_actions as u64) as usize;
                index /= num_actions as u64;
                a
            })
            .collect();
        DeterministicPolicy { actions }
    }

    #[inline]
    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn num_states(&self) -> usize {
        self.actions.len()
    }
}

/// Preference-conditioned deterministic policy `(state, preference) -> action`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreferencePolicy {
    num_prefs: usize,
    actions: Vec<usize>,
}

impl PreferencePolicy {
    pub fn new(num_states: usize, num_prefs: usize, actions: Vec<usize>) -> Result<Self, ShapeError> {
        if actions.len() != num_states * num_prefs {
            return Err(ShapeError::Flat {
                field: "policy",
                expected: num_states * num_prefs,
                found: actions.len(),
            });
        }
        Ok(PreferencePolicy { num_prefs, actions })
    }

    pub fn action(&self, s: usize, w: usize) -> usize {
        self.actions[s * self.num_prefs + w]
    }

    /// The stationary policy followed under preference `w`.
    pub fn for_preference(&self, w: usize) -> DeterministicPolicy {
        let ns = self.actions.len() / self.num_prefs;
        DeterministicPolicy { actions: (0..ns).map(|s| self.action(s, w)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_state() -> MomdpData {
        MomdpData {
            name: Some("two-state".into()),
            num_states: 2,
            num_actions: 2,
            num_objectives: 2,
            gamma: 0.9,
            signed_rewards: false,
            rewards: vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.5, 0.5], vec![0.2, 0.1]],
            ],
            transitions: vec![
                vec![vec![0.25, 0.75], vec![1.0, 0.0]],
                vec![vec![0.5, 0.5], vec![0.0, 1.0]],
            ],
        }
    }

    #[test]
    fn valid_instance_has_empty_report() {
        let report = validate_momdp(&two_state());
        assert!(report.is_ok(), "{report}");
        assert!(TabularMomdp::try_from(two_state()).is_ok());
    }

    #[test]
    fn bad_row_sum_is_reported_with_indices() {
        let mut data = two_state();
        data.transitions[0][0] = vec![0.5, 0.6];
        let report = validate_momdp(&data);
        assert_eq!(report.violations.len(), 1);
        match report.violations[0] {
            Violation::RowSum { s: 0, a: 0, sum } => assert!((sum - 1.1).abs() < 1e-12),
            ref v => panic!("unexpected violation {v:?}"),
        }
        assert!(report.to_string().contains("row sum 1.1 at (s=0,a=0)"));
    }

    #[test]
    fn gamma_of_one_is_rejected() {
        let mut data = two_state();
        data.gamma = 1.0;
        let report = validate_momdp(&data);
        assert_eq!(report.violations, vec![Violation::Gamma { gamma: 1.0 }]);
        assert!(report.to_string().contains("gamma must be < 1"));
    }

    #[test]
    fn rewards_outside_unit_interval() {
        let mut data = two_state();
        data.rewards[1][0][1] = -0.5;
        let report = validate_momdp(&data);
        assert_eq!(
            report.violations,
            vec![Violation::RewardOutOfRange { s: 1, a: 0, k: 1, value: -0.5 }]
        );
        data.signed_rewards = true;
        assert!(validate_momdp(&data).is_ok());
    }

    #[test]
    fn row_sum_tolerance_is_absolute_1e9() {
        let mut data = two_state();
        data.transitions[1][1] = vec![0.0, 1.0 + 5e-10];
        assert!(validate_momdp(&data).is_ok());
        data.transitions[1][1] = vec![0.0, 1.0 + 5e-9];
        assert!(!validate_momdp(&data).is_ok());
    }

    #[test]
    fn negative_probability_is_rejected_even_if_row_sums_to_one() {
        let mut data = two_state();
        data.transitions[0][1] = vec![1.5, -0.5];
        let report = validate_momdp(&data);
        assert!(matches!(
            report.violations[..],
            [Violation::NegativeProbability { s: 0, a: 1, next: 1, .. }]
        ));
    }

    #[test]
    fn declared_size_mismatch_is_a_shape_error() {
        let mut data = two_state();
        data.num_states = 3;
        let err = TabularMomdp::try_from(data).unwrap_err();
        assert!(matches!(err, MomdpError::Shape(ShapeError::Tensor { field: "rewards", .. })), "{err}");
    }

    #[test]
    fn missing_key_names_the_key() {
        let text = r#"{"num_states":1,"num_actions":1,"num_objectives":1,"gamma":0.5,"rewards":[[[0.5]]]}"#;
        let err = TabularMomdp::from_json(text).unwrap_err();
        assert!(err.to_string().contains("transitions"), "{err}");
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn flat_accessors_follow_nested_layout() {
        let m = TabularMomdp::try_from(two_state()).unwrap();
        assert_eq!(m.reward(1, 0), &[0.5, 0.5]);
        assert_eq!(m.transitions().row(0, 0), &[0.25, 0.75]);
        assert_eq!(m.to_data(), two_state());
    }

    #[test]
    fn policy_index_enumeration() {
        let p = DeterministicPolicy::from_index(5, 3, 2);
        assert_eq!(p.actions(), &[1, 0, 1]);
        assert!(DeterministicPolicy::new(vec![0, 2], 2).is_err());
    }
}
