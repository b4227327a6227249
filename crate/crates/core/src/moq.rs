//! Multi-objective Q tables indexed by state, action and preference.

use std::io;

use serde::{Deserialize, Serialize};

use crate::error::ShapeError;
use crate::momdp::TabularMomdp;
use crate::preference::{dot, PreferenceSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoqShape {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_prefs: usize,
    pub num_objectives: usize,
}

impl MoqShape {
    pub fn of(momdp: &TabularMomdp, prefs: &PreferenceSet) -> Self {
        MoqShape {
            num_states: momdp.num_states(),
            num_actions: momdp.num_actions(),
            num_prefs: prefs.len(),
            num_objectives: momdp.num_objectives(),
        }
    }

    pub fn cells(&self) -> usize {
        self.num_states * self.num_actions * self.num_prefs
    }

    pub fn len(&self) -> usize {
        self.cells() * self.num_objectives
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn cell(&self, s: usize, a: usize, w: usize) -> usize {
        (s * self.num_actions + a) * self.num_prefs + w
    }

    pub(crate) fn ensure_matches(&self, momdp: &TabularMomdp, prefs: &PreferenceSet) -> Result<(), ShapeError> {
        let expected = MoqShape::of(momdp, prefs);
        let checks = [
            ("states", expected.num_states, self.num_states),
            ("actions", expected.num_actions, self.num_actions),
            ("preferences", expected.num_prefs, self.num_prefs),
            ("objectives", expected.num_objectives, self.num_objectives),
        ];
        for (what, expected, found) in checks {
            if expected != found {
                return Err(ShapeError::Mismatch { what, expected, found });
            }
        }
        if prefs.dim() != self.num_objectives {
            return Err(ShapeError::Mismatch {
                what: "preference dimension",
                expected: self.num_objectives,
                found: prefs.dim(),
            });
        }
        Ok(())
    }
}

/// `Q(s, a; w)` as an `m`-vector per cell, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct MoqTable {
    shape: MoqShape,
    values: Vec<f64>,
}

impl MoqTable {
    pub fn filled(shape: MoqShape, value: f64) -> Self {
        MoqTable { shape, values: vec![value; shape.len()] }
    }

    pub fn from_values(shape: MoqShape, values: Vec<f64>) -> Result<Self, ShapeError> {
        if values.len() != shape.len() {
            return Err(ShapeError::Flat { field: "moq", expected: shape.len(), found: values.len() });
        }
        Ok(MoqTable { shape, values })
    }

    /// Build by evaluating `f(s, a, w)` for every cell.
    pub fn from_fn(shape: MoqShape, mut f: impl FnMut(usize, usize, usize) -> Vec<f64>) -> Self {
        let mut values = Vec::with_capacity(shape.len());
        for s in 0..shape.num_states {
            for a in 0..shape.num_actions {
                for w in 0..shape.num_prefs {
                    let v = f(s, a, w);
                    assert_eq!(v.len(), shape.num_objectives);
                    values.extend(v);
                }
            }
        }
        MoqTable { shape, values }
    }

    pub fn shape(&self) -> MoqShape {
        self.shape
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize, w: usize) -> &[f64] {
        let m = self.shape.num_objectives;
        let start = self.shape.cell(s, a, w) * m;
        &self.values[start..start + m]
    }

    #[inline]
    pub fn get_mut(&mut self, s: usize, a: usize, w: usize) -> &mut [f64] {
        let m = self.shape.num_objectives;
        let start = self.shape.cell(s, a, w) * m;
        &mut self.values[start..start + m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `w_j^T Q(s, a; w_j)` for preference index `j`.
    #[inline]
    pub fn scalarized(&self, prefs: &PreferenceSet, s: usize, a: usize, w: usize) -> f64 {
        dot(prefs.get(w), self.get(s, a, w))
    }

    pub fn max_abs_diff(&self, other: &MoqTable) -> Result<f64, ShapeError> {
        if self.shape != other.shape {
            return Err(ShapeError::Mismatch { what: "moq size", expected: self.shape.len(), found: other.shape.len() });
        }
        Ok(self.values.iter().zip(&other.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// CSV with header `s,a,w,q_1..q_m`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["s".to_string(), "a".into(), "w".into()];
        header.extend((1..=self.shape.num_objectives).map(|k| format!("q_{k}")));
        wtr.write_record(&header)?;
        for s in 0..self.shape.num_states {
            for a in 0..self.shape.num_actions {
                for w in 0..self.shape.num_prefs {
                    let mut row = vec![s.to_string(), a.to_string(), w.to_string()];
                    row.extend(self.get(s, a, w).iter().map(|v| v.to_string()));
                    wtr.write_record(&row)?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_state_action_preference_major() {
        let shape = MoqShape { num_states: 2, num_actions: 3, num_prefs: 4, num_objectives: 2 };
        let q = MoqTable::from_fn(shape, |s, a, w| vec![s as f64, (a * 10 + w) as f64]);
        assert_eq!(q.get(1, 2, 3), &[1.0, 23.0]);
        assert_eq!(q.values().len(), 48);
        assert_eq!(shape.cell(1, 0, 0), 12);
    }

    #[test]
    fn csv_has_documented_header() {
        let shape = MoqShape { num_states: 1, num_actions: 1, num_prefs: 1, num_objectives: 2 };
        let q = MoqTable::filled(shape, 0.5);
        let mut buf = Vec::new();
        q.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "s,a,w,q_1,q_2\n0,0,0,0.5,0.5\n");
    }
}
