//! Finite preference sets standing in for the continuous preference space.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::PreferenceError;

/// Slack allowed on `||w||_1 <= 1`.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Nonempty, duplicate-free list of preference vectors with `||w||_1 <= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceSet {
    dim: usize,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PreferenceFile {
    m: usize,
    vectors: Vec<Vec<f64>>,
}

impl PreferenceSet {
    pub fn new(dim: usize, vectors: Vec<Vec<f64>>) -> Result<Self, PreferenceError> {
        if dim == 0 {
            return Err(PreferenceError::ZeroObjectives);
        }
        if vectors.is_empty() {
            return Err(PreferenceError::Empty);
        }
        for (index, w) in vectors.iter().enumerate() {
            if w.len() != dim {
                return Err(PreferenceError::Dimension { index, expected: dim, found: w.len() });
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(PreferenceError::NonFinite { index });
            }
            let norm: f64 = w.iter().map(|x| x.abs()).sum();
            if norm > 1.0 + NORM_TOLERANCE {
                return Err(PreferenceError::NormTooLarge { index, norm });
            }
            if let Some(first) = vectors[..index].iter().position(|v| v == w) {
                return Err(PreferenceError::Duplicate { index, first });
            }
        }
        Ok(PreferenceSet { dim, weights: vectors.into_iter().flatten().collect() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[f64] {
        &self.weights[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.weights.chunks_exact(self.dim)
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }

    pub fn to_json(&self) -> String {
        let file = PreferenceFile { m: self.dim, vectors: self.to_vecs() };
        serde_json::to_string_pretty(&file).expect("preference data is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, PreferenceError> {
        let file: PreferenceFile = serde_json::from_str(text)?;
        PreferenceSet::new(file.m, file.vectors)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PreferenceError> {
        PreferenceSet::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PreferenceError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// All points of the probability simplex in `R^m` whose coordinates are
/// multiples of `1/k`, in lexicographic order of the integer numerators.
pub fn make_simplex_grid(m: usize, k: usize) -> Result<PreferenceSet, PreferenceError> {
    if m == 0 {
        return Err(PreferenceError::ZeroObjectives);
    }
    if k == 0 {
        return Err(PreferenceError::ZeroResolution);
    }
    let mut out = Vec::new();
    let mut parts = vec![0usize; m];
    compositions(&mut parts, 0, k, &mut |p| {
        out.push(p.iter().map(|&n| n as f64 / k as f64).collect());
    });
    PreferenceSet::new(m, out)
}

fn compositions(parts: &mut [usize], pos: usize, remaining: usize, emit: &mut dyn FnMut(&[usize])) {
    if pos + 1 == parts.len() {
        parts[pos] = remaining;
        emit(parts);
        return;
    }
    for n in 0..=remaining {
        parts[pos] = n;
        compositions(parts, pos + 1, remaining - n, emit);
    }
}
