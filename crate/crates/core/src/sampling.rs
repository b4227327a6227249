//! Generative-model access and empirical transition estimates.
//!
//! Every draw is addressed by `(seed, s, a, draw index)`: the seed keys a
//! ChaCha8 generator, the state-action pair selects one of its 2^64
//! independent streams, and the draw index is the block position within
//! that stream. Collection order therefore never affects the result.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MomdpError, SamplingError, ShapeError};
use crate::momdp::{TabularMomdp, Transitions};

/// Position in a keyed random stream. Each draw consumes one 64-bit word.
#[derive(Clone, Debug)]
pub struct SampleStream {
    rng: ChaCha8Rng,
}

impl SampleStream {
    /// Stream for the pair `(s, a)` under `seed`, positioned at draw 0.
    pub fn for_pair(seed: u64, s: usize, a: usize, num_actions: usize) -> Self {
        Self::keyed(seed, (s * num_actions + a) as u64)
    }

    pub fn keyed(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        SampleStream { rng }
    }

    /// Jump to draw number `index`.
    pub fn seek(&mut self, index: u64) {
        self.rng.set_word_pos(u128::from(index) * 2);
    }

    /// Number of draws consumed so far.
    pub fn position(&self) -> u64 {
        (self.rng.get_word_pos() / 2) as u64
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

/// Anything that can produce next states for arbitrary state-action pairs.
pub trait GenerativeModel: Sync {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;

    /// Draw `s' ~ P(.|s, a)` using (and advancing) `stream`.
    fn sample(&self, s: usize, a: usize, stream: &mut SampleStream) -> Result<usize, SamplingError>;
}

/// Simulator backed by a known transition tensor, sampled by inverse CDF.
#[derive(Clone, Copy, Debug)]
pub struct TabularSimulator<'a> {
    transitions: &'a Transitions,
}

impl<'a> TabularSimulator<'a> {
    pub fn new(transitions: &'a Transitions) -> Self {
        TabularSimulator { transitions }
    }

    pub fn of(momdp: &'a TabularMomdp) -> Self {
        TabularSimulator { transitions: momdp.transitions() }
    }
}

impl GenerativeModel for TabularSimulator<'_> {
    fn num_states(&self) -> usize {
        self.transitions.num_states()
    }

    fn num_actions(&self) -> usize {
        self.transitions.num_actions()
    }

    fn sample(&self, s: usize, a: usize, stream: &mut SampleStream) -> Result<usize, SamplingError> {
        if s >= self.num_states() || a >= self.num_actions() {
            return Err(SamplingError::InvalidPair { s, a });
        }
        let row = self.transitions.row(s, a);
        let u = stream.next_unit();
        let mut cdf = 0.0;
        let mut last_positive = 0;
        for (next, &p) in row.iter().enumerate() {
            if p > 0.0 {
                last_positive = next;
            }
            cdf += p;
            if u < cdf {
                return Ok(next);
            }
        }
        // row sums a hair below 1 and u landed in the gap
        Ok(last_positive)
    }
}

/// Draw one next state, checking the pair and the returned index.
pub fn sample_next_state(
    model: &dyn GenerativeModel,
    s: usize,
    a: usize,
    stream: &mut SampleStream,
) -> Result<usize, SamplingError> {
    if s >= model.num_states() || a >= model.num_actions() {
        return Err(SamplingError::InvalidPair { s, a });
    }
    let next = model.sample(s, a, stream)?;
    if next >= model.num_states() {
        return Err(SamplingError::InvalidState { s, a, state: next });
    }
    Ok(next)
}

/// Next-state counts from `n` draws on the `(seed, s, a)` substream.
pub fn sample_pair_counts(
    model: &dyn GenerativeModel,
    s: usize,
    a: usize,
    n: u64,
    seed: u64,
) -> Result<Vec<u64>, SamplingError> {
    let mut counts = vec![0u64; model.num_states()];
    let mut stream = SampleStream::for_pair(seed, s, a, model.num_actions());
    for _ in 0..n {
        counts[sample_next_state(model, s, a, &mut stream)?] += 1;
    }
    Ok(counts)
}

/// Counts `N(s'|s,a)` and the induced estimate `N(s'|s,a)/N`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalModel {
    samples_per_pair: u64,
    counts: Vec<u64>,
    p_hat: Transitions,
}

impl EmpiricalModel {
    /// Build from flat `S*A*S` counts; every pair must sum to `n`.
    pub fn from_counts(
        num_states: usize,
        num_actions: usize,
        samples_per_pair: u64,
        counts: Vec<u64>,
    ) -> Result<Self, EmpiricalError> {
        if samples_per_pair == 0 {
            return Err(SamplingError::ZeroSamples.into());
        }
        let expected = num_states * num_actions * num_states;
        if counts.len() != expected {
            return Err(ShapeError::Flat { field: "counts", expected, found: counts.len() }.into());
        }
        for (pair, row) in counts.chunks_exact(num_states).enumerate() {
            let total: u64 = row.iter().sum();
            if total != samples_per_pair {
                return Err(EmpiricalError::CountSum {
                    s: pair / num_actions,
                    a: pair % num_actions,
                    total,
                    expected: samples_per_pair,
                });
            }
        }
        let n = samples_per_pair as f64;
        let probs = counts.iter().map(|&c| c as f64 / n).collect();
        let p_hat = Transitions::from_flat(num_states, num_actions, probs)?;
        Ok(EmpiricalModel { samples_per_pair, counts, p_hat })
    }

    pub fn samples_per_pair(&self) -> u64 {
        self.samples_per_pair
    }

    pub fn counts(&self, s: usize, a: usize) -> &[u64] {
        let ns = self.p_hat.num_states();
        let start = (s * self.p_hat.num_actions() + a) * ns;
        &self.counts[start..start + ns]
    }

    pub fn p_hat(&self) -> &Transitions {
        &self.p_hat
    }

    /// Largest total-variation distance between an estimated row and the
    /// matching row of `truth`.
    pub fn max_tv_distance(&self, truth: &Transitions) -> f64 {
        let (ns, na) = (self.p_hat.num_states(), self.p_hat.num_actions());
        let mut worst: f64 = 0.0;
        for s in 0..ns {
            for a in 0..na {
                let tv: f64 =
                    self.p_hat.row(s, a).iter().zip(truth.row(s, a)).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0;
                worst = worst.max(tv);
            }
        }
        worst
    }

    pub fn to_json(&self) -> String {
        let (ns, na) = (self.p_hat.num_states(), self.p_hat.num_actions());
        let file = EmpiricalFile {
            num_states: ns,
            num_actions: na,
            samples_per_pair: self.samples_per_pair,
            transitions: self.p_hat.to_nested(),
            counts: (0..ns).map(|s| (0..na).map(|a| self.counts(s, a).to_vec()).collect()).collect(),
        };
        serde_json::to_string_pretty(&file).expect("empirical model is always serializable")
    }

    /// Parse; the stored transitions must equal `counts / N` exactly.
    pub fn from_json(text: &str) -> Result<Self, EmpiricalError> {
        let file: EmpiricalFile = serde_json::from_str(text)?;
        let counts: Vec<u64> = file.counts.iter().flatten().flatten().copied().collect();
        let model = EmpiricalModel::from_counts(file.num_states, file.num_actions, file.samples_per_pair, counts)?;
        if model.p_hat.to_nested() != file.transitions {
            return Err(EmpiricalError::Inconsistent);
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmpiricalError> {
        fs::write(path, self.to_json()).map_err(|e| EmpiricalError::Momdp(e.into()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmpiricalFile {
    num_states: usize,
    num_actions: usize,
    samples_per_pair: u64,
    transitions: Vec<Vec<Vec<f64>>>,
    counts: Vec<Vec<Vec<u64>>>,
}

#[derive(Debug, thiserror::Error)]
pub enum EmpiricalError {
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("counts at (s={s},a={a}) sum to {total}, expected {expected}")]
    CountSum { s: usize, a: usize, total: u64, expected: u64 },
    #[error("stored transitions disagree with counts / N")]
    Inconsistent,
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Momdp(#[from] MomdpError),
}

/// Draw `n` next states for every pair and form the empirical model.
/// Pairs are sampled concurrently on their own substreams.
pub fn build_empirical_model(
    momdp: &TabularMomdp,
    model: &dyn GenerativeModel,
    n: u64,
    seed: u64,
) -> Result<EmpiricalModel, SamplingError> {
    if n == 0 {
        return Err(SamplingError::ZeroSamples);
    }
    let (ns, na) = (momdp.num_states(), momdp.num_actions());
    if model.num_states() != ns || model.num_actions() != na {
        return Err(SamplingError::StateCount { expected: ns, found: model.num_states() });
    }
    let rows: Vec<Vec<u64>> = (0..ns * na)
        .into_par_iter()
        .map(|pair| sample_pair_counts(model, pair / na, pair % na, n, seed))
        .collect::<Result<_, _>>()?;
    let counts = rows.into_iter().flatten().collect();
    match EmpiricalModel::from_counts(ns, na, n, counts) {
        Ok(m) => Ok(m),
        Err(EmpiricalError::Sampling(e)) => Err(e),
        Err(e) => unreachable!("counts built from {n} draws per pair: {e}"),
    }
}
