//! Seeded random instance family: Dirichlet(1) transition rows and
//! uniform `[0,1]^m` rewards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::momdp::TabularMomdp;

/// Draw a random MOMDP. Identical arguments give identical instances.
pub fn random_momdp(num_states: usize, num_actions: usize, num_objectives: usize, gamma: f64, seed: u64) -> TabularMomdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rewards = (0..num_states * num_actions * num_objectives).map(|_| rng.random::<f64>()).collect();
    let mut transitions = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        // normalized unit exponentials are a symmetric Dirichlet(1) draw
        let row: Vec<f64> = (0..num_states).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = row.iter().sum();
        transitions.extend(row.into_iter().map(|x: f64| x / total));
    }
    TabularMomdp::from_flat(num_states, num_actions, num_objectives, gamma, rewards, transitions)
        .expect("generated instance is valid")
        .with_name(format!("random-S{num_states}-A{num_actions}-m{num_objectives}-seed{seed}"))
}

/// Random instance whose every transition row is a unit mass.
pub fn random_deterministic_momdp(
    num_states: usize,
    num_actions: usize,
    num_objectives: usize,
    gamma: f64,
    seed: u64,
) -> TabularMomdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rewards = (0..num_states * num_actions * num_objectives).map(|_| rng.random::<f64>()).collect();
    let mut transitions = vec![0.0; num_states * num_actions * num_states];
    for pair in 0..num_states * num_actions {
        transitions[pair * num_states + rng.random_range(0..num_states)] = 1.0;
    }
    TabularMomdp::from_flat(num_states, num_actions, num_objectives, gamma, rewards, transitions)
        .expect("generated instance is valid")
        .with_name(format!("deterministic-S{num_states}-A{num_actions}-m{num_objectives}-seed{seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_valid() {
        let a = random_momdp(5, 3, 2, 0.9, 7);
        let b = random_momdp(5, 3, 2, 0.9, 7);
        assert_eq!(a, b);
        assert_ne!(a, random_momdp(5, 3, 2, 0.9, 8));
        for s in 0..5 {
            for act in 0..3 {
                assert!(a.reward(s, act).iter().all(|r| (0.0..=1.0).contains(r)));
            }
        }
    }

    #[test]
    fn deterministic_rows_are_unit_masses() {
        let m = random_deterministic_momdp(4, 2, 2, 0.8, 1);
        for s in 0..4 {
            for a in 0..2 {
                let row = m.transitions().row(s, a);
                assert_eq!(row.iter().filter(|&&p| p == 1.0).count(), 1);
            }
        }
    }
}
