use evi_core::envelope::{
    apply_operator, envelope_value_iteration, exact_evi, fixed_step_evi, initial_moq, model_based_evi, moq_distance,
    StopRule,
};
use evi_core::generate::{random_deterministic_momdp, random_momdp};
use evi_core::moq::{MoqShape, MoqTable};
use evi_core::oracles::{assemble_reference_moq, scalar_value_iteration};
use evi_core::preference::{make_simplex_grid, PreferenceSet};
use evi_core::sampling::{build_empirical_model, TabularSimulator};
use evi_core::schedule::compute_schedule;
use evi_core::TabularMomdp;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_table(shape: MoqShape, hi: f64, seed: u64) -> MoqTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MoqTable::from_values(shape, (0..shape.len()).map(|_| rng.random::<f64>() * hi).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operator_contracts_on_random_pairs(
        instance in 0u64..1000,
        pair in 0u64..1000,
        gamma in 0.0f64..0.99,
        empirical in any::<bool>(),
    ) {
        let m = random_momdp(4, 3, 2, gamma, instance);
        let prefs = make_simplex_grid(2, 6).unwrap();
        let shape = MoqShape::of(&m, &prefs);
        let emp = build_empirical_model(&m, &TabularSimulator::of(&m), 50, instance).unwrap();
        let dynamics = if empirical { emp.p_hat() } else { m.transitions() };
        let hi = 1.0 / (1.0 - gamma);
        let q = random_table(shape, hi, pair);
        let qp = random_table(shape, hi, pair + 10_000);
        let before = moq_distance(&q, &qp, &prefs).unwrap();
        let after = moq_distance(
            &apply_operator(&q, &m, dynamics, &prefs).unwrap(),
            &apply_operator(&qp, &m, dynamics, &prefs).unwrap(),
            &prefs,
        ).unwrap();
        prop_assert!(after <= gamma * before + 1e-10, "after {after} before {before}");
    }

    #[test]
    fn pseudometric_axioms(a in 0u64..10_000, b in 0u64..10_000, c in 0u64..10_000) {
        let prefs = make_simplex_grid(3, 3).unwrap();
        let shape = MoqShape { num_states: 3, num_actions: 2, num_prefs: prefs.len(), num_objectives: 3 };
        let (qa, qb, qc) = (random_table(shape, 5.0, a), random_table(shape, 5.0, b), random_table(shape, 5.0, c));
        let d = |x: &MoqTable, y: &MoqTable| moq_distance(x, y, &prefs).unwrap();
        prop_assert_eq!(d(&qa, &qa), 0.0);
        prop_assert!((d(&qa, &qb) - d(&qb, &qa)).abs() <= 1e-10);
        prop_assert!(d(&qa, &qb) <= d(&qa, &qc) + d(&qc, &qb) + 1e-10);
    }

    #[test]
    fn exact_iterates_contract_towards_fixed_point(seed in 0u64..500, gamma in 0.3f64..0.95) {
        let m = random_momdp(4, 2, 2, gamma, seed);
        let prefs = make_simplex_grid(2, 5).unwrap();
        let (q_star, _) = exact_evi(&m, &prefs, StopRule::new(gamma, 1e-12)).unwrap();
        let (_, trace) = fixed_step_evi(&m, m.transitions(), &prefs, 40, Some(&q_star)).unwrap();
        let d0 = moq_distance(&initial_moq(MoqShape::of(&m, &prefs), gamma), &q_star, &prefs).unwrap();
        let mut prev = d0;
        for row in &trace.rows {
            prop_assert!(row.distance <= gamma * prev + 1e-10);
            prop_assert!(row.distance <= gamma.powi(row.t as i32) / (1.0 - gamma) + 1e-9);
            prev = row.distance;
        }
    }
}

// The pseudometric only sees w^T Q(s,a;w), while the filter reads every
// Q(s,a;w'). Tables that agree on the diagonal can therefore separate after
// one backup: contraction needs the diagonal to dominate, as it does along
// any iteration started from the optimistic table.
#[test]
fn zero_distance_pairs_can_separate_off_the_diagonal() {
    let m = TabularMomdp::from_flat(1, 1, 2, 0.5, vec![0.0, 0.0], vec![1.0]).unwrap();
    let prefs = PreferenceSet::new(2, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let shape = MoqShape::of(&m, &prefs);
    let q = MoqTable::from_values(shape, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
    let qp = MoqTable::from_values(shape, vec![0.0, 0.0, 0.0, 0.0]).unwrap();
    assert_eq!(moq_distance(&q, &qp, &prefs).unwrap(), 0.0);
    let tq = apply_operator(&q, &m, m.transitions(), &prefs).unwrap();
    let tqp = apply_operator(&qp, &m, m.transitions(), &prefs).unwrap();
    assert_eq!(moq_distance(&tq, &tqp, &prefs).unwrap(), 0.5);
}

#[test]
fn diagonal_dominates_along_iteration() {
    let m = random_momdp(5, 3, 2, 0.9, 31);
    let prefs = make_simplex_grid(2, 10).unwrap();
    let mut q = initial_moq(MoqShape::of(&m, &prefs), 0.9);
    for _ in 0..30 {
        q = apply_operator(&q, &m, m.transitions(), &prefs).unwrap();
        for s in 0..5 {
            for a in 0..3 {
                for (w, weight) in prefs.iter().enumerate() {
                    let diag = q.scalarized(&prefs, s, a, w);
                    for wp in 0..prefs.len() {
                        let off: f64 = weight.iter().zip(q.get(s, a, wp)).map(|(x, y)| x * y).sum();
                        assert!(off <= diag + 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn reference_moq_is_a_fixed_point() {
    for seed in 0..5 {
        let m = random_momdp(2, 2, 2, 0.9, seed);
        let prefs = make_simplex_grid(2, 10).unwrap();
        let q_star = assemble_reference_moq(&m, &prefs, 1e-13).unwrap();
        let tq = apply_operator(&q_star, &m, m.transitions(), &prefs).unwrap();
        assert!(tq.max_abs_diff(&q_star).unwrap() <= 1e-10);
        assert!(moq_distance(&tq, &q_star, &prefs).unwrap() <= 1e-10);
    }
}

#[test]
fn single_objective_exact_evi_matches_scalar_vi() {
    let m = random_momdp(5, 4, 1, 0.95, 3);
    let prefs = make_simplex_grid(1, 1).unwrap();
    let (q, _) = exact_evi(&m, &prefs, StopRule::new(0.95, 1e-11)).unwrap();
    let scalar = scalar_value_iteration(&m, &[1.0], 1e-11).unwrap();
    for s in 0..5 {
        for a in 0..4 {
            assert!((q.get(s, a, 0)[0] - scalar.get(s, a)).abs() <= 1e-9);
        }
    }
}

#[test]
fn scalarization_consistency_on_three_objectives() {
    let m = random_momdp(4, 3, 3, 0.8, 17);
    let prefs = make_simplex_grid(3, 4).unwrap();
    let (q, _) = exact_evi(&m, &prefs, StopRule::default_for(0.8)).unwrap();
    for (w, weight) in prefs.iter().enumerate() {
        let scalar = scalar_value_iteration(&m, weight, 1e-11).unwrap();
        for s in 0..4 {
            for a in 0..3 {
                assert!((q.scalarized(&prefs, s, a, w) - scalar.get(s, a)).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn deterministic_dynamics_make_sampling_exact() {
    let m = random_deterministic_momdp(5, 3, 2, 0.9, 4);
    let prefs = make_simplex_grid(2, 10).unwrap();
    let schedule = compute_schedule(0.1, 0.1, 2, 5, 3, 0.9).unwrap().with_overrides(Some(3), None);
    let (q, emp, trace) = model_based_evi(&m, &TabularSimulator::of(&m), &schedule, &prefs, 8).unwrap();
    assert_eq!(emp.p_hat(), m.transitions());
    assert_eq!(trace.len(), schedule.iterations);
    let (q_exact, _) = fixed_step_evi(&m, m.transitions(), &prefs, schedule.iterations, None).unwrap();
    assert_eq!(q, q_exact);
}

#[test]
fn model_based_runs_exactly_t_iterations_and_is_seeded() {
    let m = random_momdp(4, 2, 2, 0.9, 2);
    let prefs = make_simplex_grid(2, 4).unwrap();
    let schedule = compute_schedule(0.5, 0.5, 2, 4, 2, 0.9).unwrap().with_overrides(Some(200), Some(7));
    let sim = TabularSimulator::of(&m);
    let (q1, e1, t1) = model_based_evi(&m, &sim, &schedule, &prefs, 3).unwrap();
    let (q2, e2, _) = model_based_evi(&m, &sim, &schedule, &prefs, 3).unwrap();
    assert_eq!(t1.len(), 7);
    assert_eq!((q1, e1), (q2, e2));
    let empty = schedule.with_overrides(Some(0), None);
    assert!(model_based_evi(&m, &sim, &empty, &prefs, 3).is_err());
}

#[test]
fn empirical_iterates_stay_within_geometric_bound() {
    let m = random_momdp(5, 3, 2, 0.9, 40);
    let prefs = make_simplex_grid(2, 10).unwrap();
    for seed in 0..5 {
        let emp = build_empirical_model(&m, &TabularSimulator::of(&m), 1000, seed).unwrap();
        let (q_hat_star, _) =
            envelope_value_iteration(&m, emp.p_hat(), &prefs, StopRule::new(0.9, 1e-12), None).unwrap();
        let (_, trace) = fixed_step_evi(&m, emp.p_hat(), &prefs, 60, Some(&q_hat_star)).unwrap();
        for row in trace.rows {
            assert!(row.distance <= 0.9f64.powi(row.t as i32) / 0.1 + 1e-9);
        }
    }
}

#[test]
fn iterates_stay_in_value_range() {
    let m = random_momdp(5, 3, 2, 0.9, 8);
    let prefs = make_simplex_grid(2, 10).unwrap();
    let (_, trace) = fixed_step_evi(&m, m.transitions(), &prefs, 1, None).unwrap();
    assert_eq!(trace.len(), 1);
    let mut q = initial_moq(MoqShape::of(&m, &prefs), 0.9);
    for _ in 0..50 {
        q = apply_operator(&q, &m, m.transitions(), &prefs).unwrap();
        assert!(q.values().iter().all(|&v| (0.0..=10.0 + 1e-12).contains(&v)));
    }
}
