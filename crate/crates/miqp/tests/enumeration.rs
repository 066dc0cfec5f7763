//! Branch-and-bound against an exhaustive enumeration oracle.

use privmaint_miqp::{
    solve_miqp, solve_qp, BackendRegistry, MiqpProblem, Sense, SolveLimits, SolveStatus, Variable,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random feasible instance: a hidden point is sampled first and every row is
/// loosened so the point satisfies it.
fn random_instance(seed: u64, binaries: usize, continuous: usize) -> MiqpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = MiqpProblem::new();
    let mut hidden = Vec::new();
    for _ in 0..binaries {
        let mut v = Variable::binary().with_cost(rng.gen_range(-5.0..5.0));
        if rng.gen_bool(0.3) {
            v.quad = rng.gen_range(0.0..2.0);
        }
        p.add_variable(v);
        hidden.push(if rng.gen_bool(0.5) { 1.0 } else { 0.0 });
    }
    for _ in 0..continuous {
        let lo = rng.gen_range(-3.0..0.0);
        let hi = rng.gen_range(0.5..4.0);
        let mut v = Variable::continuous(lo, hi).with_cost(rng.gen_range(-3.0..3.0));
        if rng.gen_bool(0.5) {
            v.quad = rng.gen_range(0.0..1.5);
        }
        p.add_variable(v);
        hidden.push(rng.gen_range(lo..hi));
    }
    let n = binaries + continuous;
    let rows = rng.gen_range(1..=(n / 2 + 2));
    for _ in 0..rows {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.4) {
                coeffs.push((j, rng.gen_range(-3.0..3.0)));
            }
        }
        if coeffs.is_empty() {
            coeffs.push((rng.gen_range(0..n), 1.0));
        }
        let act: f64 = coeffs.iter().map(|&(j, a)| a * hidden[j]).sum();
        let (sense, rhs) = match rng.gen_range(0..5) {
            0 => (Sense::Eq, act),
            1 | 2 => (Sense::Le, act + rng.gen_range(0.0..2.0)),
            _ => (Sense::Ge, act - rng.gen_range(0.0..2.0)),
        };
        p.add_constraint(coeffs, sense, rhs);
    }
    p
}

/// Minimum over every binary assignment of the QP with binaries fixed.
fn enumerate(problem: &MiqpProblem) -> f64 {
    let ints = problem.integer_indices();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << ints.len()) {
        let mut fixed = problem.relaxed();
        for (bit, &j) in ints.iter().enumerate() {
            let v = f64::from((mask >> bit) & 1);
            fixed.variables[j].lower = v;
            fixed.variables[j].upper = v;
        }
        let s = solve_qp(&fixed).unwrap();
        if s.status == SolveStatus::Optimal {
            best = best.min(s.objective);
        }
    }
    best
}

#[test]
fn eight_binary_instances_match_enumeration() {
    for seed in 0..25 {
        let p = random_instance(seed, 8, 6);
        let oracle = enumerate(&p);
        let s = solve_miqp(&p, &SolveLimits::default(), None).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal, "seed {seed}");
        assert!(
            (s.objective - oracle).abs() <= 1e-6 * (1.0 + oracle.abs()),
            "seed {seed}: bnb {} vs oracle {oracle}",
            s.objective
        );
        assert!(p.max_integrality_violation(&s.values) <= 1e-6);
        assert!(p.max_violation(&s.values) <= 1e-7);
    }
}

#[test]
fn solving_twice_gives_identical_incumbents() {
    let p = random_instance(99, 10, 12);
    let a = solve_miqp(&p, &SolveLimits::default(), None).unwrap();
    let b = solve_miqp(&p, &SolveLimits::default(), None).unwrap();
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.values, b.values);
    assert_eq!(a.nodes, b.nodes);
}

#[test]
fn warm_start_does_not_change_the_optimum() {
    let p = random_instance(7, 9, 5);
    let cold = solve_miqp(&p, &SolveLimits::default(), None).unwrap();
    let warm = solve_miqp(&p, &SolveLimits::default(), Some(&cold.values)).unwrap();
    assert!((cold.objective - warm.objective).abs() <= 1e-6 * (1.0 + cold.objective.abs()));
    // A garbage warm start is repaired or ignored, never trusted blindly.
    let junk = vec![0.5; p.num_variables()];
    let repaired = solve_miqp(&p, &SolveLimits::default(), Some(&junk)).unwrap();
    assert!((cold.objective - repaired.objective).abs() <= 1e-6 * (1.0 + cold.objective.abs()));
}

#[test]
fn registry_defaults_to_bundled_and_rejects_unknown() {
    let reg = BackendRegistry::default();
    assert_eq!(reg.default_backend().name(), "bundled");
    assert!(reg.get("gurobi").is_err());
    let p = random_instance(3, 4, 3);
    let via_backend = reg.default_backend().solve(&p, &SolveLimits::default(), None).unwrap();
    let direct = solve_miqp(&p, &SolveLimits::default(), None).unwrap();
    assert_eq!(via_backend, direct);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn relaxation_bounds_the_integer_optimum(seed in 0u64..10_000, bins in 1usize..7, conts in 0usize..8) {
        let p = random_instance(seed, bins, conts);
        let relaxed = solve_qp(&p).unwrap();
        let integer = solve_miqp(&p, &SolveLimits::default(), None).unwrap();
        prop_assert_eq!(relaxed.status, SolveStatus::Optimal);
        prop_assert_eq!(integer.status, SolveStatus::Optimal);
        prop_assert!(relaxed.objective <= integer.objective + 1e-7 * (1.0 + integer.objective.abs()));
        let oracle = enumerate(&p);
        prop_assert!((integer.objective - oracle).abs() <= 1e-6 * (1.0 + oracle.abs()));
    }
}
