use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use privmaint_core::coordinator::*;
use privmaint_core::dp::{perturb_angles, Envelope, NoiseStream, NoisyAngleMessage, PrivacyConfig, ScaleTable};
use privmaint_core::grid::*;
use privmaint_core::model::{build_centralized, ModelOptions, Phase};
use privmaint_core::monitor::{ChartConfig, Verdict};
use privmaint_miqp::*;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn fig1() -> (PowerCase, RegionPartition) {
    let case = load_case(data("fig1-7bus.toml")).unwrap();
    let map = load_partition_map(data("fig1-7bus.partition.toml")).unwrap();
    let part = RegionPartition::from_map(&case, &map).unwrap();
    (case, part)
}

/// Cheap generation at `a`, load and an expensive unit at `b`, one tie line.
fn two_area() -> (PowerCase, RegionPartition) {
    let text = r#"
name = "two-area"
reference_bus = "a"
[horizon]
hours = 4
window_hours = 2
[[buses]]
id = "a"
[[buses]]
id = "b"
[[lines]]
from = "a"
to = "b"
gamma = 8.0
capacity_mw = 40.0
[[generators]]
id = "ga"
bus = "a"
dispatch_cost = 10.0
commitment_cost = 1.0
p_min = 0.0
p_max = 100.0
ramp = 100.0
min_up = 1
min_down = 1
[[generators]]
id = "gb"
bus = "b"
dispatch_cost = 25.0
commitment_cost = 1.0
p_min = 0.0
p_max = 100.0
ramp = 100.0
min_up = 1
min_down = 1
[[demand]]
bus = "a"
mw = [10.0, 12.0, 14.0, 10.0]
[[demand]]
bus = "b"
mw = [30.0, 50.0, 60.0, 35.0]
"#;
    let case = parse_case(text).unwrap();
    let map = parse_partition("[regions]\na = 1\nb = 2\n").unwrap();
    let part = RegionPartition::from_map(&case, &map).unwrap();
    (case, part)
}

fn noiseless_config(window: usize, points: u32) -> RunConfig {
    let mut cfg = RunConfig::new(PrivacyConfig::noiseless(1), ChartConfig::from_gamma(points, window, 0.0, 0, 0.1));
    cfg.rho_theta = 1_000.0;
    cfg.rho_flow = 1_000.0;
    cfg.eta = 1.0;
    cfg
}

fn noisy_config(seed: u64) -> RunConfig {
    let scale = 0.015;
    let mut cfg = RunConfig::new(
        PrivacyConfig::from_scale(scale, 1.0, 1, seed).unwrap(),
        ChartConfig::from_gamma(4, 5, scale, 1, 0.1),
    );
    cfg.rho_theta = 1_000.0;
    cfg.rho_flow = 1_000.0;
    cfg.eta = 0.997;
    cfg.max_iterations = 60;
    cfg
}

fn empty_message(sender: usize, receiver: usize, iteration: usize) -> NoisyAngleMessage {
    let cfg = PrivacyConfig::noiseless(0);
    let scales = ScaleTable::new(&cfg, &[]).unwrap();
    let mut stream = NoiseStream::new(0, sender);
    let env = Envelope { sender, receiver, iteration };
    perturb_angles(|_, _, _| 0.0, &[], 1, &scales, &cfg, &mut stream, env).unwrap()
}

#[test]
fn router_allows_only_overlay_neighbors() {
    let (_, part) = fig1();
    let mut router = Router::new(&part);
    let r2 = part.index_of(2).unwrap();
    let mut allowed: Vec<u32> = router.allowed(r2).iter().map(|&r| part.region(r).label).collect();
    allowed.sort();
    assert_eq!(allowed, vec![1, 3]);

    router.begin_iteration(1);
    assert_eq!(router.send(empty_message(r2, r2, 1)), Err(ProtocolError::SelfMessage(2)));
    let r1 = part.index_of(1).unwrap();
    router.send(empty_message(r2, r1, 1)).unwrap();
    assert!(matches!(router.send(empty_message(r2, r1, 1)), Err(ProtocolError::Duplicate { .. })));
    assert!(matches!(router.send(empty_message(r1, r2, 2)), Err(ProtocolError::WrongIteration { .. })));
    let inbox = router.deliver();
    assert_eq!(inbox[r1].len(), 1);
    assert!(inbox[r2].is_empty());
}

#[test]
fn line_overlay_rejects_skipping_a_region() {
    let text = r#"
name = "line"
reference_bus = "a"
[horizon]
hours = 1
window_hours = 1
[[buses]]
id = "a"
[[buses]]
id = "b"
[[buses]]
id = "c"
[[lines]]
from = "a"
to = "b"
gamma = 5.0
capacity_mw = 10.0
[[lines]]
from = "b"
to = "c"
gamma = 5.0
capacity_mw = 10.0
"#;
    let case = parse_case(text).unwrap();
    let part = RegionPartition::from_map(&case, &parse_partition("[regions]\na = 1\nb = 2\nc = 3\n").unwrap()).unwrap();
    let mut router = Router::new(&part);
    router.begin_iteration(1);
    let (r1, r3) = (part.index_of(1).unwrap(), part.index_of(3).unwrap());
    assert_eq!(router.send(empty_message(r1, r3, 1)), Err(ProtocolError::NonNeighbor { from: 1, to: 3 }));
}

#[test]
fn single_region_converges_after_one_block() {
    let (case, _) = two_area();
    let part = RegionPartition::single(&case);
    let cfg = noiseless_config(3, 2);
    let run = run_two_phase(&case, &part, &cfg, &BundledBackend).unwrap();
    for phase in [&run.relaxed, &run.binary] {
        assert_eq!(phase.status, PhaseStatus::Converged);
        assert_eq!(phase.iterations, 6);
        assert!(phase.trace.iter().all(|t| t.primal_residual == 0.0 && t.dual_residual == 0.0));
    }
    let central = build_centralized(&case, Phase::Binary, &ModelOptions::default()).unwrap();
    let sol = solve_miqp(&central.problem, &SolveLimits::default(), None).unwrap();
    assert!((run.objective() - sol.objective).abs() < 1e-6 * sol.objective);
}

#[test]
fn noiseless_two_area_relaxation_matches_the_centralized_lp() {
    let (case, part) = two_area();
    let cfg = noiseless_config(5, 4);
    let delta = Delta::initial(&case, &part, &cfg).unwrap();
    let deadline = Instant::now() + Duration::from_secs(120);
    let run = run_phase(&case, &part, &cfg, Phase::Relaxed, delta, &BundledBackend, deadline).unwrap();
    assert_eq!(run.status, PhaseStatus::Converged);
    let central = build_centralized(&case, Phase::Relaxed, &ModelOptions::default()).unwrap();
    let lp = solve_miqp(&central.problem, &SolveLimits::default(), None).unwrap().objective;
    assert!((run.objective - lp).abs() / lp < 5e-3, "{} vs {lp}", run.objective);
    let (f1, f2) = (&run.variables[0].flows[0], &run.variables[1].flows[0]);
    for t in 0..case.hours() {
        assert!((f1[t] - f2[t]).abs() < 1e-4, "hour {t}: {} vs {}", f1[t], f2[t]);
    }
    // Ω = 1 only when every region reported convergence in the final iteration.
    let last: Vec<_> = run.trace.iter().filter(|t| t.iteration == run.iterations).collect();
    assert_eq!(last.len(), 2);
    assert!(last.iter().all(|t| t.verdict == Verdict::Converged));
}

#[test]
fn parallel_and_sequential_runs_are_identical() {
    let (case, part) = fig1();
    let mut cfg = noisy_config(7);
    cfg.max_iterations = 12;
    let par = run_two_phase(&case, &part, &cfg, &BundledBackend).unwrap();
    cfg.execution = Execution::Sequential;
    let seq = run_two_phase(&case, &part, &cfg, &BundledBackend).unwrap();
    let again = run_two_phase(&case, &part, &cfg, &BundledBackend).unwrap();
    let a: Vec<_> = par.trace().cloned().collect();
    let b: Vec<_> = seq.trace().cloned().collect();
    let c: Vec<_> = again.trace().cloned().collect();
    assert_eq!(a, b);
    assert_eq!(b, c);
}

#[test]
fn different_seeds_change_the_trace() {
    let (case, part) = two_area();
    let a = run_two_phase(&case, &part, &noisy_config(1), &BundledBackend).unwrap();
    let b = run_two_phase(&case, &part, &noisy_config(2), &BundledBackend).unwrap();
    assert_ne!(a.relaxed.trace, b.relaxed.trace);
}

#[test]
fn binary_phase_is_integral_and_inherits_the_relaxed_state() {
    let (case, part) = two_area();
    let run = run_two_phase(&case, &part, &noisy_config(3), &BundledBackend).unwrap();
    for vars in &run.binary.variables {
        for v in vars.commitment.iter().flatten() {
            assert!(v.fract() == 0.0 || (v - v.round()).abs() < 1e-6);
        }
    }
    assert!(run.binary.trace.iter().any(|t| t.warm_start));
    let first = &run.binary.trace[0];
    assert!(first.lambda_norm > 0.0, "phase 2 starts from the phase-1 multipliers");
}

#[test]
fn tiny_budget_returns_a_partial_non_converged_run() {
    let (case, part) = fig1();
    let mut cfg = noisy_config(1);
    cfg.max_iterations = 1_000;
    cfg.wall_clock = Duration::from_millis(1);
    let run = run_two_phase(&case, &part, &cfg, &BundledBackend).unwrap();
    assert!(!run.converged());
    assert_eq!(run.relaxed.status, PhaseStatus::TimeLimit);
    assert_eq!(run.binary.status, PhaseStatus::TimeLimit);
    assert_eq!(run.relaxed.iterations, 1);
    assert_eq!(run.binary.trace.len(), part.num_regions());
}

struct FixedBackend {
    calls: AtomicUsize,
    status: SolveStatus,
}

impl MiqpBackend for FixedBackend {
    fn name(&self) -> &str {
        "fixed"
    }

    fn solve(&self, problem: &MiqpProblem, _: &SolveLimits, _: Option<&[f64]>) -> Result<MiqpSolution, SolverError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.status == SolveStatus::Infeasible {
            return Ok(MiqpSolution::infeasible(true));
        }
        Ok(MiqpSolution {
            status: self.status,
            values: vec![0.0; problem.num_variables()],
            objective: 42.0,
            bound: 42.0,
            nodes: 3,
            primal_residual: 0.0,
            infeasibility_certificate: false,
            warm_start_used: false,
        })
    }
}

#[test]
fn coordinator_consumes_backend_solutions_unchanged() {
    let (case, part) = two_area();
    let backend = FixedBackend { calls: AtomicUsize::new(0), status: SolveStatus::Optimal };
    let mut cfg = noiseless_config(1, 1);
    cfg.max_iterations = 3;
    let delta = Delta::initial(&case, &part, &cfg).unwrap();
    let deadline = Instant::now() + Duration::from_secs(60);
    let run = run_phase(&case, &part, &cfg, Phase::Binary, delta, &backend, deadline).unwrap();
    assert_eq!(backend.calls.load(Ordering::SeqCst), 2 * run.iterations);
    assert!(run.trace.iter().all(|t| t.objective == 42.0 && t.nodes == 3));
    for vars in &run.variables {
        assert!(vars.dispatch.iter().flatten().all(|&y| y == 0.0));
        assert!(vars.angles.iter().flatten().all(|&a| a == 0.0));
    }
}

#[test]
fn infeasible_subproblem_is_fatal_with_its_location() {
    let (case, part) = two_area();
    let backend = FixedBackend { calls: AtomicUsize::new(0), status: SolveStatus::Infeasible };
    let cfg = noiseless_config(1, 1);
    let err = run_two_phase(&case, &part, &cfg, &backend).unwrap_err();
    assert!(matches!(err, CoordinatorError::Infeasible { iteration: 1, .. }), "{err}");
}
