use std::path::PathBuf;

use privmaint_core::consensus::ConsensusState;
use privmaint_core::grid::*;
use privmaint_core::model::*;
use privmaint_miqp::{solve_miqp, SolveLimits, SolveStatus};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

const TOY: &str = r#"
name = "toy"
[horizon]
hours = 2
window_hours = 2
[[buses]]
id = "n"
[[generators]]
id = "g"
bus = "n"
dispatch_cost = 3.0
commitment_cost = 7.0
p_min = 5.0
p_max = 20.0
ramp = 20.0
min_up = 1
min_down = 1
[[demand]]
bus = "n"
mw = [10.0, 10.0]
"#;

/// One bus, a cheap degraded unit that must be maintained once, and a backup unit.
fn maintenance_case() -> PowerCase {
    let text = r#"
name = "maint"
[horizon]
hours = 24
window_hours = 6
[[buses]]
id = "n"
[[generators]]
id = "cheap"
bus = "n"
dispatch_cost = 10.0
commitment_cost = 5.0
p_min = 0.0
p_max = 50.0
ramp = 50.0
min_up = 1
min_down = 1
[[generators]]
id = "backup"
bus = "n"
dispatch_cost = 30.0
commitment_cost = 5.0
p_min = 0.0
p_max = 50.0
ramp = 50.0
min_up = 1
min_down = 1
[[maintenance]]
generator = "cheap"
window_costs = [100.0, 40.0, 100.0, 100.0]
preferred_window = 1
"#;
    let mut case = parse_case(text).unwrap();
    case.demand[0] = vec![30.0; 24];
    case.validate().unwrap();
    case
}

fn solve_central(case: &PowerCase, phase: Phase, options: &ModelOptions) -> (RegionalModel, RegionalVariables, f64) {
    let model = build_centralized(case, phase, options).unwrap();
    let sol = solve_miqp(&model.problem, &SolveLimits::default(), None).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let vars = model.extract(&sol).unwrap();
    (model, vars, sol.objective)
}

#[test]
fn toy_schedule_matches_hand_enumeration() {
    let case = parse_case(TOY).unwrap();
    let options = ModelOptions { load_shed: false, ..ModelOptions::default() };
    // Only x = (1, 1) serves 10 MW in both hours; y = (10, 10).
    let oracle = 2.0 * (10.0 * 3.0 + 7.0);
    let (_, vars, obj) = solve_central(&case, Phase::Binary, &options);
    assert!((obj - oracle).abs() < 1e-6, "{obj} vs {oracle}");
    assert_eq!(vars.commitment[0], vec![1.0, 1.0]);
    for y in &vars.dispatch[0] {
        assert!((y - 10.0).abs() < 1e-6);
    }
    assert!((local_cost(&case, &vars) - oracle).abs() < 1e-6);
}

#[test]
fn toy_with_shed_slack_keeps_the_same_schedule() {
    let case = parse_case(TOY).unwrap();
    let (_, vars, obj) = solve_central(&case, Phase::Binary, &ModelOptions::default());
    assert!((obj - 74.0).abs() < 1e-6);
    assert!(vars.total_shed() < 1e-6);
}

#[test]
fn degraded_generator_is_maintained_in_exactly_one_window() {
    let case = maintenance_case();
    let (_, vars, _) = solve_central(&case, Phase::Binary, &ModelOptions::default());
    let z = vars.maintenance[0].as_ref().unwrap();
    assert_eq!(z.iter().filter(|&&v| v > 0.5).count(), 1);
    assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(vars.maintenance[1].is_none());
    let m = z.iter().position(|&v| v > 0.5).unwrap();
    assert_eq!(m, 1, "the cheapest window wins");
    for t in 6 * m..6 * (m + 1) {
        assert!(vars.commitment[0][t] < 0.5);
        assert!(vars.dispatch[0][t].abs() < 1e-6, "hour {t} dispatch {}", vars.dispatch[0][t]);
    }
}

#[test]
fn inadmissible_windows_cannot_be_chosen() {
    let mut case = maintenance_case();
    case.maintenance[0].window_costs = vec![0.0, 500.0, 500.0, 500.0];
    case.maintenance[0].preferred_window = 3;
    case.maintenance[0].max_deviation = 1;
    let (_, vars, _) = solve_central(&case, Phase::Binary, &ModelOptions::default());
    let z = vars.maintenance[0].as_ref().unwrap();
    assert!(z[0] < 0.5 && z[1] < 0.5);
}

#[test]
fn fig1_row_counts_match_the_formula() {
    let case = load_case(data("fig1-7bus.toml")).unwrap();
    let part = RegionPartition::from_map(&case, &load_partition_map(data("fig1-7bus.partition.toml")).unwrap()).unwrap();
    for (r, region) in part.regions().iter().enumerate() {
        let cs = ConsensusState::new(region.tie_lines.clone(), case.hours(), 1.0, 1.0, 1.0).unwrap();
        let model = build_subproblem(&case, &part, r, &cs, Phase::Binary, &ModelOptions::default()).unwrap();
        let expected = expected_row_count(
            region.generators.len(),
            region.degraded.len(),
            case.hours(),
            region.internal_lines.len(),
            region.tie_lines.len(),
            region.own_buses().len(),
        );
        assert_eq!(model.problem.num_constraints(), expected, "region {}", region.label);
        assert!(model.problem.validate().is_ok());
    }
}

#[test]
fn variable_names_follow_the_layout() {
    let case = load_case(data("fig1-7bus.toml")).unwrap();
    let part = RegionPartition::from_map(&case, &load_partition_map(data("fig1-7bus.partition.toml")).unwrap()).unwrap();
    let r = part.index_of(1).unwrap();
    let region = part.region(r);
    let cs = ConsensusState::new(region.tie_lines.clone(), case.hours(), 1.0, 1.0, 1.0).unwrap();
    let model = build_subproblem(&case, &part, r, &cs, Phase::Binary, &ModelOptions::default()).unwrap();
    let lay = &model.layout;
    let g = case.generators[lay.generators[0]].id.clone();
    assert_eq!(model.problem.variable_name(lay.x[0][3]), format!("x[{g}_3]"));
    assert_eq!(model.problem.variable_name(lay.y[0][0]), format!("y[{g}_0]"));
    let g_bus = case.bus_index("G").unwrap();
    assert_eq!(model.problem.variable_name(lay.theta_var(g_bus, 5).unwrap()), "theta[G_5]");
    assert!(lay.theta_var(case.bus_index("F").unwrap(), 0).is_none(), "F is not modelled by region 1");
}

#[test]
fn extraction_enforces_integrality_only_in_the_binary_phase() {
    let case = parse_case(TOY).unwrap();
    for phase in [Phase::Relaxed, Phase::Binary] {
        let model = build_centralized(&case, phase, &ModelOptions::default()).unwrap();
        let mut values = vec![0.0; model.problem.num_variables()];
        values[model.layout.x[0][0]] = 0.4;
        let out = model.extract_values(&values);
        match phase {
            Phase::Relaxed => assert_eq!(out.unwrap().commitment[0][0], 0.4),
            Phase::Binary => assert!(matches!(out, Err(ModelError::Integrality { .. }))),
        }
        assert!(matches!(model.extract_values(&values[1..]), Err(ModelError::SolutionShape { .. })));
    }
}

#[test]
fn local_cost_arithmetic() {
    let mut case = parse_case(TOY).unwrap();
    case.generators[0].dispatch_cost = 2.0;
    case.generators[0].commitment_cost = 5.0;
    case.generators[0].p_min = 3.0;
    let model = build_centralized(&case, Phase::Binary, &ModelOptions::default()).unwrap();
    let mut values = vec![0.0; model.problem.num_variables()];
    let off = model.extract_values(&values).unwrap();
    assert_eq!(local_cost(&case, &off), 0.0);
    values[model.layout.x[0][0]] = 1.0;
    values[model.layout.y[0][0]] = 3.0;
    let one = model.extract_values(&values).unwrap();
    assert!((local_cost(&case, &one) - 11.0).abs() < 1e-12);
}

#[test]
fn all_off_schedule_costs_only_its_maintenance() {
    let case = maintenance_case();
    let model = build_centralized(&case, Phase::Binary, &ModelOptions::default()).unwrap();
    let mut values = vec![0.0; model.problem.num_variables()];
    values[model.layout.z[0].as_ref().unwrap()[2]] = 1.0;
    let vars = model.extract_values(&values).unwrap();
    assert_eq!(local_cost(&case, &vars), 100.0);
}

#[test]
fn relaxation_bounds_the_integer_schedule() {
    let case = maintenance_case();
    let (_, _, relaxed) = solve_central(&case, Phase::Relaxed, &ModelOptions::default());
    let (_, _, binary) = solve_central(&case, Phase::Binary, &ModelOptions::default());
    assert!(relaxed <= binary + 1e-6);
}
