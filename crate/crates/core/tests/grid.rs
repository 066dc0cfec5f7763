use std::collections::BTreeSet;
use std::path::PathBuf;

use privmaint_core::grid::*;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn fig1() -> (PowerCase, RegionPartition) {
    let case = load_case(data("fig1-7bus.toml")).unwrap();
    let map = load_partition_map(data("fig1-7bus.partition.toml")).unwrap();
    let part = RegionPartition::from_map(&case, &map).unwrap();
    (case, part)
}

fn ids(case: &PowerCase, buses: &[usize]) -> BTreeSet<String> {
    buses.iter().map(|&b| case.buses[b].id.clone()).collect()
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

const TWO_BUS: &str = r#"
name = "two-bus"
reference_bus = "a"
[horizon]
hours = 24
window_hours = 6
[[buses]]
id = "a"
[[buses]]
id = "b"
[[lines]]
from = "a"
to = "b"
gamma = 5.0
capacity_mw = 50.0
"#;

#[test]
fn fig1_case_loads_with_its_lines() {
    let (case, _) = fig1();
    assert_eq!(case.buses.len(), 7);
    let labels: BTreeSet<String> = (0..case.lines.len()).map(|l| case.line_label(l)).collect();
    for l in ["B-G", "C-E", "E-F", "A-B", "D-E", "F-G"] {
        assert!(labels.contains(l), "missing {l}");
    }
    case.validate().unwrap();
}

#[test]
fn fig1_boundary_and_foreign_sets() {
    let (case, part) = fig1();
    let expect = [
        (1, ["A", "B", "C"].as_slice(), ["B", "C"].as_slice(), ["G", "E"].as_slice()),
        (2, &["D", "E"], &["E"], &["F", "C"]),
        (3, &["F", "G"], &["G", "F"], &["B", "E"]),
    ];
    for (label, own, boundary, foreign) in expect {
        let r = part.region(part.index_of(label).unwrap());
        assert_eq!(ids(&case, &r.own_buses()), set(own), "own buses of region {label}");
        assert_eq!(ids(&case, &r.boundary), set(boundary), "U of region {label}");
        assert_eq!(ids(&case, &r.foreign), set(foreign), "V of region {label}");
    }
    let r2 = part.index_of(2).unwrap();
    let allowed: BTreeSet<u32> = part.region(r2).neighbors.iter().map(|&n| part.region(n).label).collect();
    assert_eq!(allowed, BTreeSet::from([1, 3]));
}

#[test]
fn single_region_has_no_boundary() {
    let (case, _) = fig1();
    let part = RegionPartition::single(&case);
    let r = part.region(0);
    assert!(r.boundary.is_empty() && r.foreign.is_empty() && r.neighbors.is_empty());
    assert_eq!(r.own_buses().len(), 7);
}

#[test]
fn two_bus_cut_has_one_boundary_and_one_foreign_bus_per_side() {
    let case = parse_case(TWO_BUS).unwrap();
    let map = parse_partition("[regions]\na = 1\nb = 2\n").unwrap();
    let part = RegionPartition::from_map(&case, &map).unwrap();
    for r in part.regions() {
        assert_eq!(r.boundary.len(), 1);
        assert_eq!(r.foreign.len(), 1);
        assert_eq!(r.tie_lines, vec![0]);
    }
}

#[test]
fn zero_susceptance_is_rejected() {
    let text = TWO_BUS.replace("gamma = 5.0", "gamma = 0.0");
    let err = parse_case(&text).unwrap_err();
    assert!(err.to_string().contains("zero susceptance"), "{err}");
}

#[test]
fn unknown_bus_reference_is_rejected() {
    let text = TWO_BUS.replace("to = \"b\"", "to = \"z\"");
    assert!(matches!(parse_case(&text), Err(GridError::UnknownBus { .. })));
}

#[test]
fn unknown_field_is_rejected() {
    let text = TWO_BUS.replace("capacity_mw = 50.0", "capacity_mw = 50.0\nrating = 3");
    assert!(matches!(parse_case(&text), Err(GridError::Schema(_))));
}

#[test]
fn partition_must_cover_every_bus() {
    let case = parse_case(TWO_BUS).unwrap();
    let map = parse_partition("[regions]\na = 1\n").unwrap();
    assert!(matches!(RegionPartition::from_map(&case, &map), Err(GridError::UncoveredBus(_))));
}

#[test]
fn windows_split_the_horizon() {
    let case = parse_case(TWO_BUS).unwrap();
    let w = maintenance_windows(&case).unwrap();
    assert_eq!(w, vec![0..6, 6..12, 12..18, 18..24]);
    assert_eq!(window_of(&case, 13), 2);

    let week = parse_case(&TWO_BUS.replace("hours = 24", "hours = 168")).unwrap();
    assert_eq!(maintenance_windows(&week).unwrap().len(), 28);

    let odd = TWO_BUS.replace("hours = 24", "hours = 25");
    assert!(matches!(parse_case(&odd), Err(GridError::NonDivisibleHorizon { hours: 25, window: 6 })));
}

#[test]
fn toml_round_trip_preserves_every_bundled_case() {
    for name in ["fig1-7bus.toml", "ieee14.toml", "ieee14-48h.toml"] {
        let case = load_case(data(name)).unwrap();
        let again = parse_case(&case_to_toml(&case)).unwrap();
        assert_eq!(case, again, "{name}");
    }
}

#[test]
fn bundled_partitions_are_valid() {
    let case = load_case(data("ieee14.toml")).unwrap();
    for (name, regions) in [("ieee14-2region.partition.toml", 2), ("ieee14-4region.partition.toml", 4)] {
        let part = RegionPartition::from_map(&case, &load_partition_map(data(name)).unwrap()).unwrap();
        assert_eq!(part.num_regions(), regions, "{name}");
        for r in part.regions() {
            assert!(!r.tie_lines.is_empty(), "{name}: region {} is isolated", r.label);
        }
    }
}
