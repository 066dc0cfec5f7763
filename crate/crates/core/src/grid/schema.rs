//! TOML case and partition file formats.
//!
//! Unknown fields are rejected everywhere. See `docs/case-format.md` for the
//! field reference.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::case::{Bus, Generator, Horizon, Line, MaintenanceSpec, PowerCase};
use super::GridError;

fn default_base_mva() -> f64 {
    100.0
}

fn default_deviation() -> usize {
    MaintenanceSpec::DEFAULT_MAX_DEVIATION
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub name: String,
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_bus: Option<String>,
    pub horizon: HorizonSection,
    pub buses: Vec<BusEntry>,
    #[serde(default)]
    pub lines: Vec<LineEntry>,
    #[serde(default)]
    pub generators: Vec<GeneratorEntry>,
    #[serde(default)]
    pub demand: Vec<DemandEntry>,
    #[serde(default)]
    pub maintenance: Vec<MaintenanceEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    pub hours: usize,
    pub window_hours: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BusEntry {
    pub id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LineEntry {
    pub from: String,
    pub to: String,
    pub gamma: f64,
    pub capacity_mw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeneratorEntry {
    pub id: String,
    pub bus: String,
    pub dispatch_cost: f64,
    pub commitment_cost: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub ramp: f64,
    pub min_up: usize,
    pub min_down: usize,
    #[serde(default, skip_serializing_if = "is_false")]
    pub initially_on: bool,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub initial_output: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DemandEntry {
    pub bus: String,
    pub mw: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MaintenanceEntry {
    pub generator: String,
    pub window_costs: Vec<f64>,
    pub preferred_window: usize,
    #[serde(default = "default_deviation")]
    pub max_deviation: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PartitionFile {
    /// bus id → region label
    pub regions: BTreeMap<String, u32>,
}

impl CaseFile {
    pub fn into_case(self) -> Result<PowerCase, GridError> {
        let buses: Vec<Bus> = self.buses.into_iter().map(|b| Bus { id: b.id }).collect();
        let find = |id: &str, field: &str| {
            buses
                .iter()
                .position(|b| b.id == id)
                .ok_or_else(|| GridError::UnknownBus { field: field.to_string(), bus: id.to_string() })
        };
        let reference_bus = match &self.reference_bus {
            Some(id) => find(id, "reference_bus")?,
            None => 0,
        };
        let mut lines = Vec::with_capacity(self.lines.len());
        for (i, l) in self.lines.iter().enumerate() {
            let field = format!("lines[{i}]");
            lines.push(Line {
                from: find(&l.from, &field)?,
                to: find(&l.to, &field)?,
                gamma: l.gamma,
                capacity_mw: l.capacity_mw,
            });
        }
        let mut generators = Vec::with_capacity(self.generators.len());
        for g in &self.generators {
            generators.push(Generator {
                id: g.id.clone(),
                bus: find(&g.bus, &format!("generators[{}]", g.id))?,
                dispatch_cost: g.dispatch_cost,
                commitment_cost: g.commitment_cost,
                p_min: g.p_min,
                p_max: g.p_max,
                ramp: g.ramp,
                min_up: g.min_up,
                min_down: g.min_down,
                initially_on: g.initially_on,
                initial_output: g.initial_output,
            });
        }
        let hours = self.horizon.hours;
        let mut demand = vec![vec![0.0; hours]; buses.len()];
        let mut seen = vec![false; buses.len()];
        for d in &self.demand {
            let field = format!("demand[{}]", d.bus);
            let b = find(&d.bus, &field)?;
            if seen[b] {
                return Err(GridError::invariant(field, "bus listed twice"));
            }
            seen[b] = true;
            if d.mw.len() != hours {
                return Err(GridError::invariant(field, "profile length differs from horizon"));
            }
            demand[b] = d.mw.clone();
        }
        let mut maintenance = Vec::with_capacity(self.maintenance.len());
        for m in &self.maintenance {
            let generator = generators.iter().position(|g| g.id == m.generator).ok_or_else(|| {
                GridError::invariant(format!("maintenance[{}]", m.generator), "unknown generator")
            })?;
            maintenance.push(MaintenanceSpec {
                generator,
                window_costs: m.window_costs.clone(),
                preferred_window: m.preferred_window,
                max_deviation: m.max_deviation,
            });
        }
        let case = PowerCase {
            name: self.name,
            base_mva: self.base_mva,
            reference_bus,
            buses,
            lines,
            generators,
            demand,
            horizon: Horizon { hours, window_hours: self.horizon.window_hours },
            maintenance,
        };
        case.validate()?;
        Ok(case)
    }

    pub fn from_case(case: &PowerCase) -> CaseFile {
        let bus = |i: usize| case.buses[i].id.clone();
        CaseFile {
            name: case.name.clone(),
            base_mva: case.base_mva,
            reference_bus: Some(bus(case.reference_bus)),
            horizon: HorizonSection {
                hours: case.horizon.hours,
                window_hours: case.horizon.window_hours,
            },
            buses: case.buses.iter().map(|b| BusEntry { id: b.id.clone() }).collect(),
            lines: case
                .lines
                .iter()
                .map(|l| LineEntry {
                    from: bus(l.from),
                    to: bus(l.to),
                    gamma: l.gamma,
                    capacity_mw: l.capacity_mw,
                })
                .collect(),
            generators: case
                .generators
                .iter()
                .map(|g| GeneratorEntry {
                    id: g.id.clone(),
                    bus: bus(g.bus),
                    dispatch_cost: g.dispatch_cost,
                    commitment_cost: g.commitment_cost,
                    p_min: g.p_min,
                    p_max: g.p_max,
                    ramp: g.ramp,
                    min_up: g.min_up,
                    min_down: g.min_down,
                    initially_on: g.initially_on,
                    initial_output: g.initial_output,
                })
                .collect(),
            demand: case
                .demand
                .iter()
                .enumerate()
                .filter(|(_, d)| d.iter().any(|v| *v != 0.0))
                .map(|(b, d)| DemandEntry { bus: bus(b), mw: d.clone() })
                .collect(),
            maintenance: case
                .maintenance
                .iter()
                .map(|m| MaintenanceEntry {
                    generator: case.generators[m.generator].id.clone(),
                    window_costs: m.window_costs.clone(),
                    preferred_window: m.preferred_window,
                    max_deviation: m.max_deviation,
                })
                .collect(),
        }
    }
}

pub fn parse_case(text: &str) -> Result<PowerCase, GridError> {
    let file: CaseFile = toml::from_str(text).map_err(|e| GridError::Schema(e.to_string()))?;
    file.into_case()
}

pub fn load_case(path: impl AsRef<Path>) -> Result<PowerCase, GridError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| GridError::Io(format!("{}: {e}", path.display())))?;
    parse_case(&text)
}

pub fn case_to_toml(case: &PowerCase) -> String {
    toml::to_string(&CaseFile::from_case(case)).expect("case file serializes")
}

pub fn parse_partition(text: &str) -> Result<BTreeMap<String, u32>, GridError> {
    let file: PartitionFile = toml::from_str(text).map_err(|e| GridError::Schema(e.to_string()))?;
    Ok(file.regions)
}

pub fn load_partition_map(path: impl AsRef<Path>) -> Result<BTreeMap<String, u32>, GridError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| GridError::Io(format!("{}: {e}", path.display())))?;
    parse_partition(&text)
}
