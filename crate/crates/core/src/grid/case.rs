use std::ops::Range;

use super::GridError;

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
}

/// Transmission line; DC flow in p.u. is `gamma · (θ_from − θ_to)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Susceptance factor Γ(uv) in p.u./rad.
    pub gamma: f64,
    pub capacity_mw: f64,
}

impl Line {
    pub fn touches(&self, bus: usize) -> bool {
        self.from == bus || self.to == bus
    }

    pub fn other_end(&self, bus: usize) -> usize {
        if self.from == bus {
            self.to
        } else {
            self.from
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub id: String,
    pub bus: usize,
    /// D_g, $/MWh.
    pub dispatch_cost: f64,
    /// C_g, $/h while committed.
    pub commitment_cost: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// R^g, MW/h.
    pub ramp: f64,
    pub min_up: usize,
    pub min_down: usize,
    pub initially_on: bool,
    pub initial_output: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Horizon {
    pub hours: usize,
    pub window_hours: usize,
}

/// Candidate maintenance windows for one degraded generator.
#[derive(Debug, Clone, PartialEq)]
pub struct MaintenanceSpec {
    pub generator: usize,
    /// K_g^m, $ per window, one entry per window.
    pub window_costs: Vec<f64>,
    pub preferred_window: usize,
    pub max_deviation: usize,
}

impl MaintenanceSpec {
    pub const DEFAULT_MAX_DEVIATION: usize = 4;

    pub fn is_admissible(&self, window: usize) -> bool {
        window.abs_diff(self.preferred_window) <= self.max_deviation
            && window < self.window_costs.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerCase {
    pub name: String,
    pub base_mva: f64,
    pub reference_bus: usize,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    /// `demand[bus][hour]` in MW.
    pub demand: Vec<Vec<f64>>,
    pub horizon: Horizon,
    pub maintenance: Vec<MaintenanceSpec>,
}

impl PowerCase {
    pub fn hours(&self) -> usize {
        self.horizon.hours
    }

    pub fn num_windows(&self) -> usize {
        self.horizon.hours / self.horizon.window_hours.max(1)
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn generator_index(&self, id: &str) -> Option<usize> {
        self.generators.iter().position(|g| g.id == id)
    }

    pub fn maintenance_for(&self, generator: usize) -> Option<&MaintenanceSpec> {
        self.maintenance.iter().find(|m| m.generator == generator)
    }

    pub fn generators_at(&self, bus: usize) -> impl Iterator<Item = usize> + '_ {
        self.generators
            .iter()
            .enumerate()
            .filter(move |(_, g)| g.bus == bus)
            .map(|(i, _)| i)
    }

    pub fn lines_at(&self, bus: usize) -> impl Iterator<Item = usize> + '_ {
        self.lines
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.touches(bus))
            .map(|(i, _)| i)
    }

    pub fn line_label(&self, line: usize) -> String {
        let l = &self.lines[line];
        format!("{}-{}", self.buses[l.from].id, self.buses[l.to].id)
    }

    pub fn total_demand(&self, hour: usize) -> f64 {
        self.demand.iter().map(|d| d[hour]).sum()
    }

    /// Checks every structural and numeric invariant of the case.
    pub fn validate(&self) -> Result<(), GridError> {
        let nb = self.buses.len();
        if nb == 0 {
            return Err(GridError::invariant("buses", "case has no buses"));
        }
        if !(self.base_mva > 0.0) {
            return Err(GridError::invariant("base_mva", "must be positive"));
        }
        if self.reference_bus >= nb {
            return Err(GridError::invariant("reference_bus", "unknown bus"));
        }
        for (i, a) in self.buses.iter().enumerate() {
            if self.buses[..i].iter().any(|b| b.id == a.id) {
                return Err(GridError::invariant(format!("buses[{}]", a.id), "duplicate bus id"));
            }
        }
        for (i, l) in self.lines.iter().enumerate() {
            let field = format!("lines[{i}]");
            if l.from >= nb || l.to >= nb {
                return Err(GridError::invariant(field, "endpoint is not a known bus"));
            }
            if l.from == l.to {
                return Err(GridError::invariant(field, "line connects a bus to itself"));
            }
            if l.gamma == 0.0 || !l.gamma.is_finite() {
                return Err(GridError::invariant(field, "zero susceptance"));
            }
            if !(l.capacity_mw > 0.0) {
                return Err(GridError::invariant(field, "capacity must be positive"));
            }
        }
        for g in &self.generators {
            let field = format!("generators[{}]", g.id);
            if g.bus >= nb {
                return Err(GridError::invariant(field, "host bus is not a known bus"));
            }
            if !(g.p_min >= 0.0 && g.p_min <= g.p_max) {
                return Err(GridError::invariant(field, "requires 0 <= p_min <= p_max"));
            }
            if !(g.ramp > 0.0) {
                return Err(GridError::invariant(field, "ramp must be positive"));
            }
            if g.min_up < 1 || g.min_down < 1 {
                return Err(GridError::invariant(field, "min_up and min_down must be >= 1"));
            }
            if g.dispatch_cost < 0.0 || g.commitment_cost < 0.0 {
                return Err(GridError::invariant(field, "costs must be nonnegative"));
            }
            if g.initially_on && !(g.p_min..=g.p_max).contains(&g.initial_output) {
                return Err(GridError::invariant(field, "initial output outside [p_min, p_max]"));
            }
            if !g.initially_on && g.initial_output != 0.0 {
                return Err(GridError::invariant(field, "offline generator with nonzero output"));
            }
        }
        for (i, a) in self.generators.iter().enumerate() {
            if self.generators[..i].iter().any(|b| b.id == a.id) {
                return Err(GridError::invariant(format!("generators[{}]", a.id), "duplicate id"));
            }
        }
        let h = self.horizon;
        if h.hours == 0 || h.window_hours == 0 {
            return Err(GridError::invariant("horizon", "hours and window_hours must be positive"));
        }
        if !h.hours.is_multiple_of(h.window_hours) {
            return Err(GridError::NonDivisibleHorizon { hours: h.hours, window: h.window_hours });
        }
        if self.demand.len() != nb {
            return Err(GridError::invariant("demand", "one profile per bus is required"));
        }
        for (b, d) in self.demand.iter().enumerate() {
            let field = format!("demand[{}]", self.buses[b].id);
            if d.len() != h.hours {
                return Err(GridError::invariant(field, "profile length differs from horizon"));
            }
            if d.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(GridError::invariant(field, "demand must be finite and nonnegative"));
            }
        }
        let windows = self.num_windows();
        for (i, m) in self.maintenance.iter().enumerate() {
            let field = match self.generators.get(m.generator) {
                Some(g) => format!("maintenance[{}]", g.id),
                None => return Err(GridError::invariant(format!("maintenance[{i}]"), "unknown generator")),
            };
            if self.maintenance[..i].iter().any(|o| o.generator == m.generator) {
                return Err(GridError::invariant(field, "generator listed twice"));
            }
            if m.window_costs.len() != windows {
                return Err(GridError::invariant(field, "window_costs must have one entry per window"));
            }
            if m.window_costs.iter().any(|k| !k.is_finite() || *k < 0.0) {
                return Err(GridError::invariant(field, "window costs must be nonnegative"));
            }
            if !(0..windows).any(|w| m.is_admissible(w)) {
                return Err(GridError::invariant(field, "no admissible maintenance window"));
            }
        }
        Ok(())
    }
}

/// Hour ranges `T_m`, one per maintenance window, covering the horizon in order.
pub fn maintenance_windows(case: &PowerCase) -> Result<Vec<Range<usize>>, GridError> {
    let Horizon { hours, window_hours } = case.horizon;
    if window_hours == 0 || hours % window_hours != 0 {
        return Err(GridError::NonDivisibleHorizon { hours, window: window_hours });
    }
    Ok((0..hours / window_hours)
        .map(|m| m * window_hours..(m + 1) * window_hours)
        .collect())
}

/// Window index containing `hour`.
pub fn window_of(case: &PowerCase, hour: usize) -> usize {
    hour / case.horizon.window_hours
}
