//! Regional mixed-integer model: commitment, dispatch, maintenance, DC flow,
//! and the augmented-Lagrangian coupling terms on tie lines.
//!
//! Angles are in radians, tie-line flows in p.u. on the case base, and
//! generation and demand in MW.

use privmaint_miqp::{MiqpProblem, MiqpSolution, Sense, SolverError, Variable};
use thiserror::Error;

use crate::consensus::{ConsensusState, Endpoint};
use crate::grid::{maintenance_windows, window_of, PowerCase, RegionPartition};

/// Integer variables must lie this close to 0 or 1 in a binary-phase solution.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Commitment and maintenance relaxed to [0, 1].
    Relaxed,
    /// Commitment and maintenance binary.
    Binary,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Relaxed => "relaxed",
            Phase::Binary => "binary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("region {region}: consensus state does not match the region ({detail})")]
    MissingConsensus { region: u32, detail: String },
    #[error("region {region}: {name} = {value} is not integral")]
    Integrality { region: u32, name: String, value: f64 },
    #[error("region {region}: demand cannot be served without load-shed slack")]
    Unservable { region: u32 },
    #[error("region {region}: solution has {got} values for {expected} variables")]
    SolutionShape { region: u32, got: usize, expected: usize },
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOptions {
    /// Adds the nonnegative load-shed slack ψ at every own bus.
    pub load_shed: bool,
    /// c_ψ, $/MWh.
    pub load_shed_cost: f64,
    /// Uses λ|θ−θ̄| and φ|f−f̄| instead of the signed linear terms.
    pub abs_dual_term: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions { load_shed: true, load_shed_cost: 1e4, abs_dual_term: false }
    }
}

/// Variable indices of one regional model.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub region: usize,
    pub label: u32,
    pub phase: Phase,
    pub hours: usize,
    pub generators: Vec<usize>,
    pub x: Vec<Vec<usize>>,
    pub y: Vec<Vec<usize>>,
    pub start_up: Vec<Vec<usize>>,
    pub shut_down: Vec<Vec<usize>>,
    /// Maintenance indicators per window, for degraded generators only.
    pub z: Vec<Option<Vec<usize>>>,
    /// I_r ∪ U_r ∪ V_r in ascending order.
    pub buses: Vec<usize>,
    pub theta: Vec<Vec<usize>>,
    pub tie_lines: Vec<usize>,
    pub flow: Vec<Vec<usize>>,
    /// I_r ∪ U_r in ascending order.
    pub own_buses: Vec<usize>,
    pub shed: Option<Vec<Vec<usize>>>,
}

impl Layout {
    pub fn theta_var(&self, bus: usize, hour: usize) -> Option<usize> {
        let i = self.buses.binary_search(&bus).ok()?;
        Some(self.theta[i][hour])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionalModel {
    pub problem: MiqpProblem,
    pub layout: Layout,
}

/// Exact row count of a regional model built with default options.
///
/// `degraded` generators each add one row per hour (commitment blocked
/// during maintenance) plus the one-window assignment row; every generator
/// adds eight rows per hour (capacity, transitions, minimum up/down, ramps).
pub fn expected_row_count(
    generators: usize,
    degraded: usize,
    hours: usize,
    internal_lines: usize,
    tie_lines: usize,
    own_buses: usize,
) -> usize {
    degraded * hours + 8 * generators * hours + tie_lines * hours + 2 * internal_lines * hours
        + own_buses * hours
        + degraded
}

/// Builds region `region`'s subproblem for the current consensus values.
pub fn build_subproblem(
    case: &PowerCase,
    partition: &RegionPartition,
    region: usize,
    consensus: &ConsensusState,
    phase: Phase,
    options: &ModelOptions,
) -> Result<RegionalModel, ModelError> {
    let reg = partition.region(region);
    let hours = case.hours();
    if consensus.tie_lines() != reg.tie_lines.as_slice() {
        return Err(ModelError::MissingConsensus {
            region: reg.label,
            detail: format!("tie lines {:?} vs {:?}", consensus.tie_lines(), reg.tie_lines),
        });
    }
    if consensus.hours() != hours {
        return Err(ModelError::MissingConsensus {
            region: reg.label,
            detail: format!("{} hours vs {hours}", consensus.hours()),
        });
    }
    let own_demand: f64 = reg.own_buses().iter().flat_map(|&b| case.demand[b].iter()).sum();
    if !options.load_shed && reg.generators.is_empty() && reg.tie_lines.is_empty() && own_demand > 0.0
    {
        return Err(ModelError::Unservable { region: reg.label });
    }
    let windows = maintenance_windows(case)?;
    let base = case.base_mva;
    let integer = phase == Phase::Binary;

    let mut p = MiqpProblem::new();
    let add = |p: &mut MiqpProblem, var: Variable, name: String| {
        p.names.push(name);
        p.add_variable(var)
    };
    let gid = |g: usize| case.generators[g].id.clone();
    let bid = |b: usize| case.buses[b].id.clone();
    let commit_var = || Variable { integer, ..Variable::continuous(0.0, 1.0) };

    let mut layout = Layout {
        region,
        label: reg.label,
        phase,
        hours,
        generators: reg.generators.clone(),
        x: Vec::new(),
        y: Vec::new(),
        start_up: Vec::new(),
        shut_down: Vec::new(),
        z: Vec::new(),
        buses: reg.modelled_buses(),
        theta: Vec::new(),
        tie_lines: reg.tie_lines.clone(),
        flow: Vec::new(),
        own_buses: reg.own_buses(),
        shed: None,
    };

    for &g in &reg.generators {
        let gen = &case.generators[g];
        let xs = (0..hours)
            .map(|t| add(&mut p, commit_var().with_cost(gen.commitment_cost), format!("x[{}_{t}]", gid(g))))
            .collect();
        let ys = (0..hours)
            .map(|t| {
                add(&mut p, Variable::continuous(0.0, gen.p_max).with_cost(gen.dispatch_cost), format!("y[{}_{t}]", gid(g)))
            })
            .collect();
        let ups = (0..hours)
            .map(|t| add(&mut p, Variable::continuous(0.0, 1.0), format!("su[{}_{t}]", gid(g))))
            .collect();
        let downs = (0..hours)
            .map(|t| add(&mut p, Variable::continuous(0.0, 1.0), format!("sd[{}_{t}]", gid(g))))
            .collect();
        layout.x.push(xs);
        layout.y.push(ys);
        layout.start_up.push(ups);
        layout.shut_down.push(downs);
        let z = case.maintenance_for(g).map(|m| {
            (0..windows.len())
                .map(|w| {
                    let mut v = commit_var().with_cost(m.window_costs[w]);
                    if !m.is_admissible(w) {
                        v.upper = 0.0;
                    }
                    add(&mut p, v, format!("z[{}_{w}]", gid(g)))
                })
                .collect()
        });
        layout.z.push(z);
    }

    let anchor = if partition.region_of(case.reference_bus) == region {
        Some(case.reference_bus)
    } else if reg.tie_lines.is_empty() {
        layout.own_buses.first().copied()
    } else {
        None
    };
    for &b in &layout.buses {
        let row = (0..hours)
            .map(|t| {
                let v = if Some(b) == anchor { Variable::continuous(0.0, 0.0) } else { Variable::free() };
                add(&mut p, v, format!("theta[{}_{t}]", bid(b)))
            })
            .collect();
        layout.theta.push(row);
    }
    for &l in &reg.tie_lines {
        let line = &case.lines[l];
        let cap = line.capacity_mw / base;
        let row = (0..hours)
            .map(|t| {
                add(&mut p, Variable::continuous(-cap, cap), format!("f[{}_{}_{t}]", bid(line.from), bid(line.to)))
            })
            .collect();
        layout.flow.push(row);
    }
    if options.load_shed {
        let rows = layout
            .own_buses
            .iter()
            .map(|&b| {
                (0..hours)
                    .map(|t| {
                        let v = Variable::continuous(0.0, case.demand[b][t]).with_cost(options.load_shed_cost);
                        add(&mut p, v, format!("psi[{}_{t}]", bid(b)))
                    })
                    .collect()
            })
            .collect();
        layout.shed = Some(rows);
    }

    // Commitment blocked during the maintenance window containing each hour.
    for (gi, z) in layout.z.iter().enumerate() {
        if let Some(z) = z {
            for t in 0..hours {
                let m = window_of(case, t);
                p.add_constraint(vec![(layout.x[gi][t], 1.0), (z[m], 1.0)], Sense::Le, 1.0);
            }
        }
    }
    for (gi, &g) in layout.generators.iter().enumerate() {
        let gen = &case.generators[g];
        let (xs, ys, ups, downs) = (&layout.x[gi], &layout.y[gi], &layout.start_up[gi], &layout.shut_down[gi]);
        let x_prev = if gen.initially_on { 1.0 } else { 0.0 };
        for t in 0..hours {
            p.add_constraint(vec![(ys[t], 1.0), (xs[t], -gen.p_max)], Sense::Le, 0.0);
            p.add_constraint(vec![(xs[t], gen.p_min), (ys[t], -1.0)], Sense::Le, 0.0);
        }
        for t in 0..hours {
            if t == 0 {
                p.add_constraint(vec![(xs[0], 1.0), (ups[0], -1.0)], Sense::Le, x_prev);
                p.add_constraint(vec![(xs[0], -1.0), (downs[0], -1.0)], Sense::Le, -x_prev);
            } else {
                p.add_constraint(vec![(xs[t], 1.0), (xs[t - 1], -1.0), (ups[t], -1.0)], Sense::Le, 0.0);
                p.add_constraint(vec![(xs[t - 1], 1.0), (xs[t], -1.0), (downs[t], -1.0)], Sense::Le, 0.0);
            }
        }
        for t in 0..hours {
            let lo_up = (t + 1).saturating_sub(gen.min_up);
            let mut up: Vec<(usize, f64)> = (lo_up..=t).map(|i| (ups[i], 1.0)).collect();
            up.push((xs[t], -1.0));
            p.add_constraint(up, Sense::Le, 0.0);
            let lo_down = (t + 1).saturating_sub(gen.min_down);
            let mut down: Vec<(usize, f64)> = (lo_down..=t).map(|i| (downs[i], 1.0)).collect();
            down.push((xs[t], 1.0));
            p.add_constraint(down, Sense::Le, 1.0);
        }
        for t in 0..hours {
            if t == 0 {
                p.add_constraint(vec![(ys[0], 1.0)], Sense::Le, gen.ramp + gen.initial_output);
                p.add_constraint(vec![(ys[0], -1.0)], Sense::Le, gen.ramp - gen.initial_output);
            } else {
                p.add_constraint(vec![(ys[t], 1.0), (ys[t - 1], -1.0)], Sense::Le, gen.ramp);
                p.add_constraint(vec![(ys[t - 1], 1.0), (ys[t], -1.0)], Sense::Le, gen.ramp);
            }
        }
    }
    let theta = |layout: &Layout, b: usize, t: usize| layout.theta_var(b, t).expect("modelled bus");
    for (slot, &l) in layout.tie_lines.iter().enumerate() {
        let line = &case.lines[l];
        for t in 0..hours {
            p.add_constraint(
                vec![
                    (theta(&layout, line.from, t), line.gamma),
                    (theta(&layout, line.to, t), -line.gamma),
                    (layout.flow[slot][t], -1.0),
                ],
                Sense::Eq,
                0.0,
            );
        }
    }
    for &l in &reg.internal_lines {
        let line = &case.lines[l];
        let cap = line.capacity_mw / base;
        for t in 0..hours {
            let coeffs =
                vec![(theta(&layout, line.from, t), line.gamma), (theta(&layout, line.to, t), -line.gamma)];
            p.add_constraint(coeffs.clone(), Sense::Le, cap);
            p.add_constraint(coeffs, Sense::Ge, -cap);
        }
    }
    // Nodal balance in MW: generation + shed − base·(net outflow) = demand.
    for (oi, &b) in layout.own_buses.iter().enumerate() {
        for t in 0..hours {
            let mut coeffs: Vec<(usize, f64)> = Vec::new();
            for (gi, &g) in layout.generators.iter().enumerate() {
                if case.generators[g].bus == b {
                    coeffs.push((layout.y[gi][t], 1.0));
                }
            }
            if let Some(shed) = &layout.shed {
                coeffs.push((shed[oi][t], 1.0));
            }
            for &l in &reg.internal_lines {
                let line = &case.lines[l];
                if line.touches(b) {
                    let other = line.other_end(b);
                    coeffs.push((theta(&layout, b, t), -base * line.gamma));
                    coeffs.push((theta(&layout, other, t), base * line.gamma));
                }
            }
            for (slot, &l) in layout.tie_lines.iter().enumerate() {
                let line = &case.lines[l];
                if line.from == b {
                    coeffs.push((layout.flow[slot][t], -base));
                } else if line.to == b {
                    coeffs.push((layout.flow[slot][t], base));
                }
            }
            p.add_constraint(coeffs, Sense::Eq, case.demand[b][t]);
        }
    }
    for z in layout.z.iter().flatten() {
        p.add_constraint(z.iter().map(|&j| (j, 1.0)).collect(), Sense::Eq, 1.0);
    }

    add_coupling_terms(case, &mut p, &layout, consensus, options);
    Ok(RegionalModel { problem: p, layout })
}

/// Adds dual and proximal terms for every tie-line endpoint angle and flow.
fn add_coupling_terms(
    case: &PowerCase,
    p: &mut MiqpProblem,
    layout: &Layout,
    consensus: &ConsensusState,
    options: &ModelOptions,
) {
    let rho_t = consensus.rho_theta;
    let rho_f = consensus.rho_flow;
    let couple = |p: &mut MiqpProblem, j: usize, mult: f64, target: f64, rho: f64, tag: String| {
        // ρ/2·(v − target)² expanded into quad, linear, and constant parts.
        p.variables[j].quad += 0.5 * rho;
        p.variables[j].cost -= rho * target;
        p.objective_offset += 0.5 * rho * target * target;
        if options.abs_dual_term {
            let weight = mult.max(0.0);
            if weight > 0.0 {
                let s = p.add_variable(Variable::continuous(0.0, f64::INFINITY).with_cost(weight));
                p.names.push(format!("abs_{tag}"));
                p.add_constraint(vec![(j, 1.0), (s, -1.0)], Sense::Le, target);
                p.add_constraint(vec![(j, -1.0), (s, -1.0)], Sense::Le, -target);
            }
        } else {
            p.variables[j].cost += mult;
            p.objective_offset -= mult * target;
        }
    };
    for (slot, &l) in layout.tie_lines.iter().enumerate() {
        let line = &case.lines[l];
        for end in Endpoint::BOTH {
            let bus = if end == Endpoint::From { line.from } else { line.to };
            for t in 0..layout.hours {
                let rec = consensus.angle(slot, end, t);
                let j = layout.theta_var(bus, t).expect("tie-line endpoint is modelled");
                couple(p, j, rec.multiplier, rec.consensus, rho_t, format!("theta[{l}_{}_{t}]", end.index()));
            }
        }
        for t in 0..layout.hours {
            let rec = consensus.flow(slot, t);
            couple(p, layout.flow[slot][t], rec.multiplier, rec.consensus, rho_f, format!("f[{l}_{t}]"));
        }
    }
}

/// Whole-network model without coupling terms, as solved by a single operator.
pub fn build_centralized(
    case: &PowerCase,
    phase: Phase,
    options: &ModelOptions,
) -> Result<RegionalModel, ModelError> {
    let single = RegionPartition::single(case);
    let consensus = ConsensusState::new(Vec::new(), case.hours(), 1.0, 1.0, 1.0)
        .expect("default consensus parameters are valid");
    build_subproblem(case, &single, 0, &consensus, phase, options)
}

/// Named decision values of one regional solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionalVariables {
    pub region: usize,
    pub phase: Phase,
    pub generators: Vec<usize>,
    /// `commitment[g][t]`, indexed like `generators`.
    pub commitment: Vec<Vec<f64>>,
    pub dispatch: Vec<Vec<f64>>,
    pub start_up: Vec<Vec<f64>>,
    pub shut_down: Vec<Vec<f64>>,
    pub maintenance: Vec<Option<Vec<f64>>>,
    pub buses: Vec<usize>,
    /// `angles[i][t]` for `buses[i]`, radians.
    pub angles: Vec<Vec<f64>>,
    pub tie_lines: Vec<usize>,
    /// `flows[slot][t]` in p.u.
    pub flows: Vec<Vec<f64>>,
    pub own_buses: Vec<usize>,
    /// Load shed in MW per own bus and hour (zeros when the slack is disabled).
    pub shed: Vec<Vec<f64>>,
}

impl RegionalVariables {
    pub fn angle(&self, bus: usize, hour: usize) -> Option<f64> {
        let i = self.buses.binary_search(&bus).ok()?;
        Some(self.angles[i][hour])
    }

    pub fn total_shed(&self) -> f64 {
        self.shed.iter().flatten().sum()
    }
}

impl RegionalModel {
    /// Maps a solver vector back to named variables, checking integrality in the binary phase.
    pub fn extract(&self, raw: &MiqpSolution) -> Result<RegionalVariables, ModelError> {
        self.extract_values(&raw.values)
    }

    pub fn extract_values(&self, values: &[f64]) -> Result<RegionalVariables, ModelError> {
        let lay = &self.layout;
        if values.len() != self.problem.num_variables() {
            return Err(ModelError::SolutionShape {
                region: lay.label,
                got: values.len(),
                expected: self.problem.num_variables(),
            });
        }
        let pick = |idx: &Vec<Vec<usize>>| -> Vec<Vec<f64>> {
            idx.iter().map(|row| row.iter().map(|&j| values[j]).collect()).collect()
        };
        if lay.phase == Phase::Binary {
            let ints = lay.x.iter().flatten().chain(lay.z.iter().flatten().flatten());
            for &j in ints {
                let v = values[j];
                if (v - v.round()).abs() > INTEGRALITY_TOL {
                    return Err(ModelError::Integrality {
                        region: lay.label,
                        name: self.problem.variable_name(j),
                        value: v,
                    });
                }
            }
        }
        Ok(RegionalVariables {
            region: lay.region,
            phase: lay.phase,
            generators: lay.generators.clone(),
            commitment: pick(&lay.x),
            dispatch: pick(&lay.y),
            start_up: pick(&lay.start_up),
            shut_down: pick(&lay.shut_down),
            maintenance: lay
                .z
                .iter()
                .map(|z| z.as_ref().map(|z| z.iter().map(|&j| values[j]).collect()))
                .collect(),
            buses: lay.buses.clone(),
            angles: pick(&lay.theta),
            tie_lines: lay.tie_lines.clone(),
            flows: pick(&lay.flow),
            own_buses: lay.own_buses.clone(),
            shed: match &lay.shed {
                Some(s) => pick(s),
                None => vec![vec![0.0; lay.hours]; lay.own_buses.len()],
            },
        })
    }
}

/// Dispatch, commitment, and maintenance cost of a schedule, excluding every
/// penalty and coupling term.
pub fn local_cost(case: &PowerCase, vars: &RegionalVariables) -> f64 {
    let mut cost = 0.0;
    for (gi, &g) in vars.generators.iter().enumerate() {
        let gen = &case.generators[g];
        cost += gen.dispatch_cost * vars.dispatch[gi].iter().sum::<f64>();
        cost += gen.commitment_cost * vars.commitment[gi].iter().sum::<f64>();
        if let (Some(z), Some(m)) = (&vars.maintenance[gi], case.maintenance_for(g)) {
            cost += z.iter().zip(&m.window_costs).map(|(a, k)| a * k).sum::<f64>();
        }
    }
    cost
}

/// [`local_cost`] plus the load-shed penalty.
pub fn operating_cost(case: &PowerCase, vars: &RegionalVariables, options: &ModelOptions) -> f64 {
    local_cost(case, vars) + options.load_shed_cost * vars.total_shed()
}
