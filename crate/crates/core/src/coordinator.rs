//! Lockstep simulation of the two-phase decentralized protocol.
//!
//! Every iteration runs four steps for all regions: solve the regional model,
//! perturb and send tie-line angles to each neighbor, fold the delivered
//! messages into consensus, duals, and the control chart, then evaluate the
//! stopping rule. Messages move by value through a [`Router`] that only
//! accepts overlay neighbors and delivers after every send of the iteration.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use privmaint_miqp::{MiqpBackend, SolveLimits, SolveStatus};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::consensus::{ConsensusError, ConsensusState, Endpoint};
use crate::dp::{perturb_angles, DpError, Envelope, NoiseStream, NoisyAngleMessage, PrivacyConfig, ScaleTable};
use crate::grid::{PowerCase, RegionPartition};
use crate::model::{
    build_subproblem, local_cost, operating_cost, ModelError, ModelOptions, Phase, RegionalVariables,
};
use crate::monitor::{mean_per_bus, ChartConfig, ChartError, ChartState, Signal, Verdict};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("region {from} may not message region {to}: not an overlay neighbor")]
    NonNeighbor { from: u32, to: u32 },
    #[error("region {0} attempted to message itself")]
    SelfMessage(u32),
    #[error("region {from} already sent to region {to} in iteration {iteration}")]
    Duplicate { from: u32, to: u32, iteration: usize },
    #[error("no region with index {0}")]
    UnknownRegion(usize),
    #[error("message stamped for iteration {got} sent during iteration {expected}")]
    WrongIteration { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoordinatorError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Privacy(#[from] DpError),
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error("region {region}, iteration {iteration}: subproblem is infeasible")]
    Infeasible { region: u32, iteration: usize },
    #[error("region {region}, iteration {iteration}: solver failed: {detail}")]
    Solver { region: u32, iteration: usize, detail: String },
    #[error("invalid run configuration: {0}")]
    Config(String),
}

/// Neighbor-only mailbox with synchronous delivery.
#[derive(Debug, Clone)]
pub struct Router {
    labels: Vec<u32>,
    neighbors: Vec<Vec<usize>>,
    iteration: usize,
    sent: BTreeSet<(usize, usize)>,
    pending: Vec<NoisyAngleMessage>,
}

impl Router {
    pub fn new(partition: &RegionPartition) -> Self {
        Router {
            labels: partition.regions().iter().map(|r| r.label).collect(),
            neighbors: partition.regions().iter().map(|r| r.neighbors.clone()).collect(),
            iteration: 0,
            sent: BTreeSet::new(),
            pending: Vec::new(),
        }
    }

    /// Regions `region` may address.
    pub fn allowed(&self, region: usize) -> &[usize] {
        &self.neighbors[region]
    }

    pub fn begin_iteration(&mut self, iteration: usize) {
        self.iteration = iteration;
        self.sent.clear();
        self.pending.clear();
    }

    pub fn send(&mut self, message: NoisyAngleMessage) -> Result<(), ProtocolError> {
        let (from, to) = (message.sender(), message.receiver());
        for r in [from, to] {
            if r >= self.labels.len() {
                return Err(ProtocolError::UnknownRegion(r));
            }
        }
        if from == to {
            return Err(ProtocolError::SelfMessage(self.labels[from]));
        }
        if !self.neighbors[from].contains(&to) {
            return Err(ProtocolError::NonNeighbor { from: self.labels[from], to: self.labels[to] });
        }
        if message.iteration() != self.iteration {
            return Err(ProtocolError::WrongIteration { expected: self.iteration, got: message.iteration() });
        }
        if !self.sent.insert((from, to)) {
            return Err(ProtocolError::Duplicate {
                from: self.labels[from],
                to: self.labels[to],
                iteration: self.iteration,
            });
        }
        self.pending.push(message);
        Ok(())
    }

    /// Hands every pending message to its receiver, ordered by sender.
    pub fn deliver(&mut self) -> Vec<Vec<NoisyAngleMessage>> {
        let mut inbox: Vec<Vec<NoisyAngleMessage>> = vec![Vec::new(); self.neighbors.len()];
        let mut pending = std::mem::take(&mut self.pending);
        pending.sort_by_key(|m| (m.receiver(), m.sender()));
        for m in pending {
            inbox[m.receiver()].push(m);
        }
        inbox
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    /// Regions solved concurrently on the rayon pool.
    Parallel,
    /// Regions solved one after another in region order.
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub rho_theta: f64,
    pub rho_flow: f64,
    /// η
    pub eta: f64,
    pub privacy: PrivacyConfig,
    pub chart: ChartConfig,
    pub model: ModelOptions,
    /// Iteration cap per phase.
    pub max_iterations: usize,
    /// Wall-clock budget shared by both phases.
    pub wall_clock: Duration,
    pub relaxed_limits: SolveLimits,
    pub binary_limits: SolveLimits,
    pub execution: Execution,
    /// Stamp trace rows with elapsed wall time; off keeps traces reproducible.
    pub record_wall_time: bool,
}

impl RunConfig {
    pub const DEFAULT_WALL_CLOCK: Duration = Duration::from_secs(10_600);

    pub fn new(privacy: PrivacyConfig, chart: ChartConfig) -> Self {
        RunConfig {
            rho_theta: 1.0,
            rho_flow: 1.0,
            eta: 1.0,
            privacy,
            chart,
            model: ModelOptions::default(),
            max_iterations: 2_000,
            wall_clock: Self::DEFAULT_WALL_CLOCK,
            relaxed_limits: SolveLimits::default(),
            binary_limits: SolveLimits::default().with_rel_gap(1e-2).with_max_nodes(200),
            execution: Execution::Parallel,
            record_wall_time: false,
        }
    }
}

/// One row of telemetry per (phase, iteration, region). Only aggregate
/// residuals, duals, and chart statistics are recorded; no angle values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub phase: &'static str,
    pub iteration: usize,
    pub region: u32,
    /// Regional objective including coupling terms.
    pub objective: f64,
    /// Dispatch + commitment + maintenance cost.
    pub local_cost: f64,
    pub load_shed_mw: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub chart_points: usize,
    pub chart_max_abs: f64,
    pub alarms: usize,
    pub kappa: usize,
    pub lambda_norm: f64,
    pub phi_norm: f64,
    pub verdict: Verdict,
    pub solve_status: &'static str,
    pub nodes: usize,
    pub warm_start: bool,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseStatus {
    Converged,
    IterationLimit,
    TimeLimit,
}

/// Per-region coordination state carried from one phase to the next.
#[derive(Debug, Clone)]
pub struct Delta {
    pub consensus: Vec<ConsensusState>,
    /// Last solver vector per region, used as warm start.
    pub warm_start: Vec<Option<Vec<f64>>>,
    pub streams: Vec<NoiseStream>,
}

impl Delta {
    pub fn initial(case: &PowerCase, partition: &RegionPartition, config: &RunConfig) -> Result<Self, CoordinatorError> {
        let consensus = partition
            .regions()
            .iter()
            .map(|r| {
                ConsensusState::new(r.tie_lines.clone(), case.hours(), config.rho_theta, config.rho_flow, config.eta)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let n = partition.num_regions();
        Ok(Delta {
            consensus,
            warm_start: vec![None; n],
            streams: (0..n).map(|r| NoiseStream::new(config.privacy.seed, r)).collect(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct PhaseResult {
    pub phase: Phase,
    pub status: PhaseStatus,
    pub iterations: usize,
    pub variables: Vec<RegionalVariables>,
    /// Σ_r local cost plus load-shed penalty at the final iterate.
    pub objective: f64,
    pub trace: Vec<TraceRecord>,
    pub delta: Delta,
    /// Own flow and the neighbor's noisy estimate of it, p.u., per region,
    /// tie line, and hour of the final iteration.
    pub true_flows: Vec<f64>,
    pub dp_flows: Vec<f64>,
    /// Messages delivered in the final iteration.
    pub messages: Vec<NoisyAngleMessage>,
    pub wall_time: Duration,
}

impl PhaseResult {
    pub fn converged(&self) -> bool {
        self.status == PhaseStatus::Converged
    }
}

struct Worker {
    region: usize,
    label: u32,
    monitored: Vec<usize>,
    scales: ScaleTable,
    chart: ChartState,
    vars: Option<RegionalVariables>,
    objective: f64,
    status: &'static str,
    nodes: usize,
    warm_start_used: bool,
    outgoing: Vec<NoisyAngleMessage>,
    primal: f64,
    dual: f64,
    verdict: Verdict,
    flow_pairs: Vec<(f64, f64)>,
}

/// Runs one phase until every region reports local convergence in the same
/// iteration, the iteration cap is reached, or `deadline` passes.
pub fn run_phase(
    case: &PowerCase,
    partition: &RegionPartition,
    config: &RunConfig,
    phase: Phase,
    mut delta: Delta,
    backend: &dyn MiqpBackend,
    deadline: Instant,
) -> Result<PhaseResult, CoordinatorError> {
    config.privacy.validate()?;
    config.chart.validate()?;
    if config.max_iterations == 0 {
        return Err(CoordinatorError::Config("max_iterations must be positive".into()));
    }
    let started = Instant::now();
    let hours = case.hours();
    let mut workers: Vec<Worker> = Vec::with_capacity(partition.num_regions());
    for (r, region) in partition.regions().iter().enumerate() {
        let lines: Vec<(usize, f64)> = region.tie_lines.iter().map(|&l| (l, case.lines[l].gamma)).collect();
        let monitored = region.monitored_buses();
        workers.push(Worker {
            region: r,
            label: region.label,
            scales: ScaleTable::new(&config.privacy, &lines)?,
            chart: ChartState::new(config.chart.clone(), monitored.clone())?,
            monitored,
            vars: None,
            objective: f64::NAN,
            status: "",
            nodes: 0,
            warm_start_used: false,
            outgoing: Vec::new(),
            primal: 0.0,
            dual: 0.0,
            verdict: Verdict::NotDue,
            flow_pairs: Vec::new(),
        });
    }
    let limits = match phase {
        Phase::Relaxed => &config.relaxed_limits,
        Phase::Binary => &config.binary_limits,
    };
    let mut router = Router::new(partition);
    let mut trace = Vec::new();
    let mut status = PhaseStatus::IterationLimit;
    let mut iterations = 0;
    let mut messages = Vec::new();

    for k in 1..=config.max_iterations {
        // Every phase completes one iteration so a schedule exists even past the deadline.
        if Instant::now() >= deadline && k > 1 {
            status = PhaseStatus::TimeLimit;
            break;
        }
        iterations = k;
        router.begin_iteration(k);

        let solve = |(w, (consensus, warm)): (&mut Worker, (&ConsensusState, &mut Option<Vec<f64>>))| {
            solve_region(case, partition, config, phase, limits, backend, k, w, consensus, warm)
        };
        let pairs = workers.iter_mut().zip(delta.consensus.iter().zip(delta.warm_start.iter_mut()));
        match config.execution {
            Execution::Parallel => pairs.par_bridge().map(solve).collect::<Result<Vec<()>, _>>()?,
            Execution::Sequential => pairs.map(solve).collect::<Result<Vec<()>, _>>()?,
        };

        for (w, stream) in workers.iter_mut().zip(delta.streams.iter_mut()) {
            w.outgoing.clear();
            let vars = w.vars.as_ref().expect("solved this iteration");
            for &n in &partition.region(w.region).neighbors {
                let shared = partition.shared_tie_lines(case, w.region, n);
                let raw = |line: usize, end: Endpoint, hour: usize| {
                    let l = &case.lines[line];
                    let bus = if end == Endpoint::From { l.from } else { l.to };
                    vars.angle(bus, hour).expect("tie-line endpoint is modelled")
                };
                let envelope = Envelope { sender: w.region, receiver: n, iteration: k };
                let msg = perturb_angles(raw, &shared, hours, &w.scales, &config.privacy, stream, envelope)?;
                w.outgoing.push(msg.clone());
                router.send(msg)?;
            }
        }
        let inbox = router.deliver();
        messages = inbox.iter().flatten().cloned().collect();

        let process = |(w, (consensus, inbox)): (&mut Worker, (&mut ConsensusState, Vec<NoisyAngleMessage>))| {
            absorb_messages(case, config, w, consensus, &inbox)
        };
        let pairs = workers.iter_mut().zip(delta.consensus.iter_mut().zip(inbox));
        match config.execution {
            Execution::Parallel => pairs.par_bridge().map(process).collect::<Result<Vec<()>, _>>()?,
            Execution::Sequential => pairs.map(process).collect::<Result<Vec<()>, _>>()?,
        };

        let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
        let mut all_converged = true;
        for (w, consensus) in workers.iter().zip(&delta.consensus) {
            let vars = w.vars.as_ref().expect("solved this iteration");
            let points = w.chart.latest_points();
            let (lambda_norm, phi_norm) = consensus.multiplier_norms();
            trace.push(TraceRecord {
                phase: phase.as_str(),
                iteration: k,
                region: w.label,
                objective: w.objective,
                local_cost: local_cost(case, vars),
                load_shed_mw: vars.total_shed(),
                primal_residual: w.primal,
                dual_residual: w.dual,
                chart_points: points.len(),
                chart_max_abs: points.iter().map(|p| p.value.abs()).fold(0.0, f64::max),
                alarms: points.iter().filter(|p| p.signal == Signal::Alarm).count(),
                kappa: w.chart.tripped(),
                lambda_norm,
                phi_norm,
                verdict: w.verdict,
                solve_status: w.status,
                nodes: w.nodes,
                warm_start: w.warm_start_used,
                wall_ms: if config.record_wall_time { elapsed_ms } else { 0.0 },
            });
            all_converged &= w.verdict == Verdict::Converged;
        }
        if all_converged {
            status = PhaseStatus::Converged;
            break;
        }
    }

    let variables: Vec<RegionalVariables> = workers.iter().filter_map(|w| w.vars.clone()).collect();
    let objective = variables.iter().map(|v| operating_cost(case, v, &config.model)).sum();
    let mut true_flows = Vec::new();
    let mut dp_flows = Vec::new();
    for w in &workers {
        for &(t, d) in &w.flow_pairs {
            true_flows.push(t);
            dp_flows.push(d);
        }
    }
    Ok(PhaseResult {
        phase,
        status,
        iterations,
        variables,
        objective,
        trace,
        delta,
        true_flows,
        dp_flows,
        messages,
        wall_time: started.elapsed(),
    })
}

#[allow(clippy::too_many_arguments)]
fn solve_region(
    case: &PowerCase,
    partition: &RegionPartition,
    config: &RunConfig,
    phase: Phase,
    limits: &SolveLimits,
    backend: &dyn MiqpBackend,
    iteration: usize,
    w: &mut Worker,
    consensus: &ConsensusState,
    warm: &mut Option<Vec<f64>>,
) -> Result<(), CoordinatorError> {
    let model = build_subproblem(case, partition, w.region, consensus, phase, &config.model)?;
    let start = warm.as_deref().filter(|v| v.len() == model.problem.num_variables());
    let sol = backend
        .solve(&model.problem, limits, start)
        .map_err(|e| CoordinatorError::Solver { region: w.label, iteration, detail: e.to_string() })?;
    if sol.status == SolveStatus::Infeasible || !sol.has_point() {
        return Err(CoordinatorError::Infeasible { region: w.label, iteration });
    }
    w.vars = Some(model.extract(&sol)?);
    w.objective = sol.objective;
    w.status = sol.status.as_str();
    w.nodes = sol.nodes;
    w.warm_start_used = sol.warm_start_used;
    *warm = Some(sol.values);
    Ok(())
}

fn absorb_messages(
    case: &PowerCase,
    config: &RunConfig,
    w: &mut Worker,
    consensus: &mut ConsensusState,
    inbox: &[NoisyAngleMessage],
) -> Result<(), CoordinatorError> {
    let vars = w.vars.as_ref().expect("solved this iteration");
    let tie_lines = consensus.tie_lines().to_vec();
    let received = |line: usize, end: Endpoint, hour: usize| -> Option<f64> {
        inbox.iter().find_map(|m| m.get(line, end, hour))
    };
    let sent = |line: usize, end: Endpoint, hour: usize| -> Option<f64> {
        w.outgoing.iter().find_map(|m| m.get(line, end, hour))
    };
    let bias = |line: usize| -> Result<f64, DpError> {
        if config.privacy.debias {
            config.privacy.angle_bias(case.lines[line].gamma)
        } else {
            Ok(0.0)
        }
    };
    let biases: Vec<f64> = tie_lines.iter().map(|&l| bias(l)).collect::<Result<_, _>>()?;
    let endpoint_bus = |line: usize, end: Endpoint| {
        let l = &case.lines[line];
        if end == Endpoint::From { l.from } else { l.to }
    };
    let own_angle = |slot: usize, end: Endpoint, hour: usize| {
        vars.angle(endpoint_bus(tie_lines[slot], end), hour).expect("tie-line endpoint is modelled")
    };
    let own_flow = |slot: usize, hour: usize| vars.flows[slot][hour];
    let recv_angle = |slot: usize, end: Endpoint, hour: usize| {
        received(tie_lines[slot], end, hour).map(|v| v - biases[slot])
    };
    let recv_flow = |slot: usize, hour: usize| {
        let line = tie_lines[slot];
        let u = received(line, Endpoint::From, hour)?;
        let v = received(line, Endpoint::To, hour)?;
        Some(crate::dp::noisy_flow(u, v, case.lines[line].gamma))
    };
    let res = consensus.step(own_angle, own_flow, recv_angle, recv_flow)?;

    let mut discrepancies = Vec::with_capacity(tie_lines.len() * 2 * case.hours());
    let mut flow_pairs = Vec::with_capacity(tie_lines.len() * case.hours());
    for (slot, &line) in tie_lines.iter().enumerate() {
        let gamma = case.lines[line].gamma;
        for end in Endpoint::BOTH {
            for hour in 0..case.hours() {
                let mine = sent(line, end, hour).expect("sent every tie-line endpoint");
                let theirs = received(line, end, hour).expect("checked by consensus step");
                discrepancies.push((endpoint_bus(line, end), gamma.abs() * (mine - theirs)));
            }
        }
        for hour in 0..case.hours() {
            flow_pairs.push((own_flow(slot, hour), recv_flow(slot, hour).expect("checked by consensus step")));
        }
    }
    let per_bus = mean_per_bus(&w.monitored, discrepancies);
    w.chart.record_iteration(&per_bus)?;
    w.primal = res.primal;
    w.dual = res.dual;
    w.verdict = w.chart.local_convergence(res.primal, res.dual, case.hours());
    w.flow_pairs = flow_pairs;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TwoPhaseResult {
    pub relaxed: PhaseResult,
    pub binary: PhaseResult,
    pub wall_time: Duration,
}

impl TwoPhaseResult {
    pub fn converged(&self) -> bool {
        self.binary.converged()
    }

    /// ξ of the final integral schedule.
    pub fn objective(&self) -> f64 {
        self.binary.objective
    }

    pub fn trace(&self) -> impl Iterator<Item = &TraceRecord> {
        self.relaxed.trace.iter().chain(&self.binary.trace)
    }
}

/// Relaxed phase to consensus, then the binary phase started from its duals,
/// consensus values, and solver vectors, under one shared wall-clock budget.
pub fn run_two_phase(
    case: &PowerCase,
    partition: &RegionPartition,
    config: &RunConfig,
    backend: &dyn MiqpBackend,
) -> Result<TwoPhaseResult, CoordinatorError> {
    let started = Instant::now();
    let deadline = started + config.wall_clock;
    let delta = Delta::initial(case, partition, config)?;
    let relaxed = run_phase(case, partition, config, Phase::Relaxed, delta, backend, deadline)?;
    let carried = relaxed.delta.clone();
    let binary = run_phase(case, partition, config, Phase::Binary, carried, backend, deadline)?;
    Ok(TwoPhaseResult { relaxed, binary, wall_time: started.elapsed() })
}
