//! Experiment driver: centralized benchmark, optimality gap, flow-noise
//! analysis, parameter sweeps, and CSV/plot-data emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use privmaint_miqp::{BackendRegistry, MiqpBackend, SolveLimits, SolveStatus};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{mixing_factor, ConsensusError, MixingMode};
use crate::coordinator::{run_two_phase, CoordinatorError, Execution, RunConfig, TraceRecord, TwoPhaseResult};
use crate::dp::{DpError, PrivacyConfig};
use crate::grid::{load_case, load_partition_map, GridError, PowerCase, RegionPartition};
use crate::model::{build_centralized, operating_cost, ModelError, ModelOptions, Phase, RegionalVariables};
use crate::monitor::ChartConfig;

/// Gap reported for runs that did not converge.
pub const NON_CONVERGED_GAP: f64 = 0.16;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
    #[error(transparent)]
    Privacy(#[from] DpError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error("centralized solve: {0}")]
    Centralized(String),
    #[error("optimality gap needs a positive centralized objective, got {0}")]
    BadDenominator(f64),
    #[error("flow vectors have {left} and {right} entries")]
    Misaligned { left: usize, right: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// |ξ_decent − ξ_cent| / ξ_cent, or [`NON_CONVERGED_GAP`] for a run that did not converge.
pub fn optimality_gap(decentralized: f64, centralized: f64, converged: bool) -> Result<f64, BenchError> {
    if !(centralized > 0.0 && centralized.is_finite()) {
        return Err(BenchError::BadDenominator(centralized));
    }
    if !converged {
        return Ok(NON_CONVERGED_GAP);
    }
    Ok((decentralized - centralized).abs() / centralized)
}

/// Euclidean distance between true and DP-reconstructed flows.
pub fn flow_noise_norm(true_flows: &[f64], dp_flows: &[f64]) -> Result<f64, BenchError> {
    if true_flows.len() != dp_flows.len() {
        return Err(BenchError::Misaligned { left: true_flows.len(), right: dp_flows.len() });
    }
    Ok(true_flows.iter().zip(dp_flows).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

#[derive(Debug, Clone)]
pub struct CentralizedResult {
    pub objective: f64,
    pub bound: f64,
    pub status: SolveStatus,
    pub nodes: usize,
    pub variables: RegionalVariables,
    pub wall_time: Duration,
}

/// Solves the whole network as one MIQP (or its relaxation) without
/// coupling terms or noise. Budget exhaustion returns the incumbent and bound.
pub fn centralized_solve(
    case: &PowerCase,
    phase: Phase,
    options: &ModelOptions,
    limits: &SolveLimits,
    backend: &dyn MiqpBackend,
) -> Result<CentralizedResult, BenchError> {
    let started = Instant::now();
    let model = build_centralized(case, phase, options)?;
    let sol = backend.solve(&model.problem, limits, None).map_err(|e| BenchError::Centralized(e.to_string()))?;
    if !sol.has_point() {
        return Err(BenchError::Centralized(format!("no feasible point ({})", sol.status.as_str())));
    }
    let variables = model.extract(&sol)?;
    Ok(CentralizedResult {
        objective: operating_cost(case, &variables, options),
        bound: sol.bound,
        status: sol.status,
        nodes: sol.nodes,
        variables,
        wall_time: started.elapsed(),
    })
}

/// How the mixing factor η is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSetting {
    Mode(EtaMode),
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaMode {
    Table,
    Formula,
}

impl EtaSetting {
    /// η for a noise scale and γ; noiseless runs use 1.
    pub fn resolve(self, scale: f64, gamma: u32) -> Result<f64, ConsensusError> {
        match self {
            _ if scale == 0.0 => Ok(1.0),
            EtaSetting::Mode(EtaMode::Table) => mixing_factor(scale, gamma, MixingMode::Table),
            EtaSetting::Mode(EtaMode::Formula) => mixing_factor(scale, gamma, MixingMode::Formula),
            EtaSetting::Explicit(v) if v > 0.0 && v <= 1.0 => Ok(v),
            EtaSetting::Explicit(v) => Err(ConsensusError::MixingOutOfRange(v)),
        }
    }
}

fn default_sensitivity() -> f64 {
    PrivacyConfig::DEFAULT_SENSITIVITY
}
fn default_multiplier() -> u8 {
    1
}
fn default_rho() -> f64 {
    1_000.0
}
fn default_lookback() -> usize {
    10
}
fn default_eta() -> EtaSetting {
    EtaSetting::Mode(EtaMode::Table)
}
fn default_max_iterations() -> usize {
    2_000
}
fn default_wall_clock() -> f64 {
    RunConfig::DEFAULT_WALL_CLOCK.as_secs_f64()
}
fn default_backend() -> String {
    privmaint_miqp::BUNDLED.to_string()
}
fn default_binary_gap() -> f64 {
    1e-2
}
fn default_binary_nodes() -> usize {
    200
}
fn default_central_gap() -> f64 {
    1e-3
}
fn default_central_time() -> f64 {
    600.0
}
fn default_true() -> bool {
    true
}

/// Experiment description, loaded from TOML. List-valued knobs span the sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: PathBuf,
    pub partition: PathBuf,
    /// Flow-space noise scales ω/ε in p.u.; 0 means noiseless.
    pub scales: Vec<f64>,
    /// CL
    pub convergence_limits: Vec<f64>,
    /// γ
    pub gammas: Vec<u32>,
    pub seeds: Vec<u64>,
    /// S_w
    #[serde(default = "default_lookback")]
    pub lookback: usize,
    /// ω in p.u.
    #[serde(default = "default_sensitivity")]
    pub sensitivity: f64,
    /// m_α for noisy cells.
    #[serde(default = "default_multiplier")]
    pub multiplier: u8,
    #[serde(default = "default_eta")]
    pub eta: EtaSetting,
    #[serde(default = "default_rho")]
    pub rho_theta: f64,
    #[serde(default = "default_rho")]
    pub rho_flow: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_wall_clock")]
    pub wall_clock_secs: f64,
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default = "default_binary_gap")]
    pub binary_rel_gap: f64,
    #[serde(default = "default_binary_nodes")]
    pub binary_max_nodes: usize,
    #[serde(default = "default_central_gap")]
    pub centralized_rel_gap: f64,
    #[serde(default = "default_central_time")]
    pub centralized_time_limit_secs: f64,
    /// Subtract the known noise mean from received angles.
    #[serde(default = "default_true")]
    pub debias: bool,
    /// Known centralized objective; skips the centralized solve when set.
    #[serde(default)]
    pub centralized_objective: Option<f64>,
}

impl ExperimentConfig {
    /// Single-cell configuration with default knobs.
    pub fn single(case: impl Into<PathBuf>, partition: impl Into<PathBuf>, scale: f64, cl: f64, gamma: u32, seed: u64) -> Self {
        ExperimentConfig {
            case: case.into(),
            partition: partition.into(),
            scales: vec![scale],
            convergence_limits: vec![cl],
            gammas: vec![gamma],
            seeds: vec![seed],
            lookback: default_lookback(),
            sensitivity: default_sensitivity(),
            multiplier: default_multiplier(),
            eta: default_eta(),
            rho_theta: default_rho(),
            rho_flow: default_rho(),
            max_iterations: default_max_iterations(),
            wall_clock_secs: default_wall_clock(),
            backend: default_backend(),
            binary_rel_gap: default_binary_gap(),
            binary_max_nodes: default_binary_nodes(),
            centralized_rel_gap: default_central_gap(),
            centralized_time_limit_secs: default_central_time(),
            debias: true,
            centralized_objective: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, BenchError> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    /// Loads a config; relative case and partition paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| BenchError::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::parse(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.case, &mut cfg.partition] {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.scales.is_empty() || self.convergence_limits.is_empty() || self.gammas.is_empty() || self.seeds.is_empty()
        {
            return bad("scales, convergence_limits, gammas, and seeds must be nonempty");
        }
        if self.scales.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("noise scales must be finite and nonnegative");
        }
        if self.convergence_limits.iter().any(|c| !(*c > 0.0)) {
            return bad("convergence limits must be positive");
        }
        if self.gammas.contains(&0) || self.lookback == 0 {
            return bad("gamma and lookback must be positive");
        }
        if self.multiplier > 2 {
            return bad("multiplier must be 0, 1, or 2");
        }
        if !(self.wall_clock_secs > 0.0) || self.max_iterations == 0 {
            return bad("wall clock and iteration budget must be positive");
        }
        for p in [&self.case, &self.partition] {
            if !p.exists() {
                return Err(BenchError::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Every (scale, CL, γ, seed) combination in sorted order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &scale in &self.scales {
            for &cl in &self.convergence_limits {
                for &gamma in &self.gammas {
                    for &seed in &self.seeds {
                        cells.push(Cell { scale, cl, gamma, seed });
                    }
                }
            }
        }
        cells.sort_by(|a, b| a.key().partial_cmp(&b.key()).expect("finite cell keys"));
        cells.dedup();
        cells
    }

    /// Coordinator settings for one cell.
    pub fn run_config(&self, cell: &Cell) -> Result<RunConfig, BenchError> {
        let noiseless = cell.scale == 0.0 || self.multiplier == 0;
        let mut privacy = if noiseless {
            PrivacyConfig::noiseless(cell.seed)
        } else {
            PrivacyConfig::from_scale(cell.scale, self.sensitivity, self.multiplier, cell.seed)?
        };
        privacy.debias = self.debias;
        let chart = ChartConfig::from_gamma(cell.gamma, self.lookback, cell.scale, privacy.multiplier, cell.cl);
        let mut cfg = RunConfig::new(privacy, chart);
        cfg.rho_theta = self.rho_theta;
        cfg.rho_flow = self.rho_flow;
        cfg.eta = self.eta.resolve(if noiseless { 0.0 } else { cell.scale }, cell.gamma)?;
        cfg.max_iterations = self.max_iterations;
        cfg.wall_clock = Duration::from_secs_f64(self.wall_clock_secs);
        cfg.binary_limits = SolveLimits::default().with_rel_gap(self.binary_rel_gap).with_max_nodes(self.binary_max_nodes);
        cfg.execution = Execution::Parallel;
        Ok(cfg)
    }

    pub fn centralized_limits(&self) -> SolveLimits {
        SolveLimits::default()
            .with_rel_gap(self.centralized_rel_gap)
            .with_time_limit(Duration::from_secs_f64(self.centralized_time_limit_secs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub scale: f64,
    pub cl: f64,
    pub gamma: u32,
    pub seed: u64,
}

impl Cell {
    fn key(&self) -> (f64, f64, u32, u64) {
        (self.scale, self.cl, self.gamma, self.seed)
    }
}

/// Outcome of one sweep cell. Wall time is kept out of the CSV row so that
/// summaries are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub scale: f64,
    pub cl: f64,
    pub gamma: u32,
    pub seed: u64,
    pub converged: bool,
    pub relaxed_status: String,
    pub relaxed_iterations: usize,
    pub binary_status: String,
    pub binary_iterations: usize,
    /// ξ_decent, raw incumbent objective.
    pub objective: f64,
    pub centralized_objective: f64,
    /// Gap with the non-converged cap applied.
    pub gap: f64,
    /// Gap without the cap.
    pub raw_gap: f64,
    pub flow_noise_mw: f64,
    pub load_shed_mw: f64,
    /// Empty on success.
    pub error: String,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct CellRun {
    pub result: CellResult,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug)]
pub struct Inputs {
    pub case: PowerCase,
    pub partition: RegionPartition,
}

impl Inputs {
    pub fn load(config: &ExperimentConfig) -> Result<Self, BenchError> {
        let case = load_case(&config.case)?;
        let map = load_partition_map(&config.partition)?;
        let partition = RegionPartition::from_map(&case, &map)?;
        Ok(Inputs { case, partition })
    }
}

/// Runs one cell against a known centralized objective.
pub fn run_cell(
    inputs: &Inputs,
    config: &ExperimentConfig,
    cell: &Cell,
    centralized: f64,
    backend: &dyn MiqpBackend,
) -> Result<(TwoPhaseResult, CellResult), BenchError> {
    let run_cfg = config.run_config(cell)?;
    let run = run_two_phase(&inputs.case, &inputs.partition, &run_cfg, backend)?;
    let base = inputs.case.base_mva;
    let to_mw = |v: &[f64]| v.iter().map(|x| x * base).collect::<Vec<_>>();
    let noise = flow_noise_norm(&to_mw(&run.binary.true_flows), &to_mw(&run.binary.dp_flows))?;
    let converged = run.converged();
    let objective = run.objective();
    let result = CellResult {
        scale: cell.scale,
        cl: cell.cl,
        gamma: cell.gamma,
        seed: cell.seed,
        converged,
        relaxed_status: status_name(run.relaxed.status).to_string(),
        relaxed_iterations: run.relaxed.iterations,
        binary_status: status_name(run.binary.status).to_string(),
        binary_iterations: run.binary.iterations,
        objective,
        centralized_objective: centralized,
        gap: optimality_gap(objective, centralized, converged)?,
        raw_gap: optimality_gap(objective, centralized, true)?,
        flow_noise_mw: noise,
        load_shed_mw: run.binary.variables.iter().map(RegionalVariables::total_shed).sum(),
        error: String::new(),
        wall_time: run.wall_time,
    };
    Ok((run, result))
}

fn status_name(status: crate::coordinator::PhaseStatus) -> &'static str {
    use crate::coordinator::PhaseStatus::*;
    match status {
        Converged => "converged",
        IterationLimit => "iteration-limit",
        TimeLimit => "time-limit",
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub centralized: f64,
    pub cells: Vec<CellRun>,
}

/// Runs every cell of the grid. A failing cell is recorded with its error
/// message and the sweep continues.
pub fn sweep(config: &ExperimentConfig, registry: &BackendRegistry) -> Result<SweepResult, BenchError> {
    config.validate()?;
    let backend = registry.get(&config.backend).map_err(|e| BenchError::Config(e.to_string()))?;
    let inputs = Inputs::load(config)?;
    let centralized = match config.centralized_objective {
        Some(v) => v,
        None => {
            let opts = ModelOptions::default();
            centralized_solve(&inputs.case, Phase::Binary, &opts, &config.centralized_limits(), backend.as_ref())?
                .objective
        }
    };
    let cells = config.cells();
    let mut runs: Vec<CellRun> = cells
        .par_iter()
        .map(|cell| match run_cell(&inputs, config, cell, centralized, backend.as_ref()) {
            Ok((run, result)) => CellRun { result, trace: run.trace().cloned().collect() },
            Err(e) => CellRun { result: failed_cell(cell, centralized, &e), trace: Vec::new() },
        })
        .collect();
    runs.sort_by(|a, b| a.result_key().partial_cmp(&b.result_key()).expect("finite cell keys"));
    Ok(SweepResult { centralized, cells: runs })
}

impl CellRun {
    fn result_key(&self) -> (f64, f64, u32, u64) {
        (self.result.scale, self.result.cl, self.result.gamma, self.result.seed)
    }
}

fn failed_cell(cell: &Cell, centralized: f64, err: &BenchError) -> CellResult {
    CellResult {
        scale: cell.scale,
        cl: cell.cl,
        gamma: cell.gamma,
        seed: cell.seed,
        converged: false,
        relaxed_status: "error".into(),
        relaxed_iterations: 0,
        binary_status: "error".into(),
        binary_iterations: 0,
        objective: f64::NAN,
        centralized_objective: centralized,
        gap: NON_CONVERGED_GAP,
        raw_gap: f64::NAN,
        flow_noise_mw: f64::NAN,
        load_shed_mw: f64::NAN,
        error: err.to_string(),
        wall_time: Duration::ZERO,
    }
}

/// Aggregate over the seeds of one (scale, CL, γ) group. Non-converged runs
/// are included in every statistic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub scale: f64,
    pub cl: f64,
    pub gamma: u32,
    pub runs: usize,
    pub converged: usize,
    pub mean_gap: f64,
    pub median_gap: f64,
    pub mean_flow_noise_mw: f64,
    pub mean_wall_secs: f64,
    pub std_wall_secs: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(results: &[CellResult]) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<(u64, u64, u32), Vec<&CellResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.scale.to_bits(), r.cl.to_bits(), r.gamma)).or_default().push(r);
    }
    let mut out: Vec<GroupSummary> = groups
        .into_values()
        .map(|rs| {
            let gaps: Vec<f64> = rs.iter().map(|r| r.gap).collect();
            let noise: Vec<f64> = rs.iter().map(|r| r.flow_noise_mw).filter(|x| !x.is_nan()).collect();
            let walls: Vec<f64> = rs.iter().map(|r| r.wall_time.as_secs_f64()).collect();
            let (mean_wall, std_wall) = mean_std(&walls);
            GroupSummary {
                scale: rs[0].scale,
                cl: rs[0].cl,
                gamma: rs[0].gamma,
                runs: rs.len(),
                converged: rs.iter().filter(|r| r.converged).count(),
                mean_gap: mean_std(&gaps).0,
                median_gap: median(&gaps),
                mean_flow_noise_mw: mean_std(&noise).0,
                mean_wall_secs: mean_wall,
                std_wall_secs: std_wall,
            }
        })
        .collect();
    out.sort_by(|a, b| (a.scale, a.cl, a.gamma).partial_cmp(&(b.scale, b.cl, b.gamma)).expect("finite keys"));
    out
}

/// One `trace.csv` row: cell coordinates followed by the coordinator record.
#[derive(Debug, Serialize)]
struct TraceRow<'a> {
    scale: f64,
    cl: f64,
    gamma: u32,
    seed: u64,
    phase: &'a str,
    iteration: usize,
    region: u32,
    objective: f64,
    local_cost: f64,
    load_shed_mw: f64,
    primal_residual: f64,
    dual_residual: f64,
    chart_points: usize,
    chart_max_abs: f64,
    alarms: usize,
    kappa: usize,
    lambda_norm: f64,
    phi_norm: f64,
    verdict: crate::monitor::Verdict,
    solve_status: &'a str,
    nodes: usize,
    warm_start: bool,
    wall_ms: f64,
}

pub fn write_trace_csv<W: Write>(out: W, runs: &[CellRun]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for run in runs {
        let c = &run.result;
        for t in &run.trace {
            w.serialize(TraceRow {
                scale: c.scale,
                cl: c.cl,
                gamma: c.gamma,
                seed: c.seed,
                phase: t.phase,
                iteration: t.iteration,
                region: t.region,
                objective: t.objective,
                local_cost: t.local_cost,
                load_shed_mw: t.load_shed_mw,
                primal_residual: t.primal_residual,
                dual_residual: t.dual_residual,
                chart_points: t.chart_points,
                chart_max_abs: t.chart_max_abs,
                alarms: t.alarms,
                kappa: t.kappa,
                lambda_norm: t.lambda_norm,
                phi_norm: t.phi_norm,
                verdict: t.verdict,
                solve_status: t.solve_status,
                nodes: t.nodes,
                warm_start: t.warm_start,
                wall_ms: t.wall_ms,
            })?;
        }
    }
    w.flush().map_err(|source| BenchError::Io { path: "trace.csv".into(), source })?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(out: W, results: &[CellResult]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| BenchError::Io { path: "summary.csv".into(), source })?;
    Ok(())
}

pub fn read_summary_csv<R: std::io::Read>(input: R) -> Result<Vec<CellResult>, BenchError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(BenchError::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TimingRow {
    scale: f64,
    cl: f64,
    gamma: u32,
    seed: u64,
    wall_secs: f64,
}

/// Per-cell wall time, kept apart from `summary.csv`.
pub fn write_timing_csv<W: Write>(out: W, results: &[CellResult]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        w.serialize(TimingRow { scale: r.scale, cl: r.cl, gamma: r.gamma, seed: r.seed, wall_secs: r.wall_time.as_secs_f64() })?;
    }
    w.flush().map_err(|source| BenchError::Io { path: "timing.csv".into(), source })?;
    Ok(())
}

/// Fills `wall_time` of matching results from a timing table.
pub fn merge_timing_csv<R: std::io::Read>(input: R, results: &mut [CellResult]) -> Result<(), BenchError> {
    let mut r = csv::Reader::from_reader(input);
    for row in r.deserialize::<TimingRow>() {
        let row = row?;
        for res in results.iter_mut() {
            if (res.scale, res.cl, res.gamma, res.seed) == (row.scale, row.cl, row.gamma, row.seed) {
                res.wall_time = Duration::from_secs_f64(row.wall_secs.max(0.0));
            }
        }
    }
    Ok(())
}

/// Gnuplot-friendly long table: one `scale cl gamma seed metric value` line per datum.
pub fn plot_data(results: &[CellResult]) -> String {
    let mut s = String::from("# scale cl gamma seed metric value\n");
    for r in results {
        let metrics = [
            ("gap", r.gap),
            ("raw_gap", r.raw_gap),
            ("flow_noise_mw", r.flow_noise_mw),
            ("iterations", (r.relaxed_iterations + r.binary_iterations) as f64),
        ];
        for (name, v) in metrics {
            let _ = writeln!(s, "{} {} {} {} {name} {v}", r.scale, r.cl, r.gamma, r.seed);
        }
    }
    s
}

/// Human-readable report; includes wall-time statistics.
pub fn report_text(centralized: Option<f64>, results: &[CellResult]) -> String {
    let mut s = String::new();
    if let Some(c) = centralized {
        let _ = writeln!(s, "centralized objective: {c:.3}");
    }
    let failed = results.iter().filter(|r| !r.error.is_empty()).count();
    let _ = writeln!(s, "cells: {} ({} converged, {failed} failed)", results.len(), results.iter().filter(|r| r.converged).count());
    let _ = writeln!(
        s,
        "{:>8} {:>6} {:>5} {:>5} {:>9} {:>10} {:>10} {:>14} {:>12}",
        "scale", "CL", "gamma", "runs", "converged", "mean gap", "median gap", "flow noise MW", "wall s"
    );
    for g in summarize(results) {
        let _ = writeln!(
            s,
            "{:>8} {:>6} {:>5} {:>5} {:>9} {:>9.3}% {:>9.3}% {:>14.3} {:>6.2}±{:<5.2}",
            g.scale,
            g.cl,
            g.gamma,
            g.runs,
            g.converged,
            100.0 * g.mean_gap,
            100.0 * g.median_gap,
            g.mean_flow_noise_mw,
            g.mean_wall_secs,
            g.std_wall_secs
        );
    }
    for r in results.iter().filter(|r| !r.error.is_empty()) {
        let _ = writeln!(s, "error (scale {}, CL {}, gamma {}, seed {}): {}", r.scale, r.cl, r.gamma, r.seed, r.error);
    }
    s
}

/// Writes `trace.csv`, `summary.csv`, `timing.csv`, `plot.dat`, and `report.txt` into `dir`.
pub fn write_outputs(dir: &Path, sweep: &SweepResult) -> Result<(), BenchError> {
    let io = |path: &Path| {
        let p = path.display().to_string();
        move |source| BenchError::Io { path: p, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let results: Vec<CellResult> = sweep.cells.iter().map(|c| c.result.clone()).collect();
    let trace = dir.join("trace.csv");
    write_trace_csv(std::fs::File::create(&trace).map_err(io(&trace))?, &sweep.cells)?;
    let summary = dir.join("summary.csv");
    write_summary_csv(std::fs::File::create(&summary).map_err(io(&summary))?, &results)?;
    let timing = dir.join("timing.csv");
    write_timing_csv(std::fs::File::create(&timing).map_err(io(&timing))?, &results)?;
    let plot = dir.join("plot.dat");
    std::fs::write(&plot, plot_data(&results)).map_err(io(&plot))?;
    let report = dir.join("report.txt");
    std::fs::write(&report, report_text(Some(sweep.centralized), &results)).map_err(io(&report))?;
    Ok(())
}
