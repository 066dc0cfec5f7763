//! Command-line driver for decentralized private maintenance planning runs.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use privmaint_core::bench::{
    centralized_solve, merge_timing_csv, read_summary_csv, report_text, sweep, write_outputs, EtaMode, EtaSetting,
    ExperimentConfig,
};
use privmaint_core::dp::{ks_test, laplace_cdf, sample_flow_noise, verify_dp_ratio, PrivacyConfig};
use privmaint_core::grid::load_case;
use privmaint_core::model::{build_centralized, ModelOptions, Phase};
use privmaint_miqp::{to_lp_string, BackendRegistry, SolveLimits};

#[derive(Parser)]
#[command(name = "privmaint", version, about = "Differentially private decentralized maintenance scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the two-phase protocol for one (scale, CL, gamma, seed) cell.
    Run(RunArgs),
    /// Run every cell of an experiment grid.
    Sweep(SweepArgs),
    /// Solve the whole network as a single MIQP.
    Centralized(CentralizedArgs),
    /// Statistical checks of the noise mechanism.
    VerifyDp(VerifyDpArgs),
    /// Rebuild report.txt from a results directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct Overrides {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Flow-space noise scale in p.u. (0 = noiseless).
    #[arg(long)]
    scale: Option<f64>,
    /// Convergence limit CL.
    #[arg(long)]
    cl: Option<f64>,
    #[arg(long)]
    gamma: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Chart lookback S_w.
    #[arg(long)]
    lookback: Option<usize>,
    /// Noise multiplier m_alpha (0, 1, or 2).
    #[arg(long)]
    multiplier: Option<u8>,
    /// Mixing factor: "table", "formula", or a number in (0, 1].
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    rho_theta: Option<f64>,
    #[arg(long)]
    rho_flow: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Wall-clock budget in seconds for both phases.
    #[arg(long)]
    wall_clock: Option<f64>,
    #[arg(long)]
    backend: Option<String>,
    /// Skip the centralized solve and use this objective as the gap denominator.
    #[arg(long)]
    centralized_objective: Option<f64>,
}

impl Overrides {
    fn resolve(&self, single_cell: bool) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.case, &self.partition) {
            (Some(path), _, _) => ExperimentConfig::load(path)?,
            (None, Some(case), Some(partition)) => ExperimentConfig::single(case, partition, 0.015, 0.1, 4, 1),
            _ => bail!("either --config or both --case and --partition are required"),
        };
        if self.config.is_some() {
            if let Some(c) = &self.case {
                cfg.case = c.clone();
            }
            if let Some(p) = &self.partition {
                cfg.partition = p.clone();
            }
        }
        if let Some(v) = self.scale {
            cfg.scales = vec![v];
        }
        if let Some(v) = self.cl {
            cfg.convergence_limits = vec![v];
        }
        if let Some(v) = self.gamma {
            cfg.gammas = vec![v];
        }
        if let Some(v) = self.seed {
            cfg.seeds = vec![v];
        }
        if let Some(v) = self.lookback {
            cfg.lookback = v;
        }
        if let Some(v) = self.multiplier {
            cfg.multiplier = v;
        }
        if let Some(v) = &self.eta {
            cfg.eta = parse_eta(v)?;
        }
        if let Some(v) = self.rho_theta {
            cfg.rho_theta = v;
        }
        if let Some(v) = self.rho_flow {
            cfg.rho_flow = v;
        }
        if let Some(v) = self.max_iterations {
            cfg.max_iterations = v;
        }
        if let Some(v) = self.wall_clock {
            cfg.wall_clock_secs = v;
        }
        if let Some(v) = &self.backend {
            cfg.backend = v.clone();
        }
        if let Some(v) = self.centralized_objective {
            cfg.centralized_objective = Some(v);
        }
        if single_cell {
            cfg.scales.truncate(1);
            cfg.convergence_limits.truncate(1);
            cfg.gammas.truncate(1);
            cfg.seeds.truncate(1);
        }
        Ok(cfg)
    }
}

fn parse_eta(s: &str) -> Result<EtaSetting> {
    Ok(match s {
        "table" => EtaSetting::Mode(EtaMode::Table),
        "formula" => EtaSetting::Mode(EtaMode::Formula),
        v => EtaSetting::Explicit(v.parse().with_context(|| format!("invalid --eta {v}"))?),
    })
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: Overrides,
    /// Output directory for trace.csv, summary.csv, timing.csv, plot.dat, report.txt.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    experiment: Overrides,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CentralizedArgs {
    #[arg(long)]
    case: PathBuf,
    /// Solve the continuous relaxation instead of the MIQP.
    #[arg(long)]
    relaxed: bool,
    #[arg(long, default_value_t = 1e-3)]
    rel_gap: f64,
    /// Time limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    backend: Option<String>,
    /// Also write the model in LP format.
    #[arg(long)]
    lp_out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyDpArgs {
    /// Flow-space noise scales in p.u.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.015, 0.075, 0.30])]
    scales: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// Privacy budget for the density-ratio check; sensitivity is set to scale·ε.
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Line susceptance used for the angle-space noise.
    #[arg(long, default_value_t = 10.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding summary.csv (and optionally timing.csv).
    #[arg(long, default_value = "results")]
    dir: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(a) => run_grid(a.experiment.resolve(true)?, &a.out, None),
        Command::Sweep(a) => run_grid(a.experiment.resolve(false)?, &a.out, a.threads),
        Command::Centralized(a) => centralized(a),
        Command::VerifyDp(a) => verify_dp(a),
        Command::Report(a) => report(&a.dir),
    }
}

fn run_grid(cfg: ExperimentConfig, out: &Path, threads: Option<usize>) -> Result<()> {
    let registry = BackendRegistry::default();
    let result = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(|| sweep(&cfg, &registry))?,
        None => sweep(&cfg, &registry)?,
    };
    write_outputs(out, &result)?;
    let results: Vec<_> = result.cells.iter().map(|c| c.result.clone()).collect();
    print!("{}", report_text(Some(result.centralized), &results));
    println!("outputs written to {}", out.display());
    Ok(())
}

fn centralized(a: CentralizedArgs) -> Result<()> {
    let case = load_case(&a.case)?;
    let registry = BackendRegistry::default();
    let backend = match &a.backend {
        Some(name) => registry.get(name)?,
        None => registry.default_backend(),
    };
    let phase = if a.relaxed { Phase::Relaxed } else { Phase::Binary };
    let opts = ModelOptions::default();
    if let Some(path) = &a.lp_out {
        let model = build_centralized(&case, phase, &opts)?;
        std::fs::write(path, to_lp_string(&model.problem)).with_context(|| path.display().to_string())?;
    }
    let mut limits = SolveLimits::default().with_rel_gap(a.rel_gap);
    if let Some(t) = a.time_limit {
        limits = limits.with_time_limit(Duration::from_secs_f64(t));
    }
    let r = centralized_solve(&case, phase, &opts, &limits, backend.as_ref())?;
    println!("case: {}", case.name);
    println!("phase: {}", phase.as_str());
    println!("status: {}", r.status.as_str());
    println!("objective: {:.4}", r.objective);
    println!("bound: {:.4}", r.bound);
    println!("nodes: {}", r.nodes);
    println!("load shed MW: {:.4}", r.variables.total_shed());
    println!("wall time s: {:.3}", r.wall_time.as_secs_f64());
    Ok(())
}

fn verify_dp(a: VerifyDpArgs) -> Result<()> {
    let mut ok = true;
    for &scale in &a.scales {
        let cfg = PrivacyConfig::from_scale(scale, scale * a.epsilon, 1, a.seed)?;
        let mut noise = sample_flow_noise(&cfg, a.gamma, a.samples, a.seed)?;
        let ks = ks_test(&mut noise, |x| laplace_cdf(x, scale), 0.01);
        let ratio = verify_dp_ratio(&cfg, a.gamma, 0.0, cfg.sensitivity, a.samples, a.bins)?;
        println!(
            "scale {scale}: KS D = {:.5}, p = {:.4} [{}]; max density ratio {:.4} vs e^eps = {:.4} [{}]",
            ks.statistic,
            ks.p_value,
            if ks.pass { "pass" } else { "FAIL" },
            ratio.max_ratio,
            cfg.epsilon.exp(),
            if ratio.pass { "pass" } else { "FAIL" }
        );
        ok &= ks.pass && ratio.pass;
    }
    if !ok {
        bail!("mechanism check failed");
    }
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    let summary = dir.join("summary.csv");
    let mut results = read_summary_csv(File::open(&summary).with_context(|| summary.display().to_string())?)?;
    let timing = dir.join("timing.csv");
    if timing.exists() {
        merge_timing_csv(File::open(&timing)?, &mut results)?;
    }
    let centralized = results.first().map(|r| r.centralized_objective);
    let text = report_text(centralized, &results);
    std::fs::write(dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}
