use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use csvgd::experiments::{self, ExperimentKind, RunConfig};
use csvgd::svgd::PenaltySchedule;

#[derive(Parser)]
#[command(name = "csvgd", version, about = "Condensed Stein variational gradient descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the three-dimensional Gaussian target
    Mvn(RunArgs),
    /// Fit an ensemble of input-convex potentials to synthetic stress data
    Hyperelastic(RunArgs),
    /// Prior/kernel survey on the Gaussian target (resumable)
    Sweep(RunArgs),
    /// Distance matrix, weight samples and graph dumps of a checkpoint
    CondenseInspect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "inspect")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; missing keys take the experiment defaults
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Relative data noise level
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    step_size: Option<f64>,
    /// Iteration budget before the final polish
    #[arg(long)]
    max_iters: Option<usize>,
    /// Grow λ by 2 per stage until accuracy degrades by more than 10%
    #[arg(long)]
    adaptive: bool,
    /// Disable graph condensation between stages
    #[arg(long)]
    no_condense: bool,
}

impl RunArgs {
    fn resolve(&self, kind: ExperimentKind) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None if kind == ExperimentKind::Hyperelastic => RunConfig::default(),
            None => RunConfig::mvn_default(),
        };
        cfg.experiment = kind;
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.particles {
            cfg.particles = v;
        }
        if let Some(v) = self.alpha {
            cfg.svgd.prior.alpha = v;
        }
        if let Some(v) = self.lambda {
            cfg.svgd.prior.lambda = v;
        }
        if let Some(v) = self.noise {
            cfg.data.noise = v;
        }
        if let Some(v) = self.step_size {
            cfg.svgd.step_size = v;
        }
        if let Some(v) = self.max_iters {
            cfg.svgd.max_total_iters = v;
        }
        if self.adaptive {
            cfg.svgd.schedule = PenaltySchedule::Adaptive {
                growth: 2.0,
                tolerance: 0.1,
            };
        }
        if self.no_condense {
            cfg.svgd.condense = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mvn(args) => {
            let cfg = args.resolve(ExperimentKind::Mvn)?;
            let out = experiments::run_mvn(&cfg, Some(&command_line()))?;
            println!(
                "mvn: {} iterations, mean {:?}, bhattacharyya {:.6} (theta1-theta2 {:.6}), L1(theta3) {:.6} -> {}",
                out.report.total_iterations,
                out.mean,
                out.bhattacharyya,
                out.bhattacharyya_12,
                out.l1_theta3,
                cfg.out.display()
            );
        }
        Command::Hyperelastic(args) => {
            let cfg = args.resolve(ExperimentKind::Hyperelastic)?;
            let out = experiments::run_hyperelastic(&cfg, Some(&command_line()))?;
            println!(
                "hyperelastic: {} iterations, {} stages, active weights {:.1}, test W1 {:.6e}, widths {:?} -> {}",
                out.report.total_iterations,
                out.report.stages.len(),
                out.final_active,
                out.w1.sum,
                out.arch.layer_widths,
                cfg.out.display()
            );
        }
        Command::Sweep(args) => {
            let cfg = args.resolve(ExperimentKind::Sweep)?;
            let rows = experiments::run_sweep(&cfg, &command_line())?;
            println!("sweep: {} new cells -> {}", rows.len(), cfg.out.join("sweep.csv").display());
        }
        Command::CondenseInspect { checkpoint, out } => {
            let res = experiments::condense_inspect(&checkpoint, &out)
                .with_context(|| format!("inspecting {}", checkpoint.display()))?;
            println!(
                "condense-inspect: {} particles, widths {:?} -> {}",
                res.distances.len(),
                res.layer_widths,
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
