//! `ttsa` — reproducible two-time-scale stochastic approximation experiments.
//!
//! Subcommands: `simulate`, `analyze`, `inclusion`, `report`. All are driven
//! by one declarative config file; every flag mirrors a config key. Exit
//! codes: 0 ok, 2 config error, 3 stability violation, 4 analysis
//! infeasible.

mod config;
mod error;
mod experiment;
mod expr;
mod report;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Analysis, ExperimentConfig};
use error::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "ttsa",
    version,
    about = "Two-time-scale stochastic approximation lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run trajectories (plus any analyses listed in the config).
    Simulate(RunArgs),
    /// Run one analysis over cached or freshly simulated trajectories.
    Analyze(AnalyzeArgs),
    /// Build the slow differential inclusion, chain classes, and containment.
    Inclusion(InclusionArgs),
    /// Summarize an artifact directory.
    Report { dir: PathBuf },
}

/// Overrides mirroring config keys one-to-one.
#[derive(Args, Clone)]
struct RunArgs {
    /// Declarative config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario name: S1, S1b, S2, S3 or custom (config key `scenario`).
    #[arg(long)]
    scenario: Option<String>,
    /// Iterate count (config key `steps`).
    #[arg(long)]
    steps: Option<usize>,
    /// Seed; repeat for several (config key `seeds`).
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Output directory (config key `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Analyses to run after simulating (config key `analyses`).
    #[arg(long, value_delimiter = ',')]
    analyses: Option<Vec<String>>,
    /// Stability budget (config key `budget`).
    #[arg(long)]
    budget: Option<f64>,
    /// Fast step scale (config key `schedule.a.scale`).
    #[arg(long)]
    schedule_a_scale: Option<f64>,
    /// Fast step exponent (config key `schedule.a.exponent`).
    #[arg(long)]
    schedule_a_exponent: Option<f64>,
    /// Slow step scale (config key `schedule.b.scale`).
    #[arg(long)]
    schedule_b_scale: Option<f64>,
    /// Slow step exponent (config key `schedule.b.exponent`).
    #[arg(long)]
    schedule_b_exponent: Option<f64>,
    /// Noise kind: none or gaussian (config key `noise.kind`).
    #[arg(long)]
    noise_kind: Option<String>,
    /// Noise scale (config key `noise.sigma`).
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Analysis window length (config key `window.t`).
    #[arg(long)]
    window: Option<f64>,
    /// Window start iterates (config key `window.starts`).
    #[arg(long, value_delimiter = ',')]
    window_starts: Option<Vec<usize>>,
    /// Occupation/LP cell width (config key `grid.cell`).
    #[arg(long)]
    grid_cell: Option<f64>,
    /// Slow grid cells (config key `grid.slow-cells`).
    #[arg(long)]
    grid_slow_cells: Option<usize>,
    /// Chain slack in cells (config key `inclusion.eps-cells`).
    #[arg(long)]
    eps_cells: Option<usize>,
    /// Minimal hop duration (config key `inclusion.t-min`).
    #[arg(long)]
    t_min: Option<f64>,
    /// Invariant-program tolerance (config key `tol.lp`).
    #[arg(long)]
    tol_lp: Option<f64>,
    /// Containment tail fraction (config key `tail.fraction`).
    #[arg(long)]
    tail_fraction: Option<f64>,
    /// Parallel seed bound; 0 = auto, env TTSA_JOBS also applies (config key `jobs`).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Which analysis to run.
    #[arg(long)]
    what: String,
}

#[derive(Args)]
struct InclusionArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Slow grid cells (alias for --grid-slow-cells).
    #[arg(long)]
    grid: Option<usize>,
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &args.scenario {
        config.scenario = v.clone();
    }
    if let Some(v) = args.steps {
        config.steps = v;
    }
    if !args.seeds.is_empty() {
        config.seeds = args.seeds.clone();
    }
    if let Some(v) = &args.out {
        config.out = Some(v.display().to_string());
    }
    if let Some(names) = &args.analyses {
        config.analyses = names
            .iter()
            .map(|n| Analysis::from_name(n))
            .collect::<Result<_>>()?;
    }
    if let Some(v) = args.budget {
        config.budget = v;
    }
    if let Some(v) = args.schedule_a_scale {
        config.schedule_a_scale = v;
    }
    if let Some(v) = args.schedule_a_exponent {
        config.schedule_a_exponent = v;
    }
    if let Some(v) = args.schedule_b_scale {
        config.schedule_b_scale = v;
    }
    if let Some(v) = args.schedule_b_exponent {
        config.schedule_b_exponent = v;
    }
    if let Some(v) = &args.noise_kind {
        if v != "none" && v != "gaussian" {
            return Err(CliError::Config(format!(
                "noise kind must be `none` or `gaussian`, got `{v}`"
            )));
        }
        config.noise_kind = v.clone();
    }
    if let Some(v) = args.noise_sigma {
        config.noise_sigma = v;
    }
    if let Some(v) = args.window {
        config.window_t = v;
    }
    if let Some(v) = &args.window_starts {
        config.window_starts = v.clone();
    }
    if let Some(v) = args.grid_cell {
        config.grid_cell = v;
    }
    if let Some(v) = args.grid_slow_cells {
        config.grid_slow_cells = v;
    }
    if let Some(v) = args.eps_cells {
        config.inclusion_eps_cells = v;
    }
    if let Some(v) = args.t_min {
        config.inclusion_t_min = v;
    }
    if let Some(v) = args.tol_lp {
        config.tol_lp = v;
    }
    if let Some(v) = args.tail_fraction {
        config.tail_fraction = v;
    }
    if let Some(v) = args.jobs {
        config.jobs = v;
    }
    config.validate()?;
    Ok(config)
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate(args) => {
            let config = load_config(&args)?;
            let summary = experiment::run_experiment(&config, false)?;
            finish(summary)
        }
        Command::Analyze(args) => {
            let mut config = load_config(&args.run)?;
            config.analyses = vec![Analysis::from_name(&args.what)?];
            let summary = experiment::run_experiment(&config, true)?;
            finish(summary)
        }
        Command::Inclusion(args) => {
            let mut config = load_config(&args.run)?;
            if let Some(grid) = args.grid {
                config.grid_slow_cells = grid;
            }
            config.analyses = vec![Analysis::Inclusion, Analysis::Containment];
            let summary = experiment::run_experiment(&config, true)?;
            finish(summary)
        }
        Command::Report { dir } => {
            let (doc, text) = report::emit_report(&dir)?;
            fs::write(dir.join("report.json"), serde_json::to_vec_pretty(&doc)?)?;
            print!("{text}");
            Ok(0)
        }
    }
}

fn finish(summary: experiment::ExperimentSummary) -> Result<i32> {
    if summary.violations > 0 {
        eprintln!(
            "{} seed(s) hit the stability budget; see manifest.json in {}",
            summary.violations,
            summary.out_dir.display()
        );
        return Ok(3);
    }
    println!("artifacts written to {}", summary.out_dir.display());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
