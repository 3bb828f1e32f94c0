//! Experiment orchestration: seed fan-out, analyses, artifact files.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use ttsa::engine::run_iterates;
use ttsa::invariants::{
    build_inclusion_model, chain_recurrent_set, check_limit_points, write_inclusion_csv,
    ChainClasses, InclusionModel, InclusionParams,
};
use ttsa::occupation::{
    disintegration_distance, stationarity_residual, window_occupation_measure, PathMeasure,
    TestFunctionFamily,
};
use ttsa::record::{read_cache, TrajectoryRecord};
use ttsa::timescale::{
    build_clocks, fast_deviation, record_slow_clock, slow_deviation, write_deviation_csv,
};

use crate::config::{Analysis, ExperimentConfig, ResolvedInstance};
use crate::error::{CliError, Result};

#[derive(Debug, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub stability_violation: Option<String>,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: String,
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub version: String,
    pub created_unix: u64,
    pub artifacts: Vec<String>,
    pub seed_outcomes: Vec<SeedOutcome>,
}

pub struct ExperimentSummary {
    pub out_dir: PathBuf,
    pub violations: usize,
}

/// Thread budget: explicit config, then `TTSA_JOBS`, then the machine.
fn job_bound(config: &ExperimentConfig) -> usize {
    if config.jobs > 0 {
        return config.jobs;
    }
    if let Ok(v) = std::env::var("TTSA_JOBS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                return n;
            }
        }
    }
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Run the trajectories and every requested analysis, writing artifacts under
/// the config's output directory. Stability violations are reported per seed
/// without aborting the other seeds.
pub fn run_experiment(config: &ExperimentConfig, reuse_cache: bool) -> Result<ExperimentSummary> {
    let out_dir = PathBuf::from(config.out.clone().ok_or_else(|| {
        CliError::Config("no output directory (set `out` in the config or pass --out)".into())
    })?);
    fs::create_dir_all(&out_dir)?;

    let resolved = config.instance()?;
    let schedule = config.schedule()?;
    let noise = config.noise_model();

    // The inclusion machinery is seed-independent; build it once up front.
    let wants_inclusion = config.analyses.contains(&Analysis::Inclusion);
    let wants_containment = config.analyses.contains(&Analysis::Containment);
    let inclusion = if wants_inclusion || wants_containment {
        let family = TestFunctionFamily::monomials(&resolved.instance.fast_box);
        let params = InclusionParams {
            slow_cells: config.grid_slow_cells,
            fast_cell_width: config.grid_cell,
            lp_tol: config.tol_lp,
            eps_cells: config.inclusion_eps_cells,
            t_min: config.inclusion_t_min,
            ..InclusionParams::default()
        };
        let model = build_inclusion_model(&resolved.instance, &family, params)?;
        let classes = chain_recurrent_set(&model);
        Some((model, classes))
    } else {
        None
    };

    let jobs = job_bound(config).max(1);
    let mut outcomes: Vec<SeedOutcome> = Vec::with_capacity(config.seeds.len());
    for chunk in config.seeds.chunks(jobs) {
        let mut chunk_results: Vec<Option<Result<SeedOutcome>>> = Vec::new();
        chunk_results.resize_with(chunk.len(), || None);
        std::thread::scope(|scope| {
            for (slot, &seed) in chunk_results.iter_mut().zip(chunk) {
                let resolved = &resolved;
                let schedule = &schedule;
                let inclusion = inclusion.as_ref();
                let out_dir = out_dir.clone();
                scope.spawn(move || {
                    *slot = Some(run_seed(
                        config, resolved, schedule, noise, inclusion, &out_dir, seed,
                        reuse_cache,
                    ));
                });
            }
        });
        for result in chunk_results.into_iter().flatten() {
            outcomes.push(result?);
        }
    }

    let mut artifacts: Vec<String> = Vec::new();
    if let Some((model, classes)) = &inclusion {
        if wants_inclusion {
            let mut csv = Vec::new();
            write_inclusion_csv(model, classes, &mut csv)?;
            fs::write(out_dir.join("inclusion.csv"), csv)?;
            let doc = InclusionDoc::new(model, classes);
            fs::write(
                out_dir.join("inclusion.json"),
                serde_json::to_vec_pretty(&doc)?,
            )?;
            artifacts.push("inclusion.csv".into());
            artifacts.push("inclusion.json".into());
        }
    }
    for outcome in &outcomes {
        artifacts.extend(outcome.artifacts.iter().cloned());
    }

    let violations = outcomes
        .iter()
        .filter(|o| o.stability_violation.is_some())
        .count();
    let manifest = Manifest {
        config_hash: config.hash(),
        config: config.render(),
        scenario: config.scenario.clone(),
        seeds: config.seeds.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        artifacts,
        seed_outcomes: outcomes,
    };
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;

    Ok(ExperimentSummary {
        out_dir,
        violations,
    })
}

#[derive(Serialize)]
struct InclusionDoc {
    grid: ttsa::invariants::SlowGrid,
    eps: f64,
    t_min: f64,
    classes: Vec<Vec<f64>>,
}

impl InclusionDoc {
    fn new(model: &InclusionModel, classes: &ChainClasses) -> Self {
        Self {
            grid: model.grid,
            eps: model.eps,
            t_min: model.t_min,
            classes: classes
                .classes
                .iter()
                .map(|class| class.iter().map(|&c| model.grid.center(c)).collect())
                .collect(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_seed(
    config: &ExperimentConfig,
    resolved: &ResolvedInstance,
    schedule: &ttsa::schedule::StepSchedule,
    noise: ttsa::engine::NoiseModel,
    inclusion: Option<&(InclusionModel, ChainClasses)>,
    out_dir: &Path,
    seed: u64,
    reuse_cache: bool,
) -> Result<SeedOutcome> {
    let seed_dir = out_dir.join(format!("seed_{seed}"));
    fs::create_dir_all(&seed_dir)?;
    let mut artifacts = Vec::new();
    let rel = |name: &str| format!("seed_{seed}/{name}");

    let cache_path = seed_dir.join("trajectory.bin");
    let record = if reuse_cache && cache_path.exists() {
        let bytes = fs::read(&cache_path)?;
        let cache = read_cache(bytes.as_slice())?;
        TrajectoryRecord::from_cache(
            cache,
            Arc::clone(&resolved.instance),
            schedule.clone(),
            noise,
            seed,
            ttsa::engine::default_stride(config.steps),
            config.steps,
        )?
    } else {
        match run_iterates(
            &resolved.instance,
            schedule,
            resolved.init_fast.clone(),
            resolved.init_slow.clone(),
            config.steps,
            seed,
            &noise,
            config.budget,
        ) {
            Ok(record) => record,
            Err(err @ ttsa::Error::StabilityViolation { .. })
            | Err(err @ ttsa::Error::Diverged { .. }) => {
                return Ok(SeedOutcome {
                    seed,
                    stability_violation: Some(err.to_string()),
                    artifacts,
                });
            }
            Err(other) => return Err(other.into()),
        }
    };

    let mut csv = Vec::new();
    record.write_csv(&mut csv)?;
    fs::write(seed_dir.join("trajectory.csv"), csv)?;
    let mut bin = Vec::new();
    record.write_cache(&mut bin)?;
    fs::write(&cache_path, bin)?;
    artifacts.push(rel("trajectory.csv"));
    artifacts.push(rel("trajectory.bin"));

    for analysis in &config.analyses {
        match analysis {
            Analysis::Deviation => {
                let (fast_rows, slow_rows) = deviation_rows(config, &record)?;
                let mut buf = Vec::new();
                write_deviation_csv(&fast_rows, &mut buf)?;
                fs::write(seed_dir.join("deviation.csv"), buf)?;
                artifacts.push(rel("deviation.csv"));
                let mut buf = Vec::new();
                write_deviation_csv(&slow_rows, &mut buf)?;
                fs::write(seed_dir.join("deviation_slow.csv"), buf)?;
                artifacts.push(rel("deviation_slow.csv"));
            }
            Analysis::Occupation => {
                let family = TestFunctionFamily::monomials(&resolved.instance.fast_box);
                for &start in &fitting_slow_starts(config, &record)? {
                    let mu = window_occupation_measure(
                        &record,
                        start,
                        config.window_t,
                        config.grid_cell,
                    )?;
                    let mut buf = Vec::new();
                    mu.write_csv(&mut buf)?;
                    fs::write(seed_dir.join(format!("occupation_{start}.csv")), buf)?;
                    artifacts.push(rel(&format!("occupation_{start}.csv")));
                    let report = stationarity_residual(&mu, &resolved.instance, &family)?;
                    let mut buf = Vec::new();
                    report.write_csv(&mut buf)?;
                    fs::write(seed_dir.join(format!("residuals_{start}.csv")), buf)?;
                    artifacts.push(rel(&format!("residuals_{start}.csv")));
                }
            }
            Analysis::Disintegration => {
                let mut buf = Vec::new();
                writeln!(
                    buf,
                    "window_start_iterate,window_start_time,tv_distance,slow_drift_max"
                )
                .map_err(ttsa::Error::from)?;
                for &start in &fitting_slow_starts(config, &record)? {
                    let mu = window_occupation_measure(
                        &record,
                        start,
                        config.window_t,
                        config.grid_cell,
                    )?;
                    let tv = disintegration_distance(&mu, &resolved.instance)?;
                    writeln!(
                        buf,
                        "{start},{},{tv},{}",
                        mu.window_start_time, mu.slow_drift_max
                    )
                    .map_err(ttsa::Error::from)?;
                }
                fs::write(seed_dir.join("disintegration.csv"), buf)?;
                artifacts.push(rel("disintegration.csv"));
            }
            Analysis::Containment => {
                let (model, classes) = inclusion.expect("built when containment is requested");
                let report = check_limit_points(&record, classes, model, config.tail_fraction)?;
                fs::write(
                    seed_dir.join("containment.json"),
                    serde_json::to_vec_pretty(&report)?,
                )?;
                artifacts.push(rel("containment.json"));
            }
            Analysis::Inclusion => {} // seed-independent, written at the root
        }
    }

    Ok(SeedOutcome {
        seed,
        stability_violation: None,
        artifacts,
    })
}

/// Deviation rows `(window_start_time, deviation)` for one clock.
type DeviationRows = Vec<(f64, f64)>;

/// Window starts whose fast (resp. slow) window closes inside the horizon.
fn deviation_rows(
    config: &ExperimentConfig,
    record: &TrajectoryRecord,
) -> Result<(DeviationRows, DeviationRows)> {
    let (fast_clock, slow_clock) = build_clocks(&record.schedule, record.n_steps);
    let mut fast_rows = Vec::new();
    let mut slow_rows = Vec::new();
    let source = PathMeasure::new(record);
    for &start in &config.window_starts {
        if !start.is_multiple_of(record.stride) || start > record.n_steps {
            continue;
        }
        let t_fast = fast_clock.times()[start];
        if t_fast + config.window_t <= fast_clock.end() {
            fast_rows.push((t_fast, fast_deviation(record, start, config.window_t)?));
        }
        let t_slow = slow_clock.times()[start];
        if t_slow + config.window_t <= slow_clock.end() {
            slow_rows.push((
                t_slow,
                slow_deviation(record, &source, start, config.window_t)?,
            ));
        }
    }
    if fast_rows.is_empty() && slow_rows.is_empty() {
        return Err(CliError::Analysis(format!(
            "no deviation window from starts {:?} fits a horizon of {} steps",
            config.window_starts, record.n_steps
        )));
    }
    Ok((fast_rows, slow_rows))
}

fn fitting_slow_starts(
    config: &ExperimentConfig,
    record: &TrajectoryRecord,
) -> Result<Vec<usize>> {
    let clock = record_slow_clock(record);
    let starts: Vec<usize> = config
        .window_starts
        .iter()
        .copied()
        .filter(|&start| {
            start.is_multiple_of(record.stride)
                && start / record.stride < record.len()
                && clock.times()[start / record.stride] + config.window_t <= clock.end()
        })
        .collect();
    if starts.is_empty() {
        return Err(CliError::Analysis(format!(
            "no slow window from starts {:?} fits a horizon of {} steps",
            config.window_starts, record.n_steps
        )));
    }
    Ok(starts)
}
