//! One-page summaries assembled from artifact files.
//!
//! Every number in the report is read back from an artifact (trajectory CSV,
//! residual CSVs, containment JSON); nothing is recomputed from the model.
//! The text table renders the same document that is serialized to JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use ttsa::fields::make_scenario;

use crate::error::{CliError, Result};

#[derive(Debug, Deserialize)]
struct ManifestIn {
    config_hash: String,
    scenario: String,
    seeds: Vec<u64>,
    version: String,
    seed_outcomes: Vec<SeedOutcomeIn>,
}

#[derive(Debug, Deserialize)]
struct SeedOutcomeIn {
    seed: u64,
    stability_violation: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ContainmentIn {
    contained: bool,
    fraction: f64,
}

#[derive(Debug, Serialize)]
pub struct ReportDoc {
    pub scenario: String,
    pub config_hash: String,
    pub version: String,
    pub seeds: Vec<SeedReport>,
}

#[derive(Debug, Serialize)]
pub struct SeedReport {
    pub seed: u64,
    pub stability_violation: Option<String>,
    pub final_fast: Vec<f64>,
    pub final_slow: Vec<f64>,
    pub target_fast: Option<Vec<f64>>,
    pub target_slow: Option<Vec<f64>>,
    pub target_gap: Option<f64>,
    pub residual_windows: Vec<ResidualWindow>,
    pub residual_decay_ratio: Option<f64>,
    pub containment: Option<ContainmentSummary>,
}

#[derive(Debug, Serialize)]
pub struct ResidualWindow {
    pub start_iterate: usize,
    pub max_abs_joint: f64,
}

#[derive(Debug, Serialize)]
pub struct ContainmentSummary {
    pub contained: bool,
    pub fraction: f64,
}

/// Build the report document and its text rendering from an artifact dir.
pub fn emit_report(dir: &Path) -> Result<(ReportDoc, String)> {
    let manifest_path = dir.join("manifest.json");
    let manifest: ManifestIn = serde_json::from_slice(
        &fs::read(&manifest_path)
            .map_err(|e| CliError::Other(anyhow::anyhow!("no manifest at {manifest_path:?}: {e}")))?,
    )
    .map_err(|e| CliError::Other(anyhow::anyhow!("corrupt manifest: {e}")))?;

    let target = make_scenario(&manifest.scenario)
        .ok()
        .and_then(|sc| sc.known.equilibrium.clone());

    let mut seeds = Vec::new();
    for &seed in &manifest.seeds {
        let outcome = manifest
            .seed_outcomes
            .iter()
            .find(|o| o.seed == seed);
        let violation = outcome.and_then(|o| o.stability_violation.clone());
        if violation.is_some() {
            seeds.push(SeedReport {
                seed,
                stability_violation: violation,
                final_fast: vec![],
                final_slow: vec![],
                target_fast: None,
                target_slow: None,
                target_gap: None,
                residual_windows: vec![],
                residual_decay_ratio: None,
                containment: None,
            });
            continue;
        }
        let seed_dir = dir.join(format!("seed_{seed}"));
        let (final_fast, final_slow) = final_state(&seed_dir)?;
        let residual_windows = residual_windows(&seed_dir)?;
        let residual_decay_ratio = match (residual_windows.first(), residual_windows.last()) {
            (Some(first), Some(last)) if residual_windows.len() >= 2 && last.max_abs_joint > 0.0 => {
                Some(first.max_abs_joint / last.max_abs_joint)
            }
            _ => None,
        };
        let containment = read_containment(&seed_dir)?;
        let (target_fast, target_slow, target_gap) = match &target {
            Some((tf, ts)) => {
                let gap = dist(&final_fast, tf) + dist(&final_slow, ts);
                (Some(tf.clone()), Some(ts.clone()), Some(gap))
            }
            None => (None, None, None),
        };
        seeds.push(SeedReport {
            seed,
            stability_violation: None,
            final_fast,
            final_slow,
            target_fast,
            target_slow,
            target_gap,
            residual_windows,
            residual_decay_ratio,
            containment,
        });
    }

    let doc = ReportDoc {
        scenario: manifest.scenario,
        config_hash: manifest.config_hash,
        version: manifest.version,
        seeds,
    };
    let text = render_text(&doc);
    Ok((doc, text))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Last data row of the trajectory CSV.
fn final_state(seed_dir: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(seed_dir.join("trajectory.csv"))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Other(anyhow::anyhow!("empty trajectory.csv")))?;
    let fast_dim = header.split(',').filter(|c| c.starts_with("x_")).count();
    let slow_dim = header.split(',').filter(|c| c.starts_with("y_")).count();
    let last = lines
        .last()
        .ok_or_else(|| CliError::Other(anyhow::anyhow!("trajectory.csv has no data rows")))?;
    let cells: Vec<f64> = last
        .split(',')
        .map(|c| c.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::Other(anyhow::anyhow!("bad trajectory row `{last}`: {e}")))?;
    Ok((
        cells[1..1 + fast_dim].to_vec(),
        cells[1 + fast_dim..1 + fast_dim + slow_dim].to_vec(),
    ))
}

/// Per-window max |joint residual| from `residuals_{n}.csv`, sorted by start.
fn residual_windows(seed_dir: &Path) -> Result<Vec<ResidualWindow>> {
    let mut windows = Vec::new();
    for entry in fs::read_dir(seed_dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        let Some(start) = name
            .strip_prefix("residuals_")
            .and_then(|rest| rest.strip_suffix(".csv"))
            .and_then(|num| num.parse::<usize>().ok())
        else {
            continue;
        };
        let text = fs::read_to_string(entry.path())?;
        let max_abs_joint = text
            .lines()
            .skip(1)
            .filter_map(|line| line.split(',').nth(1))
            .filter_map(|v| v.parse::<f64>().ok())
            .map(f64::abs)
            .fold(0.0, f64::max);
        windows.push(ResidualWindow {
            start_iterate: start,
            max_abs_joint,
        });
    }
    windows.sort_by_key(|w| w.start_iterate);
    Ok(windows)
}

fn read_containment(seed_dir: &Path) -> Result<Option<ContainmentSummary>> {
    let path = seed_dir.join("containment.json");
    if !path.exists() {
        return Ok(None);
    }
    let data: ContainmentIn = serde_json::from_slice(&fs::read(path)?)?;
    Ok(Some(ContainmentSummary {
        contained: data.contained,
        fraction: data.fraction,
    }))
}

fn render_text(doc: &ReportDoc) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment report");
    let _ = writeln!(s, "scenario: {}", doc.scenario);
    let _ = writeln!(s, "config:   {}", doc.config_hash);
    let _ = writeln!(s, "version:  {}", doc.version);
    for seed in &doc.seeds {
        let _ = writeln!(s, "seed {}:", seed.seed);
        if let Some(violation) = &seed.stability_violation {
            let _ = writeln!(s, "  {violation}");
            continue;
        }
        let _ = writeln!(s, "  final fast: {:?}", seed.final_fast);
        let _ = writeln!(s, "  final slow: {:?}", seed.final_slow);
        if let (Some(tf), Some(ts), Some(gap)) =
            (&seed.target_fast, &seed.target_slow, seed.target_gap)
        {
            let _ = writeln!(s, "  target:     {tf:?} / {ts:?} (gap {gap})");
        }
        for w in &seed.residual_windows {
            let _ = writeln!(
                s,
                "  residual window n={}: max |joint| = {}",
                w.start_iterate, w.max_abs_joint
            );
        }
        if let Some(ratio) = seed.residual_decay_ratio {
            let _ = writeln!(s, "  residual decay ratio: {ratio}");
        }
        if let Some(c) = &seed.containment {
            let _ = writeln!(
                s,
                "  containment: {} (tail fraction {})",
                if c.contained { "contained" } else { "NOT contained" },
                c.fraction
            );
        }
    }
    s
}
