//! Declarative experiment configs.
//!
//! The format is one `key = value` pair per line, `#` comments, dotted
//! lowercase keys. Values are scalars, space-separated lists, or raw
//! expression strings. Unknown and duplicate keys are rejected with their
//! line number. [`ExperimentConfig::render`] emits the canonical form, and
//! parsing that form reproduces the config exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use ttsa::engine::NoiseModel;
use ttsa::fields::{make_scenario, ProblemInstance};
use ttsa::markov::NoiseKernel;
use ttsa::schedule::{validate_schedule, StepSchedule, StepSpec};

use crate::error::{CliError, Result};
use crate::expr::{self, Expr};

#[derive(Debug, Clone, PartialEq)]
pub enum Analysis {
    Deviation,
    Occupation,
    Disintegration,
    Inclusion,
    Containment,
}

impl Analysis {
    pub fn name(&self) -> &'static str {
        match self {
            Analysis::Deviation => "deviation",
            Analysis::Occupation => "occupation",
            Analysis::Disintegration => "disintegration",
            Analysis::Inclusion => "inclusion",
            Analysis::Containment => "containment",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "deviation" => Analysis::Deviation,
            "occupation" => Analysis::Occupation,
            "disintegration" => Analysis::Disintegration,
            "inclusion" => Analysis::Inclusion,
            "containment" => Analysis::Containment,
            other => {
                return Err(CliError::Config(format!(
                    "unknown analysis `{other}` (expected deviation, occupation, disintegration, inclusion or containment)"
                )))
            }
        })
    }
}

/// Custom instance declared through expressions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CustomSpec {
    pub fast_dim: usize,
    pub slow_dim: usize,
    pub states: usize,
    pub fast_box: Vec<(f64, f64)>,
    pub slow_box: Vec<(f64, f64)>,
    pub init_fast: Vec<f64>,
    pub init_slow: Vec<f64>,
    /// One expression per fast coordinate.
    pub fast_drift: Vec<String>,
    /// One expression per slow coordinate.
    pub slow_drift: Vec<String>,
    /// Row-major kernel entries as expressions.
    pub kernel: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub steps: usize,
    pub seeds: Vec<u64>,
    pub out: Option<String>,
    pub analyses: Vec<Analysis>,
    pub budget: f64,
    pub schedule_a_scale: f64,
    pub schedule_a_exponent: f64,
    pub schedule_b_scale: f64,
    pub schedule_b_exponent: f64,
    pub noise_kind: String,
    pub noise_sigma: f64,
    pub window_t: f64,
    pub window_starts: Vec<usize>,
    pub grid_cell: f64,
    pub grid_slow_cells: usize,
    pub inclusion_eps_cells: usize,
    pub inclusion_t_min: f64,
    pub tol_lp: f64,
    pub tail_fraction: f64,
    pub jobs: usize,
    pub custom: Option<CustomSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: "S1".into(),
            steps: 100_000,
            seeds: vec![0],
            out: None,
            analyses: Vec::new(),
            budget: ttsa::defaults::STABILITY_BUDGET,
            schedule_a_scale: 1.0,
            schedule_a_exponent: ttsa::defaults::FAST_EXPONENT,
            schedule_b_scale: 1.0,
            schedule_b_exponent: ttsa::defaults::SLOW_EXPONENT,
            noise_kind: "gaussian".into(),
            noise_sigma: 0.1,
            window_t: ttsa::defaults::WINDOW_T,
            window_starts: vec![100, 1_000, 10_000, 100_000],
            grid_cell: ttsa::defaults::CELL_WIDTH,
            grid_slow_cells: ttsa::defaults::SLOW_GRID_CELLS,
            inclusion_eps_cells: ttsa::defaults::EPS_CELLS,
            inclusion_t_min: ttsa::defaults::T_MIN,
            tol_lp: ttsa::defaults::LP_RESIDUAL_TOL,
            tail_fraction: ttsa::defaults::TAIL_FRACTION,
            jobs: 0,
            custom: None,
        }
    }
}

fn config_err(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("line {line}: {msg}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(usize, String, String)> = Vec::new();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(config_err(line_no, format!("expected `key = value`, got `{line}`")));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if let Some(prev) = seen.insert(key.clone(), line_no) {
                return Err(config_err(
                    line_no,
                    format!("duplicate key `{key}` (first set on line {prev})"),
                ));
            }
            pairs.push((line_no, key, value));
        }

        let mut config = ExperimentConfig::default();
        let mut custom = CustomSpec::default();
        let mut saw_custom_key = false;

        for (line, key, value) in &pairs {
            let line = *line;
            match key.as_str() {
                "scenario" => config.scenario = value.clone(),
                "steps" => config.steps = parse_scalar(line, key, value)?,
                "seeds" => config.seeds = parse_list(line, key, value)?,
                "out" => config.out = Some(value.clone()),
                "analyses" => {
                    config.analyses = value
                        .split_whitespace()
                        .map(Analysis::from_name)
                        .collect::<Result<Vec<_>>>()
                        .map_err(|e| config_err(line, e))?
                }
                "budget" => config.budget = parse_scalar(line, key, value)?,
                "schedule.a.scale" => config.schedule_a_scale = parse_scalar(line, key, value)?,
                "schedule.a.exponent" => {
                    config.schedule_a_exponent = parse_scalar(line, key, value)?
                }
                "schedule.b.scale" => config.schedule_b_scale = parse_scalar(line, key, value)?,
                "schedule.b.exponent" => {
                    config.schedule_b_exponent = parse_scalar(line, key, value)?
                }
                "noise.kind" => {
                    if value != "none" && value != "gaussian" {
                        return Err(config_err(
                            line,
                            format!("noise.kind must be `none` or `gaussian`, got `{value}`"),
                        ));
                    }
                    config.noise_kind = value.clone();
                }
                "noise.sigma" => config.noise_sigma = parse_scalar(line, key, value)?,
                "window.t" => config.window_t = parse_scalar(line, key, value)?,
                "window.starts" => config.window_starts = parse_list(line, key, value)?,
                "grid.cell" => config.grid_cell = parse_scalar(line, key, value)?,
                "grid.slow-cells" => config.grid_slow_cells = parse_scalar(line, key, value)?,
                "inclusion.eps-cells" => {
                    config.inclusion_eps_cells = parse_scalar(line, key, value)?
                }
                "inclusion.t-min" => config.inclusion_t_min = parse_scalar(line, key, value)?,
                "tol.lp" => config.tol_lp = parse_scalar(line, key, value)?,
                "tail.fraction" => config.tail_fraction = parse_scalar(line, key, value)?,
                "jobs" => config.jobs = parse_scalar(line, key, value)?,
                "instance.fast-dim" => {
                    custom.fast_dim = parse_scalar(line, key, value)?;
                    saw_custom_key = true;
                }
                "instance.slow-dim" => {
                    custom.slow_dim = parse_scalar(line, key, value)?;
                    saw_custom_key = true;
                }
                "instance.states" => {
                    custom.states = parse_scalar(line, key, value)?;
                    saw_custom_key = true;
                }
                "instance.fast-box" => {
                    custom.fast_box = parse_bounds(line, key, value)?;
                    saw_custom_key = true;
                }
                "instance.slow-box" => {
                    custom.slow_box = parse_bounds(line, key, value)?;
                    saw_custom_key = true;
                }
                "instance.init-fast" => {
                    custom.init_fast = parse_list(line, key, value)?;
                    saw_custom_key = true;
                }
                "instance.init-slow" => {
                    custom.init_slow = parse_list(line, key, value)?;
                    saw_custom_key = true;
                }
                other => {
                    if let Some(rest) = other.strip_prefix("instance.fast-drift.") {
                        let i: usize = rest
                            .parse()
                            .map_err(|_| config_err(line, format!("bad key `{other}`")))?;
                        grow(&mut custom.fast_drift, i);
                        custom.fast_drift[i] = value.clone();
                        saw_custom_key = true;
                    } else if let Some(rest) = other.strip_prefix("instance.slow-drift.") {
                        let i: usize = rest
                            .parse()
                            .map_err(|_| config_err(line, format!("bad key `{other}`")))?;
                        grow(&mut custom.slow_drift, i);
                        custom.slow_drift[i] = value.clone();
                        saw_custom_key = true;
                    } else if let Some(rest) = other.strip_prefix("instance.kernel.") {
                        let (r, c) = rest.split_once('.').ok_or_else(|| {
                            config_err(line, format!("kernel key `{other}` needs row.column"))
                        })?;
                        let (r, c): (usize, usize) = (
                            r.parse()
                                .map_err(|_| config_err(line, format!("bad key `{other}`")))?,
                            c.parse()
                                .map_err(|_| config_err(line, format!("bad key `{other}`")))?,
                        );
                        if custom.kernel.len() <= r {
                            custom.kernel.resize(r + 1, Vec::new());
                        }
                        grow(&mut custom.kernel[r], c);
                        custom.kernel[r][c] = value.clone();
                        saw_custom_key = true;
                    } else {
                        return Err(config_err(line, format!("unknown key `{other}`")));
                    }
                }
            }
        }
        if saw_custom_key {
            config.custom = Some(custom);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(CliError::Config("steps must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("seeds must not be empty".into()));
        }
        if self.scenario == "custom" {
            let Some(custom) = &self.custom else {
                return Err(CliError::Config(
                    "scenario = custom needs instance.* keys".into(),
                ));
            };
            if custom.fast_dim == 0 || custom.slow_dim == 0 || custom.states == 0 {
                return Err(CliError::Config(
                    "custom instances need positive instance.fast-dim, instance.slow-dim and instance.states".into(),
                ));
            }
            let shape_ok = custom.fast_box.len() == custom.fast_dim
                && custom.slow_box.len() == custom.slow_dim
                && custom.init_fast.len() == custom.fast_dim
                && custom.init_slow.len() == custom.slow_dim
                && custom.fast_drift.len() == custom.fast_dim
                && custom.slow_drift.len() == custom.slow_dim
                && custom.kernel.len() == custom.states
                && custom.kernel.iter().all(|row| row.len() == custom.states)
                && custom.fast_drift.iter().all(|e| !e.is_empty())
                && custom.slow_drift.iter().all(|e| !e.is_empty())
                && custom
                    .kernel
                    .iter()
                    .all(|row| row.iter().all(|e| !e.is_empty()));
            if !shape_ok {
                return Err(CliError::Config(
                    "custom instance keys do not cover the declared dimensions".into(),
                ));
            }
        } else if self.custom.is_some() {
            return Err(CliError::Config(format!(
                "instance.* keys require scenario = custom, not `{}`",
                self.scenario
            )));
        }
        Ok(())
    }

    /// Canonical key order; parsing the output reproduces the config.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario = {}", self.scenario);
        let _ = writeln!(s, "steps = {}", self.steps);
        let _ = writeln!(s, "seeds = {}", join(&self.seeds));
        if let Some(out) = &self.out {
            let _ = writeln!(s, "out = {out}");
        }
        if !self.analyses.is_empty() {
            let names: Vec<&str> = self.analyses.iter().map(|a| a.name()).collect();
            let _ = writeln!(s, "analyses = {}", names.join(" "));
        }
        let _ = writeln!(s, "budget = {}", self.budget);
        let _ = writeln!(s, "schedule.a.scale = {}", self.schedule_a_scale);
        let _ = writeln!(s, "schedule.a.exponent = {}", self.schedule_a_exponent);
        let _ = writeln!(s, "schedule.b.scale = {}", self.schedule_b_scale);
        let _ = writeln!(s, "schedule.b.exponent = {}", self.schedule_b_exponent);
        let _ = writeln!(s, "noise.kind = {}", self.noise_kind);
        let _ = writeln!(s, "noise.sigma = {}", self.noise_sigma);
        let _ = writeln!(s, "window.t = {}", self.window_t);
        let _ = writeln!(s, "window.starts = {}", join(&self.window_starts));
        let _ = writeln!(s, "grid.cell = {}", self.grid_cell);
        let _ = writeln!(s, "grid.slow-cells = {}", self.grid_slow_cells);
        let _ = writeln!(s, "inclusion.eps-cells = {}", self.inclusion_eps_cells);
        let _ = writeln!(s, "inclusion.t-min = {}", self.inclusion_t_min);
        let _ = writeln!(s, "tol.lp = {}", self.tol_lp);
        let _ = writeln!(s, "tail.fraction = {}", self.tail_fraction);
        let _ = writeln!(s, "jobs = {}", self.jobs);
        if let Some(custom) = &self.custom {
            let _ = writeln!(s, "instance.fast-dim = {}", custom.fast_dim);
            let _ = writeln!(s, "instance.slow-dim = {}", custom.slow_dim);
            let _ = writeln!(s, "instance.states = {}", custom.states);
            let _ = writeln!(s, "instance.fast-box = {}", join_bounds(&custom.fast_box));
            let _ = writeln!(s, "instance.slow-box = {}", join_bounds(&custom.slow_box));
            let _ = writeln!(s, "instance.init-fast = {}", join(&custom.init_fast));
            let _ = writeln!(s, "instance.init-slow = {}", join(&custom.init_slow));
            for (i, e) in custom.fast_drift.iter().enumerate() {
                let _ = writeln!(s, "instance.fast-drift.{i} = {e}");
            }
            for (i, e) in custom.slow_drift.iter().enumerate() {
                let _ = writeln!(s, "instance.slow-drift.{i} = {e}");
            }
            for (r, row) in custom.kernel.iter().enumerate() {
                for (c, e) in row.iter().enumerate() {
                    let _ = writeln!(s, "instance.kernel.{r}.{c} = {e}");
                }
            }
        }
        s
    }

    /// FNV-1a over the canonical rendering.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self.render().bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        format!("fnv1a:{h:016x}")
    }

    pub fn noise_model(&self) -> NoiseModel {
        match self.noise_kind.as_str() {
            "none" => NoiseModel::None,
            _ => NoiseModel::Gaussian {
                sigma: self.noise_sigma,
            },
        }
    }

    pub fn schedule(&self) -> Result<StepSchedule> {
        Ok(validate_schedule(
            StepSpec::power(self.schedule_a_scale, self.schedule_a_exponent),
            StepSpec::power(self.schedule_b_scale, self.schedule_b_exponent),
            self.steps,
        )?)
    }

    /// Resolve to an instance with its initial point; scenario metadata is
    /// carried along for reporting when available.
    pub fn instance(&self) -> Result<ResolvedInstance> {
        if self.scenario == "custom" {
            let custom = self.custom.as_ref().expect("validated");
            let inst = build_custom(custom)?;
            return Ok(ResolvedInstance {
                instance: Arc::new(inst),
                init_fast: custom.init_fast.clone(),
                init_slow: custom.init_slow.clone(),
            });
        }
        let scenario = make_scenario(&self.scenario)?;
        Ok(ResolvedInstance {
            instance: Arc::clone(&scenario.instance),
            init_fast: scenario.init_fast.clone(),
            init_slow: scenario.init_slow.clone(),
        })
    }
}

pub struct ResolvedInstance {
    pub instance: Arc<ProblemInstance>,
    pub init_fast: Vec<f64>,
    pub init_slow: Vec<f64>,
}

fn build_custom(spec: &CustomSpec) -> Result<ProblemInstance> {
    let compile = |texts: &[String]| -> Result<Vec<Expr>> {
        texts
            .iter()
            .map(|t| {
                expr::parse(t, spec.fast_dim, spec.slow_dim)
                    .map_err(|e| CliError::Config(format!("bad expression `{t}`: {e}")))
            })
            .collect()
    };
    let fast_exprs = Arc::new(compile(&spec.fast_drift)?);
    let slow_exprs = Arc::new(compile(&spec.slow_drift)?);
    let kernel_rows: Vec<Vec<Expr>> = spec
        .kernel
        .iter()
        .map(|row| compile(row))
        .collect::<Result<_>>()?;
    let kernel_rows = Arc::new(kernel_rows);

    let fast = Arc::clone(&fast_exprs);
    let slow = Arc::clone(&slow_exprs);
    let rows = Arc::clone(&kernel_rows);
    Ok(ProblemInstance::new(
        spec.fast_dim,
        spec.slow_dim,
        NoiseKernel::new(
            spec.states,
            Arc::new(move |x: &[f64], y: &[f64], z: usize| {
                rows[z].iter().map(|e| e.eval(x, y, z)).collect()
            }),
        ),
        Arc::new(move |x: &[f64], y: &[f64], z: usize| {
            fast.iter().map(|e| e.eval(x, y, z)).collect()
        }),
        Arc::new(move |x: &[f64], y: &[f64], z: usize| {
            slow.iter().map(|e| e.eval(x, y, z)).collect()
        }),
        spec.fast_box.clone(),
        spec.slow_box.clone(),
    ))
}

fn grow(v: &mut Vec<String>, index: usize) {
    if v.len() <= index {
        v.resize(index + 1, String::new());
    }
}

fn parse_scalar<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(line, format!("bad value `{value}` for `{key}`")))
}

fn parse_list<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split_whitespace()
        .map(|v| {
            v.parse()
                .map_err(|_| config_err(line, format!("bad value `{v}` in `{key}`")))
        })
        .collect()
}

fn parse_bounds(line: usize, key: &str, value: &str) -> Result<Vec<(f64, f64)>> {
    let flat: Vec<f64> = parse_list(line, key, value)?;
    if !flat.len().is_multiple_of(2) {
        return Err(config_err(
            line,
            format!("`{key}` needs an even count of bounds (lo hi per dimension)"),
        ));
    }
    Ok(flat.chunks(2).map(|c| (c[0], c[1])).collect())
}

fn join<T: std::fmt::Display>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn join_bounds(bounds: &[(f64, f64)]) -> String {
    bounds
        .iter()
        .map(|(lo, hi)| format!("{lo} {hi}"))
        .collect::<Vec<_>>()
        .join(" ")
}
