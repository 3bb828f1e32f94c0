//! Windowed occupation measures on the slow clock and their structural tests.
//!
//! Over a slow-clock window, each recorded sample contributes an atom at its
//! grid-snapped fast point and exact noise state, weighted by the slow step
//! it occupies. Two diagnostics probe the limit structure: the stationarity
//! residual pairs the atoms against gradients of a smooth test family, and
//! the disintegration distance compares per-cell conditional state laws with
//! the frozen kernel's stationary law.

use std::collections::BTreeMap;
use std::io::Write;

use crate::defaults::{CUTOFF_MARGIN_FRAC, TEST_FAMILY_DEGREE};
use crate::error::{Error, Result};
use crate::fields::ProblemInstance;
use crate::linalg;
use crate::markov;
use crate::measure::AtomicMeasure;
use crate::record::TrajectoryRecord;
use crate::timescale::{record_slow_clock, Clock};

/// One weighted atom of an occupation measure.
#[derive(Debug, Clone, PartialEq)]
pub struct OccAtom {
    /// Grid cell index per fast dimension.
    pub cell: Vec<i64>,
    /// Cell center.
    pub center: Vec<f64>,
    /// Exact noise state.
    pub state: usize,
    pub weight: f64,
}

/// A normalized occupation measure over `(fast cell, state)` atoms.
#[derive(Debug, Clone)]
pub struct OccupationMeasure {
    pub atoms: Vec<OccAtom>,
    pub cell_width: f64,
    pub window_start_time: f64,
    pub window_len: f64,
    /// Slow iterate frozen at the window start.
    pub slow_ref: Vec<f64>,
    /// Observed `max_t |y(t) - y_ref|` across the window.
    pub slow_drift_max: f64,
}

impl OccupationMeasure {
    /// Build directly from raw `(fast point, state, weight)` triples; weights
    /// are snapped to the grid, merged per `(cell, state)`, and normalized.
    pub fn from_atoms(
        raw: impl IntoIterator<Item = (Vec<f64>, usize, f64)>,
        cell_width: f64,
        window_start_time: f64,
        window_len: f64,
        slow_ref: Vec<f64>,
    ) -> Result<Self> {
        let mut merged: BTreeMap<(Vec<i64>, usize), f64> = BTreeMap::new();
        for (point, state, weight) in raw {
            let cell = snap(&point, cell_width);
            *merged.entry((cell, state)).or_insert(0.0) += weight;
        }
        let total: f64 = merged.values().sum();
        if merged.is_empty() || total.is_nan() || total <= 0.0 {
            return Err(Error::BadWindow { start: 0 });
        }
        let atoms = merged
            .into_iter()
            .map(|((cell, state), weight)| OccAtom {
                center: cell_center(&cell, cell_width),
                cell,
                state,
                weight: weight / total,
            })
            .collect();
        Ok(Self {
            atoms,
            cell_width,
            window_start_time,
            window_len,
            slow_ref,
            slow_drift_max: 0.0,
        })
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// Marginal on the fast space (states summed out).
    pub fn x_marginal(&self) -> AtomicMeasure {
        let mut merged: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for a in &self.atoms {
            *merged.entry(a.cell.clone()).or_insert(0.0) += a.weight;
        }
        AtomicMeasure::from_unnormalized(
            merged
                .into_iter()
                .map(|(cell, w)| (cell_center(&cell, self.cell_width), w))
                .collect(),
        )
        .expect("occupation weights are positive")
    }

    /// CSV rows `cell_0..,z,weight`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.atoms.first().map_or(0, |a| a.center.len());
        for i in 0..d {
            write!(w, "cell_{i},")?;
        }
        writeln!(w, "z,weight")?;
        for a in &self.atoms {
            for c in &a.center {
                write!(w, "{c},")?;
            }
            writeln!(w, "{},{}", a.state, a.weight)?;
        }
        Ok(())
    }
}

pub fn snap(point: &[f64], cell_width: f64) -> Vec<i64> {
    point
        .iter()
        .map(|&x| (x / cell_width).floor() as i64)
        .collect()
}

pub fn cell_center(cell: &[i64], cell_width: f64) -> Vec<f64> {
    cell.iter()
        .map(|&i| (i as f64 + 0.5) * cell_width)
        .collect()
}

/// Occupation measure of the slow-clock window `[t(n), t(n) + T)`.
///
/// Every stored sample whose slow time falls in the window contributes an
/// atom weighted by its slow step. The window must close before the recorded
/// horizon ends.
pub fn window_occupation_measure(
    record: &TrajectoryRecord,
    start_iterate: usize,
    window_len: f64,
    cell_width: f64,
) -> Result<OccupationMeasure> {
    if !start_iterate.is_multiple_of(record.stride) {
        return Err(Error::BadWindow {
            start: start_iterate,
        });
    }
    let start_sample = start_iterate / record.stride;
    if start_sample >= record.len() {
        return Err(Error::BadWindow {
            start: start_iterate,
        });
    }
    let clock = record_slow_clock(record);
    let times = clock.times();
    let t0 = times[start_sample];
    if t0 + window_len > clock.end() {
        return Err(Error::TimeOutOfRange {
            scale: "slow",
            t: t0 + window_len,
            lo: 0.0,
            hi: clock.end(),
        });
    }
    let slow_ref = record.slow_at(start_sample).to_vec();
    let mut raw = Vec::new();
    let mut drift: f64 = 0.0;
    let mut j = start_sample;
    while j < record.len() && times[j] < t0 + window_len {
        let weight = record.schedule.slow_step(record.iterate_of(j));
        raw.push((record.fast_at(j).to_vec(), record.state_at(j), weight));
        drift = drift.max(linalg::dist(record.slow_at(j), &slow_ref));
        j += 1;
    }
    if raw.is_empty() {
        return Err(Error::BadWindow {
            start: start_iterate,
        });
    }
    let mut mu = OccupationMeasure::from_atoms(raw, cell_width, t0, window_len, slow_ref)?;
    mu.slow_drift_max = drift;
    Ok(mu)
}

/// Monomials up to a total degree, multiplied by a smooth cutoff that is 1 on
/// the box interior and falls to 0 across a margin strip.
#[derive(Debug, Clone)]
pub struct TestFunctionFamily {
    bounds: Vec<(f64, f64)>,
    margin: Vec<f64>,
    exponents: Vec<Vec<u32>>,
    ids: Vec<String>,
}

impl TestFunctionFamily {
    /// Degree-4 default family on a box.
    pub fn monomials(bounds: &[(f64, f64)]) -> Self {
        Self::monomials_up_to(bounds, TEST_FAMILY_DEGREE)
    }

    pub fn monomials_up_to(bounds: &[(f64, f64)], max_degree: u32) -> Self {
        let dim = bounds.len();
        let mut exponents = Vec::new();
        let mut stack = vec![vec![]];
        for _ in 0..dim {
            let mut next = Vec::new();
            for prefix in &stack {
                let used: u32 = prefix.iter().sum();
                for e in 0..=(max_degree - used) {
                    let mut p = prefix.clone();
                    p.push(e);
                    next.push(p);
                }
            }
            stack = next;
        }
        exponents.extend(stack);
        exponents.sort_by_key(|e| (e.iter().sum::<u32>(), e.clone()));
        let ids = exponents.iter().map(|e| monomial_id(e)).collect();
        let margin = bounds
            .iter()
            .map(|&(lo, hi)| CUTOFF_MARGIN_FRAC * (hi - lo))
            .collect();
        Self {
            bounds: bounds.to_vec(),
            margin,
            exponents,
            ids,
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn id(&self, f: usize) -> &str {
        &self.ids[f]
    }

    pub fn value(&self, f: usize, x: &[f64]) -> f64 {
        let e = &self.exponents[f];
        let mut v = 1.0;
        for i in 0..x.len() {
            v *= x[i].powi(e[i] as i32) * self.cutoff(i, x[i]);
        }
        v
    }

    /// Analytic gradient (product rule over monomial and cutoff factors).
    pub fn gradient(&self, f: usize, x: &[f64]) -> Vec<f64> {
        let e = &self.exponents[f];
        let dim = x.len();
        let factors: Vec<f64> = (0..dim)
            .map(|i| x[i].powi(e[i] as i32) * self.cutoff(i, x[i]))
            .collect();
        (0..dim)
            .map(|j| {
                let power_part = if e[j] == 0 {
                    0.0
                } else {
                    e[j] as f64 * x[j].powi(e[j] as i32 - 1) * self.cutoff(j, x[j])
                };
                let cutoff_part = x[j].powi(e[j] as i32) * self.cutoff_deriv(j, x[j]);
                let own = power_part + cutoff_part;
                let rest: f64 = (0..dim).filter(|&i| i != j).map(|i| factors[i]).product();
                own * rest
            })
            .collect()
    }

    /// True where every cutoff factor is identically 1, so the functions are
    /// plain monomials there.
    pub fn flat_at(&self, point: &[f64]) -> bool {
        point.iter().enumerate().all(|(i, &u)| {
            let (lo, hi) = self.bounds[i];
            u >= lo + self.margin[i] && u <= hi - self.margin[i]
        })
    }

    fn cutoff(&self, dim: usize, u: f64) -> f64 {
        let (lo, hi) = self.bounds[dim];
        let m = self.margin[dim];
        if u <= lo || u >= hi {
            0.0
        } else if u < lo + m {
            smoothstep((u - lo) / m)
        } else if u > hi - m {
            smoothstep((hi - u) / m)
        } else {
            1.0
        }
    }

    fn cutoff_deriv(&self, dim: usize, u: f64) -> f64 {
        let (lo, hi) = self.bounds[dim];
        let m = self.margin[dim];
        if u <= lo || u >= hi {
            0.0
        } else if u < lo + m {
            smoothstep_deriv((u - lo) / m) / m
        } else if u > hi - m {
            -smoothstep_deriv((hi - u) / m) / m
        } else {
            0.0
        }
    }
}

/// Quintic smoothstep: C^2, flat at both ends.
fn smoothstep(v: f64) -> f64 {
    v * v * v * (10.0 - 15.0 * v + 6.0 * v * v)
}

fn smoothstep_deriv(v: f64) -> f64 {
    30.0 * v * v * (1.0 - v) * (1.0 - v)
}

fn monomial_id(exponents: &[u32]) -> String {
    let parts: Vec<String> = exponents
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(i, &e)| {
            if e == 1 {
                format!("x{i}")
            } else {
                format!("x{i}^{e}")
            }
        })
        .collect();
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join("*")
    }
}

/// Residuals of one test function against an occupation measure.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ResidualRow {
    pub function: String,
    /// Atoms paired with their own states.
    pub joint: f64,
    /// Atoms paired with the stationary law at their cell.
    pub averaged: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ResidualReport {
    pub rows: Vec<ResidualRow>,
    pub max_abs_joint: f64,
    pub max_abs_averaged: f64,
    /// `max_t |y(t) - y_ref|` of the window the measure came from.
    pub slow_drift_max: f64,
}

impl ResidualReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "function,joint,averaged")?;
        for row in &self.rows {
            writeln!(w, "{},{},{}", row.function, row.joint, row.averaged)?;
        }
        Ok(())
    }
}

/// Stationarity residuals `sum_atoms w <grad f, drift>` for every family
/// member, in both the joint and the kernel-averaged form.
pub fn stationarity_residual(
    mu: &OccupationMeasure,
    inst: &ProblemInstance,
    family: &TestFunctionFamily,
) -> Result<ResidualReport> {
    let mut law_cache: BTreeMap<Vec<i64>, Vec<f64>> = BTreeMap::new();
    for atom in &mu.atoms {
        if !law_cache.contains_key(&atom.cell) {
            let m = markov::kernel_at(&inst.kernel, &atom.center, &mu.slow_ref)?;
            let law = markov::stationary_distribution(&m)?;
            law_cache.insert(atom.cell.clone(), law.probabilities().to_vec());
        }
    }
    let mut rows = Vec::with_capacity(family.len());
    for f in 0..family.len() {
        let mut joint = 0.0;
        let mut averaged = 0.0;
        for atom in &mu.atoms {
            let grad = family.gradient(f, &atom.center);
            let drift = inst.fast_drift(&atom.center, &mu.slow_ref, atom.state);
            joint += atom.weight * linalg::dot(&grad, &drift);
            let law = &law_cache[&atom.cell];
            for (z, &pz) in law.iter().enumerate() {
                if pz == 0.0 {
                    continue;
                }
                let drift_z = inst.fast_drift(&atom.center, &mu.slow_ref, z);
                averaged += atom.weight * pz * linalg::dot(&grad, &drift_z);
            }
        }
        rows.push(ResidualRow {
            function: family.id(f).to_string(),
            joint,
            averaged,
        });
    }
    let max_abs_joint = rows.iter().map(|r| r.joint.abs()).fold(0.0, f64::max);
    let max_abs_averaged = rows.iter().map(|r| r.averaged.abs()).fold(0.0, f64::max);
    Ok(ResidualReport {
        rows,
        max_abs_joint,
        max_abs_averaged,
        slow_drift_max: mu.slow_drift_max,
    })
}

/// Mass-weighted total variation between the per-cell conditional state law
/// and the stationary law at the cell center.
pub fn disintegration_distance(mu: &OccupationMeasure, inst: &ProblemInstance) -> Result<f64> {
    let n_states = inst.kernel.n_states();
    let mut cells: BTreeMap<Vec<i64>, Vec<f64>> = BTreeMap::new();
    for atom in &mu.atoms {
        cells.entry(atom.cell.clone()).or_insert_with(|| vec![0.0; n_states])[atom.state] +=
            atom.weight;
    }
    let mut total = 0.0;
    for (cell, state_mass) in &cells {
        let mass: f64 = state_mass.iter().sum();
        let center = cell_center(cell, mu.cell_width);
        let m = markov::kernel_at(&inst.kernel, &center, &mu.slow_ref)?;
        let law = markov::stationary_distribution(&m)?;
        let tv: f64 = (0..n_states)
            .map(|z| (state_mass[z] / mass - law.prob(z)).abs())
            .sum::<f64>()
            / 2.0;
        total += mass * tv;
    }
    Ok(total)
}

/// The realized trajectory as a piecewise-constant single-atom measure path
/// on the slow clock: the driver of the measure-fed slow ODE.
#[derive(Debug)]
pub struct PathMeasure<'a> {
    record: &'a TrajectoryRecord,
    clock: Clock,
}

impl<'a> PathMeasure<'a> {
    pub fn new(record: &'a TrajectoryRecord) -> Self {
        Self {
            record,
            clock: record_slow_clock(record),
        }
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    /// The atom carried on segment `[t(j), t(j+1))`.
    pub fn atom_at(&self, sample: usize) -> (&[f64], usize) {
        (self.record.fast_at(sample), self.record.state_at(sample))
    }
}
