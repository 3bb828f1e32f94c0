//! Invariant-measure sets, the set-valued slow drift, and chain recurrence.
//!
//! For a frozen slow point the invariant distributions of the averaged fast
//! ODE form a nonempty compact convex set. Against a finite test family that
//! set relaxes to finitely many linear constraints on grid-cell weights, so
//! membership is a linear program: feasibility realizes one member, random
//! and structured linear objectives realize approximate extreme points, and
//! extremizing the averaged slow drift realizes the set-valued drift range.
//! A slow-grid digraph of minimum-duration hops then approximates the
//! internally chain transitive sets of the induced differential inclusion.

use std::io::Write;

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::defaults::{
    BISECTION_TOL, CELL_WIDTH, CONTAINMENT_FRACTION, EPS_CELLS, HOP_SUBSTEPS, LP_RESIDUAL_TOL,
    LP_WEIGHT_FLOOR, SLOW_GRID_CELLS, TAIL_MIN_SAMPLES, T_MIN,
};
use crate::error::{Error, Result};
use crate::fields::{averaged_fast_field, averaged_slow_drift_at, ProblemInstance};
use crate::measure::AtomicMeasure;
use crate::occupation::TestFunctionFamily;
use crate::record::TrajectoryRecord;
use crate::scc::strongly_connected_components;

/// All sign-change roots of the averaged fast field on an interval (1-D).
///
/// The interval is scanned at `resolution` points and each sign change is
/// refined by bisection to [`BISECTION_TOL`].
pub fn equilibria_1d(
    inst: &ProblemInstance,
    slow: &[f64],
    interval: (f64, f64),
    resolution: usize,
) -> Result<Vec<f64>> {
    if inst.fast_dim != 1 {
        return Err(Error::Unsupported(
            "equilibria_1d needs a one-dimensional fast space",
        ));
    }
    let field = |x: f64| -> Result<f64> { Ok(averaged_fast_field(inst, &[x], slow)?[0]) };
    let (lo, hi) = interval;
    assert!(hi > lo && resolution >= 2);
    let step = (hi - lo) / resolution as f64;
    let mut roots = Vec::new();
    let mut prev_x = lo;
    let mut prev_v = field(lo)?;
    for i in 1..=resolution {
        let x = lo + step * i as f64;
        let v = field(x)?;
        if prev_v == 0.0 {
            roots.push(prev_x);
        } else if prev_v * v < 0.0 {
            let (mut a, mut b) = (prev_x, x);
            let (mut fa, _fb) = (prev_v, v);
            while b - a > BISECTION_TOL {
                let m = 0.5 * (a + b);
                let fm = field(m)?;
                if fm == 0.0 {
                    a = m;
                    b = m;
                } else if fa * fm < 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev_x = x;
        prev_v = v;
    }
    if prev_v == 0.0 {
        roots.push(prev_x);
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-8);
    Ok(roots)
}

/// Uniform cell grid covering a box of the fast space.
#[derive(Debug, Clone)]
pub struct FastGrid {
    pub bounds: Vec<(f64, f64)>,
    pub cell_width: f64,
    cells_per_dim: Vec<usize>,
}

impl FastGrid {
    pub fn covering(bounds: &[(f64, f64)], cell_width: f64) -> Self {
        assert!(cell_width > 0.0);
        let cells_per_dim = bounds
            .iter()
            .map(|&(lo, hi)| (((hi - lo) / cell_width).round() as usize).max(1))
            .collect();
        Self {
            bounds: bounds.to_vec(),
            cell_width,
            cells_per_dim,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.cells_per_dim.iter().product()
    }

    pub fn center(&self, mut flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.bounds.len()];
        for dim in (0..self.bounds.len()).rev() {
            let n = self.cells_per_dim[dim];
            let idx = flat % n;
            flat /= n;
            out[dim] = self.bounds[dim].0 + (idx as f64 + 0.5) * self.cell_width;
        }
        out
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.n_cells()).map(|i| self.center(i)).collect()
    }
}

/// How an invariant-measure set is represented.
#[derive(Debug, Clone)]
pub enum InvariantRepresentation {
    /// 1-D exact form: Diracs at the roots of the averaged fast field.
    ExactRoots(Vec<f64>),
    /// General form: the LP-feasible polytope over a grid.
    GridPolytope(GridPolytope),
}

/// The constraint system of the grid LP, kept so the drift range can be
/// extremized over the same polytope without rebuilding rows.
#[derive(Debug, Clone)]
pub struct GridPolytope {
    pub grid: FastGrid,
    centers: Vec<Vec<f64>>,
    /// Normalized constraint rows, one per surviving test function.
    rows: Vec<Vec<f64>>,
    pub tol: f64,
}

impl GridPolytope {
    fn solve(&self, objective: &[f64], direction: OptimizationDirection) -> Result<Vec<f64>> {
        let n = self.centers.len();
        let mut problem = Problem::new(direction);
        let vars: Vec<_> = (0..n)
            .map(|c| problem.add_var(objective[c], (0.0, 1.0)))
            .collect();
        let everything: Vec<_> = vars.iter().map(|&v| (v, 1.0)).collect();
        problem.add_constraint(everything.as_slice(), ComparisonOp::Eq, 1.0);
        for row in &self.rows {
            let terms: Vec<_> = vars
                .iter()
                .zip(row)
                .filter(|(_, &coef)| coef != 0.0)
                .map(|(&v, &coef)| (v, coef))
                .collect();
            problem.add_constraint(terms.as_slice(), ComparisonOp::Le, self.tol);
            problem.add_constraint(terms.as_slice(), ComparisonOp::Ge, -self.tol);
        }
        let outcome = problem
            .solve()
            .map_err(|_| Error::InfeasibleInvariantProgram {
                slow: vec![],
                tol: self.tol,
            })?;
        // No limits are configured, so LP solves always finish.
        let solution = outcome
            .into_solution()
            .map_err(|_| Error::InfeasibleInvariantProgram {
                slow: vec![],
                tol: self.tol,
            })?;
        Ok(vars.iter().map(|&v| solution.var_value(v)).collect())
    }

    fn measure_from_weights(&self, weights: &[f64]) -> AtomicMeasure {
        let atoms: Vec<(Vec<f64>, f64)> = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > LP_WEIGHT_FLOOR)
            .map(|(c, &w)| (self.centers[c].clone(), w))
            .collect();
        AtomicMeasure::from_unnormalized(atoms).expect("LP weights sum to 1")
    }
}

/// The computable stand-in for the invariant-measure set at one slow point.
#[derive(Debug, Clone)]
pub struct InvariantMeasureSet {
    pub slow_point: Vec<f64>,
    pub representation: InvariantRepresentation,
    /// One feasible member.
    pub feasible: AtomicMeasure,
    /// Approximate extreme points.
    pub extreme_points: Vec<AtomicMeasure>,
}

/// Knobs of [`invariant_measures_lp`].
#[derive(Debug, Clone, Copy)]
pub struct LpOptions {
    pub tol: f64,
    /// Random position functionals (directions and distance centers) used as
    /// extra extreme-point objectives.
    pub random_objectives: usize,
    /// Structured distance-sweep objectives per dimension.
    pub sweep_objectives: usize,
    pub seed: u64,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            tol: LP_RESIDUAL_TOL,
            random_objectives: 8,
            sweep_objectives: 8,
            seed: 0x7753_41a1,
        }
    }
}

/// Feasible weights over the grid whose stationarity residual vanishes, up
/// to `tol`, for every member of the test family.
///
/// Extreme points come from optimizing linear objectives over the feasible
/// polytope. Every objective is a position functional evaluated at the cell
/// centers (signed coordinate moments, squared distances to sweep centers,
/// random directions and random distance centers): their optima localize
/// mass near the invariant structure. Objectives indexed by raw cell
/// identity rather than position would instead surface the relaxation's
/// smeared interior vertices.
pub fn invariant_measures_lp(
    inst: &ProblemInstance,
    slow: &[f64],
    grid: &FastGrid,
    family: &TestFunctionFamily,
    options: LpOptions,
) -> Result<InvariantMeasureSet> {
    let polytope = build_polytope(inst, slow, grid, family, options.tol)?;
    let n = polytope.centers.len();
    let dim = inst.fast_dim;

    let infeasible_at = |_: Error| Error::InfeasibleInvariantProgram {
        slow: slow.to_vec(),
        tol: options.tol,
    };
    let feasible_weights = polytope
        .solve(&vec![0.0; n], OptimizationDirection::Minimize)
        .map_err(infeasible_at)?;
    let feasible = polytope.measure_from_weights(&feasible_weights);

    // Extreme points are realized by minimizing squared distance to probe
    // centers. Signed functionals (plain coordinate moments) are not used
    // here: the family only pins drift-weighted moments, so their optima can
    // sit at spread-out vertices with the right moment cancellations.
    let mut objectives: Vec<Vec<f64>> = Vec::new();
    let distance_to = |q: &[f64]| -> Vec<f64> {
        polytope
            .centers
            .iter()
            .map(|c| c.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect()
    };
    for axis in 0..dim {
        let (lo, hi) = grid.bounds[axis];
        for k in 0..options.sweep_objectives {
            let mut q = vec![0.0; dim];
            q[axis] = lo + (hi - lo) * (k as f64 + 0.5) / options.sweep_objectives as f64;
            objectives.push(distance_to(&q));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for _ in 0..options.random_objectives {
        let q: Vec<f64> = grid
            .bounds
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..hi))
            .collect();
        objectives.push(distance_to(&q));
    }

    let mut extreme_points = Vec::with_capacity(objectives.len());
    for objective in &objectives {
        let w = polytope
            .solve(objective, OptimizationDirection::Minimize)
            .map_err(infeasible_at)?;
        extreme_points.push(polytope.measure_from_weights(&w));
    }

    Ok(InvariantMeasureSet {
        slow_point: slow.to_vec(),
        representation: InvariantRepresentation::GridPolytope(polytope),
        feasible,
        extreme_points,
    })
}

/// Exact 1-D representation: Diracs at the roots of the averaged fast field.
pub fn invariant_measures_exact_1d(
    inst: &ProblemInstance,
    slow: &[f64],
    interval: (f64, f64),
    resolution: usize,
) -> Result<InvariantMeasureSet> {
    let roots = equilibria_1d(inst, slow, interval, resolution)?;
    if roots.is_empty() {
        return Err(Error::InfeasibleInvariantProgram {
            slow: slow.to_vec(),
            tol: 0.0,
        });
    }
    let extreme_points: Vec<AtomicMeasure> = roots
        .iter()
        .map(|&r| AtomicMeasure::dirac(vec![r]))
        .collect();
    Ok(InvariantMeasureSet {
        slow_point: slow.to_vec(),
        representation: InvariantRepresentation::ExactRoots(roots),
        feasible: extreme_points[0].clone(),
        extreme_points,
    })
}

fn build_polytope(
    inst: &ProblemInstance,
    slow: &[f64],
    grid: &FastGrid,
    family: &TestFunctionFamily,
    tol: f64,
) -> Result<GridPolytope> {
    // Only cells on the cutoff-flat interior enter the program. Inside the
    // transition strip the cutoff gradient dwarfs the monomial gradients, and
    // after row normalization a sliver of mass there could cancel any
    // interior residual, voiding the constraints.
    let centers: Vec<Vec<f64>> = grid
        .centers()
        .into_iter()
        .filter(|c| family.flat_at(c))
        .collect();
    let mut rows = Vec::new();
    // One residual row per test function: the kernel-averaged pairing of the
    // function gradient with the fast drift, evaluated at cell centers.
    let mut averaged_rows: Vec<Vec<f64>> = vec![Vec::with_capacity(centers.len()); family.len()];
    for center in &centers {
        let matrix = crate::markov::kernel_at(&inst.kernel, center, slow)?;
        let law = crate::markov::stationary_distribution(&matrix)?;
        let drifts: Vec<Vec<f64>> = (0..inst.kernel.n_states())
            .map(|z| inst.fast_drift(center, slow, z))
            .collect();
        let mut mean_drift = vec![0.0; inst.fast_dim];
        for (z, drift) in drifts.iter().enumerate() {
            crate::linalg::axpy(&mut mean_drift, law.prob(z), drift);
        }
        for (f, row) in averaged_rows.iter_mut().enumerate() {
            let grad = family.gradient(f, center);
            row.push(crate::linalg::dot(&grad, &mean_drift));
        }
    }
    for row in averaged_rows {
        let scale = row.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if scale < 1e-14 {
            // Degenerate row (e.g. the constant monomial): no constraint.
            continue;
        }
        rows.push(row.into_iter().map(|v| v / scale).collect());
    }
    Ok(GridPolytope {
        grid: grid.clone(),
        centers,
        rows,
        tol,
    })
}

/// Absolute stationarity residual of an atom measure at a slow point:
/// `max_f | sum_atoms w <grad f, averaged drift> |`.
pub fn ech_residual(
    inst: &ProblemInstance,
    slow: &[f64],
    eta: &AtomicMeasure,
    family: &TestFunctionFamily,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let mut sums = vec![0.0; family.len()];
    for (point, weight) in eta.iter() {
        let matrix = crate::markov::kernel_at(&inst.kernel, point, slow)?;
        let law = crate::markov::stationary_distribution(&matrix)?;
        let mut mean_drift = vec![0.0; inst.fast_dim];
        for z in 0..inst.kernel.n_states() {
            crate::linalg::axpy(&mut mean_drift, law.prob(z), &inst.fast_drift(point, slow, z));
        }
        for (f, sum) in sums.iter_mut().enumerate() {
            *sum += weight * crate::linalg::dot(&family.gradient(f, point), &mean_drift);
        }
    }
    for s in sums {
        worst = worst.max(s.abs());
    }
    Ok(worst)
}

/// The set-valued slow drift over an invariant-measure set.
#[derive(Debug, Clone)]
pub enum DriftRange {
    /// One-dimensional slow space: a closed interval.
    Interval(f64, f64),
    /// Higher dimensions: extreme drift vectors from random objectives.
    Vertices(Vec<Vec<f64>>),
}

/// Extremize the averaged slow drift over the invariant-measure set.
pub fn h_range(
    inst: &ProblemInstance,
    slow: &[f64],
    jset: &InvariantMeasureSet,
) -> Result<DriftRange> {
    match &jset.representation {
        InvariantRepresentation::ExactRoots(roots) => {
            let values: Result<Vec<Vec<f64>>> = roots
                .iter()
                .map(|&r| averaged_slow_drift_at(inst, &[r], slow))
                .collect();
            let values = values?;
            if inst.slow_dim == 1 {
                let lo = values.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
                let hi = values.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
                Ok(DriftRange::Interval(lo, hi))
            } else {
                Ok(DriftRange::Vertices(values))
            }
        }
        InvariantRepresentation::GridPolytope(polytope) => {
            // Per-cell averaged slow drift is the LP objective.
            let drift_cols: Result<Vec<Vec<f64>>> = polytope
                .centers
                .iter()
                .map(|c| averaged_slow_drift_at(inst, c, slow))
                .collect();
            let drift_cols = drift_cols?;
            let infeasible_at = |_: Error| Error::InfeasibleInvariantProgram {
                slow: slow.to_vec(),
                tol: polytope.tol,
            };
            if inst.slow_dim == 1 {
                let objective: Vec<f64> = drift_cols.iter().map(|v| v[0]).collect();
                let value = |weights: &[f64]| -> f64 {
                    weights
                        .iter()
                        .zip(&objective)
                        .map(|(w, g)| w * g)
                        .sum::<f64>()
                };
                let lo_w = polytope
                    .solve(&objective, OptimizationDirection::Minimize)
                    .map_err(infeasible_at)?;
                let hi_w = polytope
                    .solve(&objective, OptimizationDirection::Maximize)
                    .map_err(infeasible_at)?;
                Ok(DriftRange::Interval(value(&lo_w), value(&hi_w)))
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(0x44ab_02ff);
                let mut vertices = Vec::new();
                for _ in 0..(4 * inst.slow_dim) {
                    let dir: Vec<f64> = (0..inst.slow_dim)
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect();
                    let objective: Vec<f64> = drift_cols
                        .iter()
                        .map(|v| crate::linalg::dot(v, &dir))
                        .collect();
                    let w = polytope
                        .solve(&objective, OptimizationDirection::Minimize)
                        .map_err(infeasible_at)?;
                    let mut vertex = vec![0.0; inst.slow_dim];
                    for (c, &wc) in w.iter().enumerate() {
                        crate::linalg::axpy(&mut vertex, wc, &drift_cols[c]);
                    }
                    vertices.push(vertex);
                }
                Ok(DriftRange::Vertices(vertices))
            }
        }
    }
}

/// Uniform 1-D grid over the slow box.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SlowGrid {
    pub lo: f64,
    pub hi: f64,
    pub n_cells: usize,
}

impl SlowGrid {
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n_cells as f64
    }

    pub fn center(&self, cell: usize) -> f64 {
        self.lo + (cell as f64 + 0.5) * self.width()
    }

    /// Containing cell, clamped into range.
    pub fn cell_of(&self, y: f64) -> usize {
        let raw = ((y - self.lo) / self.width()).floor();
        (raw.max(0.0) as usize).min(self.n_cells - 1)
    }

    fn contains(&self, y: f64) -> bool {
        y >= self.lo && y <= self.hi
    }
}

/// Discretized differential inclusion on the slow axis.
#[derive(Debug, Clone)]
pub struct InclusionModel {
    pub grid: SlowGrid,
    /// Per-cell drift interval.
    pub drift: Vec<(f64, f64)>,
    /// Chain slack in slow units.
    pub eps: f64,
    /// Minimal hop duration.
    pub t_min: f64,
    /// Hop digraph: `edges[c]` lists cells reachable within `eps` by some
    /// selection over duration `t_min`.
    pub edges: Vec<Vec<usize>>,
}

/// Knobs of [`build_inclusion_model`].
#[derive(Debug, Clone, Copy)]
pub struct InclusionParams {
    pub slow_cells: usize,
    pub fast_cell_width: f64,
    pub lp_tol: f64,
    pub eps_cells: usize,
    pub t_min: f64,
    pub hop_substeps: usize,
}

impl Default for InclusionParams {
    fn default() -> Self {
        Self {
            slow_cells: SLOW_GRID_CELLS,
            fast_cell_width: CELL_WIDTH,
            lp_tol: LP_RESIDUAL_TOL,
            eps_cells: EPS_CELLS,
            t_min: T_MIN,
            hop_substeps: HOP_SUBSTEPS,
        }
    }
}

/// Build the per-cell drift intervals and the hop digraph.
///
/// Hops integrate Euler steps whose velocity is a fixed selection rule (low
/// endpoint, midpoint, high endpoint) applied to the interval of the cell
/// currently occupied; positions clamp to the slow box.
pub fn build_inclusion_model(
    inst: &ProblemInstance,
    family: &TestFunctionFamily,
    params: InclusionParams,
) -> Result<InclusionModel> {
    if inst.slow_dim != 1 {
        return Err(Error::Unsupported(
            "inclusion models need a one-dimensional slow space",
        ));
    }
    let (lo, hi) = inst.slow_box[0];
    let grid = SlowGrid {
        lo,
        hi,
        n_cells: params.slow_cells,
    };
    let fast_grid = FastGrid::covering(&inst.fast_box, params.fast_cell_width);
    let lp = LpOptions {
        tol: params.lp_tol,
        random_objectives: 0,
        sweep_objectives: 0,
        ..LpOptions::default()
    };
    let mut drift = Vec::with_capacity(grid.n_cells);
    for cell in 0..grid.n_cells {
        let y = [grid.center(cell)];
        let jset = invariant_measures_lp(inst, &y, &fast_grid, family, lp)?;
        match h_range(inst, &y, &jset)? {
            DriftRange::Interval(a, b) => drift.push((a, b)),
            DriftRange::Vertices(_) => unreachable!("slow_dim == 1"),
        }
    }

    let eps = params.eps_cells as f64 * grid.width();
    let dt = params.t_min / params.hop_substeps as f64;
    let half = 0.5 * grid.width();
    let mut edges: Vec<Vec<usize>> = vec![Vec::new(); grid.n_cells];
    for (cell, cell_edges) in edges.iter_mut().enumerate() {
        let mut reach = Vec::new();
        // Chains tolerate a slack of eps at both hop endpoints, so starts
        // range over the eps-neighborhood of the cell, not just its width.
        let c = grid.center(cell);
        for start in [c - eps, c - half, c, c + half, c + eps] {
            for selection in 0..3 {
                let mut y = start;
                for _ in 0..params.hop_substeps {
                    let (dlo, dhi) = drift[grid.cell_of(y)];
                    let v = match selection {
                        0 => dlo,
                        1 => 0.5 * (dlo + dhi),
                        _ => dhi,
                    };
                    y = (y + dt * v).clamp(grid.lo, grid.hi);
                }
                reach.push(y);
            }
        }
        let slack = eps + 1e-12;
        for target in 0..grid.n_cells {
            let center = grid.center(target);
            if reach.iter().any(|&y| (y - center).abs() <= slack) {
                cell_edges.push(target);
            }
        }
    }
    Ok(InclusionModel {
        grid,
        drift,
        eps,
        t_min: params.t_min,
        edges,
    })
}

/// Chain-recurrent cells of an inclusion model, split into chain classes.
#[derive(Debug, Clone)]
pub struct ChainClasses {
    /// Each class is a sorted list of grid cells.
    pub classes: Vec<Vec<usize>>,
    /// Class id per cell, if any.
    pub cell_class: Vec<Option<usize>>,
}

impl ChainClasses {
    /// True when `y` lies within one grid cell of some class cell.
    pub fn near(&self, grid: &SlowGrid, y: f64) -> bool {
        if !grid.contains(y) {
            return false;
        }
        let cell = grid.cell_of(y);
        let lo = cell.saturating_sub(1);
        let hi = (cell + 1).min(grid.n_cells - 1);
        (lo..=hi).any(|c| self.cell_class[c].is_some())
    }
}

/// Cells lying on digraph cycles, grouped by strongly connected component.
///
/// A singleton component counts only when it carries a self-edge; such
/// components are rest points at the grid resolution.
pub fn chain_recurrent_set(model: &InclusionModel) -> ChainClasses {
    let comps = strongly_connected_components(&model.edges);
    let mut classes: Vec<Vec<usize>> = comps
        .into_iter()
        .filter(|comp| {
            comp.len() > 1 || model.edges[comp[0]].contains(&comp[0])
        })
        .collect();
    classes.sort_by_key(|c| c[0]);
    let mut cell_class = vec![None; model.grid.n_cells];
    for (id, class) in classes.iter().enumerate() {
        for &cell in class {
            cell_class[cell] = Some(id);
        }
    }
    ChainClasses {
        classes,
        cell_class,
    }
}

/// Verdict of the tail-containment check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ContainmentReport {
    pub contained: bool,
    /// Fraction of tail samples within one grid cell of a chain class.
    pub fraction: f64,
    pub offending_mass: f64,
    pub tail_samples: usize,
    /// The check is a finite-run shadow of limit-point containment.
    pub note: &'static str,
}

/// Fraction of the record's tail lying within one grid cell of some chain
/// class; contained iff it reaches [`CONTAINMENT_FRACTION`].
pub fn check_limit_points(
    record: &TrajectoryRecord,
    classes: &ChainClasses,
    model: &InclusionModel,
    tail_fraction: f64,
) -> Result<ContainmentReport> {
    if record.slow_dim() != 1 {
        return Err(Error::Unsupported(
            "containment checks need a one-dimensional slow space",
        ));
    }
    let tail = ((record.len() as f64 * tail_fraction).ceil() as usize).min(record.len());
    if tail < TAIL_MIN_SAMPLES {
        return Err(Error::InsufficientTail {
            have: tail,
            need: TAIL_MIN_SAMPLES,
        });
    }
    let start = record.len() - tail;
    let near = (start..record.len())
        .filter(|&j| classes.near(&model.grid, record.slow_at(j)[0]))
        .count();
    let fraction = near as f64 / tail as f64;
    Ok(ContainmentReport {
        contained: fraction >= CONTAINMENT_FRACTION,
        fraction,
        offending_mass: 1.0 - fraction,
        tail_samples: tail,
        note: "finite-run tail approximation of limit-point containment",
    })
}

/// One probe of the upper-semicontinuity shadow.
#[derive(Debug, Clone)]
pub struct UscSample {
    pub slow_point: Vec<f64>,
    /// Residual of the member at its own slow point.
    pub residual_at_own: f64,
    /// Residual of the same member against the limit slow point.
    pub residual_at_limit: f64,
    pub member: AtomicMeasure,
}

#[derive(Debug, Clone)]
pub struct UscReport {
    pub samples: Vec<UscSample>,
    pub limit_point: Vec<f64>,
    /// True when every residual at the limit meets its scheduled tolerance.
    pub pass: bool,
}

/// For each slow point of a sequence, realize one invariant member and
/// measure its residual against the limit point: the numerical shadow of
/// graph closedness of the invariant-measure map.
pub fn usc_probe(
    inst: &ProblemInstance,
    slow_seq: &[Vec<f64>],
    limit_point: &[f64],
    grid: &FastGrid,
    family: &TestFunctionFamily,
    lp_tol: f64,
    tol_schedule: &[f64],
) -> Result<UscReport> {
    assert_eq!(slow_seq.len(), tol_schedule.len(), "one tolerance per point");
    let lp = LpOptions {
        tol: lp_tol,
        random_objectives: 0,
        sweep_objectives: 0,
        ..LpOptions::default()
    };
    let mut samples = Vec::with_capacity(slow_seq.len());
    let mut pass = true;
    for (slow, &tol) in slow_seq.iter().zip(tol_schedule) {
        let jset = invariant_measures_lp(inst, slow, grid, family, lp)?;
        let member = jset.feasible.clone();
        let residual_at_own = ech_residual(inst, slow, &member, family)?;
        let residual_at_limit = ech_residual(inst, limit_point, &member, family)?;
        pass &= residual_at_limit <= tol;
        samples.push(UscSample {
            slow_point: slow.clone(),
            residual_at_own,
            residual_at_limit,
            member,
        });
    }
    Ok(UscReport {
        samples,
        limit_point: limit_point.to_vec(),
        pass,
    })
}

/// CSV rows `cell_center,h_min,h_max,class_id` (empty id for transient cells).
pub fn write_inclusion_csv<W: Write>(
    model: &InclusionModel,
    classes: &ChainClasses,
    mut w: W,
) -> Result<()> {
    writeln!(w, "cell_center,h_min,h_max,class_id")?;
    for cell in 0..model.grid.n_cells {
        let (lo, hi) = model.drift[cell];
        match classes.cell_class[cell] {
            Some(id) => writeln!(w, "{},{lo},{hi},{id}", model.grid.center(cell))?,
            None => writeln!(w, "{},{lo},{hi},", model.grid.center(cell))?,
        }
    }
    Ok(())
}
