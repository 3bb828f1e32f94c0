//! Central tolerances and default knobs.
//!
//! Every threshold used across the crate lives here so that no module carries
//! ad-hoc magic numbers. Tolerances fall into three rough bands: machine
//! precision checks (1e-12 .. 1e-10), discretization-limited checks (grid
//! widths, LP tolerances), and statistical checks whose thresholds come from
//! the sample sizes used by the test suites.

/// Kernel rows must sum to 1 within this.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Row entries may undershoot 0 by at most this before the row is rejected.
pub const ROW_NEG_TOL: f64 = 1e-12;

/// `pi * P = pi` residual bound for the direct stationary solve.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;

/// Weighted-atom measures must be normalized within this.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Root refinement width for 1-D equilibrium bisection.
pub const BISECTION_TOL: f64 = 1e-10;

/// Fast-space cell width used by occupation measures and the grid LP.
pub const CELL_WIDTH: f64 = 0.05;

/// Per-function residual tolerance of the invariant-measure LP, relative to
/// the largest absolute constraint coefficient of that function's row.
///
/// The window is set from both sides. Grid quantization sets the floor: a
/// point mass on a cell boundary leaves an even-moment residual of order
/// `(w/2)^2 / scale`, far below this value on the shipped boxes (narrow
/// custom boxes may need an override). Support localization sets the
/// ceiling: the absolute slack `tol * scale` must stay below the drift
/// magnitude one cell away from an equilibrium, or feasible mass smears.
pub const LP_RESIDUAL_TOL: f64 = 5e-4;

/// Weights below this are dropped when reading a measure out of an LP solution.
pub const LP_WEIGHT_FLOOR: f64 = 1e-12;

/// Number of cells of the slow grid backing an inclusion model.
pub const SLOW_GRID_CELLS: usize = 400;

/// Chain-reachability slack, in units of slow-grid cells.
pub const EPS_CELLS: usize = 2;

/// Minimal hop duration of a chain edge.
pub const T_MIN: f64 = 1.0;

/// Euler substeps per hop when sweeping inclusion trajectories.
pub const HOP_SUBSTEPS: usize = 20;

/// Default analysis window length on either clock.
pub const WINDOW_T: f64 = 5.0;

/// Default exponents of the power-law step schedules.
pub const FAST_EXPONENT: f64 = 0.6;
pub const SLOW_EXPONENT: f64 = 0.9;

/// Default stability budget for `sup_n (|x(n)| + |y(n)|)`.
pub const STABILITY_BUDGET: f64 = 1e3;

/// Runs at or above this many steps are thinned by `THIN_STRIDE`.
pub const THIN_THRESHOLD: usize = 1_000_000;
pub const THIN_STRIDE: usize = 10;

/// Fraction of each box edge given to the smooth cutoff of test functions.
pub const CUTOFF_MARGIN_FRAC: f64 = 0.1;

/// Highest total degree of the monomial test family.
pub const TEST_FAMILY_DEGREE: u32 = 4;

/// Tail fraction inspected by limit-point containment checks.
pub const TAIL_FRACTION: f64 = 0.1;

/// Minimum number of samples a containment tail must hold.
pub const TAIL_MIN_SAMPLES: usize = 1_000;

/// Containment verdict threshold on the tail mass near chain classes.
pub const CONTAINMENT_FRACTION: f64 = 0.95;
