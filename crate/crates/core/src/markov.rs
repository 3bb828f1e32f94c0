//! Parametrized transition kernels on a finite noise alphabet.
//!
//! The noise chain `Z(n)` moves by a row-stochastic kernel whose rows depend
//! on the current pair of iterates. This module evaluates those rows, samples
//! transitions by inverse CDF, checks irreducibility, and computes the frozen
//! chain's stationary law by a direct linear solve.

use std::sync::Arc;

use crate::defaults::{ROW_NEG_TOL, ROW_SUM_TOL, STATIONARY_RESIDUAL_TOL};
use crate::error::{Error, Result};
use crate::linalg;

/// Row evaluator: `(fast, slow, state) -> probability row over the alphabet`.
pub type KernelFn = Arc<dyn Fn(&[f64], &[f64], usize) -> Vec<f64> + Send + Sync>;

/// A transition kernel on a finite state set, parametrized by the iterates.
///
/// Evaluators must be pure and callable from several threads at once; random
/// draws are always passed in from outside.
#[derive(Clone)]
pub struct NoiseKernel {
    n_states: usize,
    row_fn: KernelFn,
}

impl std::fmt::Debug for NoiseKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NoiseKernel")
            .field("n_states", &self.n_states)
            .finish_non_exhaustive()
    }
}

impl NoiseKernel {
    pub fn new(n_states: usize, row_fn: KernelFn) -> Self {
        assert!(n_states >= 1, "kernel needs at least one state");
        Self { n_states, row_fn }
    }

    /// Kernel that ignores the iterates entirely.
    pub fn constant(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "square row set");
        Self::new(
            n,
            Arc::new(move |_x: &[f64], _y: &[f64], z: usize| rows[z].clone()),
        )
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Validated probability row `p_{x,y}(.|state)`.
    pub fn row(&self, fast: &[f64], slow: &[f64], state: usize) -> Result<Vec<f64>> {
        assert!(state < self.n_states, "state index in range");
        let row = (self.row_fn)(fast, slow, state);
        validate_row(&row, state, self.n_states)?;
        Ok(row)
    }
}

fn validate_row(row: &[f64], state: usize, n_states: usize) -> Result<()> {
    let sum: f64 = row.iter().sum();
    let min = row.iter().copied().fold(f64::INFINITY, f64::min);
    if row.len() != n_states || !sum.is_finite() || (sum - 1.0).abs() > ROW_SUM_TOL || min < -ROW_NEG_TOL
    {
        return Err(Error::MalformedKernelRow { state, sum, min });
    }
    Ok(())
}

/// A concrete row-stochastic matrix: the kernel frozen at one `(fast, slow)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (z, row) in rows.iter().enumerate() {
            validate_row(row, z, n)?;
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn row(&self, z: usize) -> &[f64] {
        &self.data[z * self.n..(z + 1) * self.n]
    }

    pub fn entry(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.n + to]
    }
}

/// Stationary distribution of a frozen kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryLaw {
    pi: Vec<f64>,
}

impl StationaryLaw {
    pub fn probabilities(&self) -> &[f64] {
        &self.pi
    }

    pub fn prob(&self, z: usize) -> f64 {
        self.pi[z]
    }

    /// `max_z |(pi P)(z) - pi(z)|`
    pub fn residual(&self, p: &TransitionMatrix) -> f64 {
        let n = p.n_states();
        (0..n)
            .map(|to| {
                let lhs: f64 = (0..n).map(|from| self.pi[from] * p.entry(from, to)).sum();
                (lhs - self.pi[to]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Evaluate the kernel at one parameter point, returning the full matrix.
pub fn kernel_at(kernel: &NoiseKernel, fast: &[f64], slow: &[f64]) -> Result<TransitionMatrix> {
    if !linalg::all_finite(fast) {
        return Err(Error::NonFiniteInput { what: "fast point" });
    }
    if !linalg::all_finite(slow) {
        return Err(Error::NonFiniteInput { what: "slow point" });
    }
    let rows: Result<Vec<Vec<f64>>> = (0..kernel.n_states())
        .map(|z| kernel.row(fast, slow, z))
        .collect();
    TransitionMatrix::from_rows(rows?)
}

/// Unique stationary law of an irreducible matrix, by direct solve of
/// `(P^T - I) pi = 0` with one row replaced by the normalization.
pub fn stationary_distribution(p: &TransitionMatrix) -> Result<StationaryLaw> {
    check_irreducible_detailed(p)?;
    let n = p.n_states();
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for row in 0..n {
        for col in 0..n {
            // (P^T - I)[row][col] = P[col][row] - delta
            a[row * n + col] = p.entry(col, row) - if row == col { 1.0 } else { 0.0 };
        }
    }
    for col in 0..n {
        a[(n - 1) * n + col] = 1.0;
    }
    b[n - 1] = 1.0;
    let mut pi = linalg::solve_dense(n, a, b)?;
    // The direct solve can leave O(eps) negatives; clamp and renormalize.
    for w in pi.iter_mut() {
        if *w < 0.0 {
            if *w < -1e-12 {
                return Err(Error::SingularMatrix { pivot: n });
            }
            *w = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    for w in pi.iter_mut() {
        *w /= total;
    }
    let law = StationaryLaw { pi };
    debug_assert!(law.residual(p) <= STATIONARY_RESIDUAL_TOL);
    Ok(law)
}

/// Inverse-CDF transition from `state` using the uniform draw `u` in `[0,1)`.
pub fn sample_next(
    kernel: &NoiseKernel,
    fast: &[f64],
    slow: &[f64],
    state: usize,
    u: f64,
) -> Result<usize> {
    debug_assert!((0.0..1.0).contains(&u), "uniform draw in [0,1)");
    let row = kernel.row(fast, slow, state)?;
    Ok(inverse_cdf(&row, u))
}

pub(crate) fn inverse_cdf(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (z, w) in row.iter().enumerate() {
        acc += w;
        if u < acc {
            return z;
        }
    }
    row.len() - 1
}

/// True iff the digraph of strictly positive entries is strongly connected.
pub fn check_irreducible(p: &TransitionMatrix) -> bool {
    check_irreducible_detailed(p).is_ok()
}

fn check_irreducible_detailed(p: &TransitionMatrix) -> Result<()> {
    let n = p.n_states();
    let forward = reachable(n, |from, to| p.entry(from, to) > 0.0);
    let backward = reachable(n, |from, to| p.entry(to, from) > 0.0);
    if forward.iter().all(|&r| r) && backward.iter().all(|&r| r) {
        return Ok(());
    }
    Err(Error::ReducibleKernel {
        unreachable: (0..n).filter(|&z| !forward[z]).collect(),
        dead: (0..n).filter(|&z| !backward[z]).collect(),
    })
}

fn reachable(n: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for (w, visited) in seen.iter_mut().enumerate() {
            if !*visited && edge(v, w) {
                *visited = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// Finite-difference estimate of the Lipschitz modulus of `point -> f(point)`
/// over random points of a box, measured in sup norm of the output.
///
/// The kernel map is assumed Lipschitz but its modulus is never declared, so
/// scenarios estimate it numerically and tests probe against the estimate.
pub fn estimate_lipschitz<F>(
    f: F,
    lo: &[f64],
    hi: &[f64],
    samples: usize,
    delta: f64,
    rng: &mut impl rand::Rng,
) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let dim = lo.len();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let point: Vec<f64> = (0..dim)
            .map(|i| rng.random_range(lo[i]..hi[i]))
            .collect();
        let base = f(&point);
        for axis in 0..dim {
            let mut moved = point.clone();
            moved[axis] += delta;
            let shifted = f(&moved);
            let diff = base
                .iter()
                .zip(&shifted)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(diff / delta);
        }
    }
    worst
}
