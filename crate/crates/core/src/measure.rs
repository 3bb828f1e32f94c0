//! Finite weighted-atom measures on the fast space.
//!
//! Every measure this crate integrates against — occupation windows, LP
//! members, scenario oracles — is a finite list of weighted atoms. There are
//! no density objects anywhere.

use crate::defaults::WEIGHT_SUM_TOL;
use crate::error::{Error, Result};

/// A probability measure given by finitely many weighted points of `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl AtomicMeasure {
    /// Build from `(point, weight)` pairs. Weights must be nonnegative and
    /// sum to 1 within [`WEIGHT_SUM_TOL`].
    pub fn new(atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let sum: f64 = atoms.iter().map(|(_, w)| *w).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::UnnormalizedWeights {
                sum,
                tol: WEIGHT_SUM_TOL,
            });
        }
        if atoms.iter().any(|(_, w)| *w < 0.0 || !w.is_finite()) {
            return Err(Error::NonFiniteInput {
                what: "atom weight",
            });
        }
        let (points, weights) = atoms.into_iter().unzip();
        Ok(Self { points, weights })
    }

    /// Rescale arbitrary nonnegative weights to total mass 1.
    pub fn from_unnormalized(atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let sum: f64 = atoms.iter().map(|(_, w)| *w).sum();
        if sum.is_nan() || sum <= 0.0 || !sum.is_finite() {
            return Err(Error::UnnormalizedWeights {
                sum,
                tol: WEIGHT_SUM_TOL,
            });
        }
        Self::new(
            atoms
                .into_iter()
                .map(|(p, w)| (p, w / sum))
                .collect::<Vec<_>>(),
        )
    }

    pub fn dirac(point: Vec<f64>) -> Self {
        Self {
            points: vec![point],
            weights: vec![1.0],
        }
    }

    /// Convex mixture `alpha * self + (1 - alpha) * other`.
    pub fn mix(&self, alpha: f64, other: &Self) -> Self {
        assert!((0.0..=1.0).contains(&alpha), "mixture weight in [0,1]");
        let mut points = self.points.clone();
        let mut weights: Vec<f64> = self.weights.iter().map(|w| alpha * w).collect();
        points.extend(other.points.iter().cloned());
        weights.extend(other.weights.iter().map(|w| (1.0 - alpha) * w));
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points
            .iter()
            .map(|p| p.as_slice())
            .zip(self.weights.iter().copied())
    }

    /// Barycenter of the atoms.
    pub fn mean(&self) -> Vec<f64> {
        let dim = self.points.first().map_or(0, |p| p.len());
        let mut out = vec![0.0; dim];
        for (p, w) in self.iter() {
            for (o, c) in out.iter_mut().zip(p) {
                *o += w * c;
            }
        }
        out
    }

    /// Total weight of atoms within Euclidean `radius` of `center`.
    pub fn mass_within(&self, center: &[f64], radius: f64) -> f64 {
        self.iter()
            .filter(|(p, _)| crate::linalg::dist(p, center) <= radius)
            .map(|(_, w)| w)
            .sum()
    }
}
