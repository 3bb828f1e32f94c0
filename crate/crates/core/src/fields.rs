//! Problem instances and the averaged vector fields driving the limit ODEs.
//!
//! An instance bundles the fast and slow drift evaluators, the noise kernel,
//! and a compact working box. Averaging a drift against the stationary law of
//! the frozen kernel yields the field of the limiting fast ODE; integrating
//! the slow drift against an atom measure yields the slow-scale driver.
//!
//! The canonical scenario library lives here too. Every shipped scenario
//! carries `known_answers` whose values are reproduced in tests from their
//! stated closed-form derivations.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::markov::{self, NoiseKernel};
use crate::measure::AtomicMeasure;

/// Drift evaluator `(fast, slow, state) -> vector`.
pub type DriftFn = Arc<dyn Fn(&[f64], &[f64], usize) -> Vec<f64> + Send + Sync>;

/// A coupled two-scale problem: drifts, kernel, and working box.
#[derive(Clone)]
pub struct ProblemInstance {
    pub fast_dim: usize,
    pub slow_dim: usize,
    pub kernel: NoiseKernel,
    fast_drift: DriftFn,
    slow_drift: DriftFn,
    /// Per-coordinate bounds of the fast working box.
    pub fast_box: Vec<(f64, f64)>,
    /// Per-coordinate bounds of the slow working box.
    pub slow_box: Vec<(f64, f64)>,
}

impl std::fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("fast_dim", &self.fast_dim)
            .field("slow_dim", &self.slow_dim)
            .field("kernel", &self.kernel)
            .field("fast_box", &self.fast_box)
            .field("slow_box", &self.slow_box)
            .finish_non_exhaustive()
    }
}

impl ProblemInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fast_dim: usize,
        slow_dim: usize,
        kernel: NoiseKernel,
        fast_drift: DriftFn,
        slow_drift: DriftFn,
        fast_box: Vec<(f64, f64)>,
        slow_box: Vec<(f64, f64)>,
    ) -> Self {
        assert_eq!(fast_box.len(), fast_dim);
        assert_eq!(slow_box.len(), slow_dim);
        Self {
            fast_dim,
            slow_dim,
            kernel,
            fast_drift,
            slow_drift,
            fast_box,
            slow_box,
        }
    }

    pub fn fast_drift(&self, fast: &[f64], slow: &[f64], state: usize) -> Vec<f64> {
        debug_assert_eq!(fast.len(), self.fast_dim);
        debug_assert_eq!(slow.len(), self.slow_dim);
        (self.fast_drift)(fast, slow, state)
    }

    pub fn slow_drift(&self, fast: &[f64], slow: &[f64], state: usize) -> Vec<f64> {
        (self.slow_drift)(fast, slow, state)
    }

    /// Draw a uniform point of the fast box.
    pub fn sample_fast_box(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.fast_box
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..hi))
            .collect()
    }

    pub fn sample_slow_box(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.slow_box
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..hi))
            .collect()
    }
}

/// Fast drift averaged against the stationary law of the frozen kernel.
pub fn averaged_fast_field(inst: &ProblemInstance, fast: &[f64], slow: &[f64]) -> Result<Vec<f64>> {
    let matrix = markov::kernel_at(&inst.kernel, fast, slow)?;
    let law = markov::stationary_distribution(&matrix)?;
    let mut out = vec![0.0; inst.fast_dim];
    for z in 0..inst.kernel.n_states() {
        let w = law.prob(z);
        if w == 0.0 {
            continue;
        }
        linalg::axpy(&mut out, w, &inst.fast_drift(fast, slow, z));
    }
    Ok(out)
}

/// Slow drift averaged against the kernel's stationary law and then against
/// an atom measure on the fast space.
pub fn averaged_slow_field(
    inst: &ProblemInstance,
    slow: &[f64],
    eta: &AtomicMeasure,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; inst.slow_dim];
    for (point, weight) in eta.iter() {
        let matrix = markov::kernel_at(&inst.kernel, point, slow)?;
        let law = markov::stationary_distribution(&matrix)?;
        for z in 0..inst.kernel.n_states() {
            let w = weight * law.prob(z);
            if w == 0.0 {
                continue;
            }
            linalg::axpy(&mut out, w, &inst.slow_drift(point, slow, z));
        }
    }
    Ok(out)
}

/// Slow drift averaged against the stationary law only, at a single fast point.
pub fn averaged_slow_drift_at(
    inst: &ProblemInstance,
    fast: &[f64],
    slow: &[f64],
) -> Result<Vec<f64>> {
    averaged_slow_field(inst, slow, &AtomicMeasure::dirac(fast.to_vec()))
}

/// Analytically derived answers shipped with a scenario, with derivation notes.
#[derive(Debug, Clone, Default)]
pub struct KnownAnswers {
    /// Joint equilibrium `(fast*, slow*)` of the averaged system, when unique.
    pub equilibrium: Option<(Vec<f64>, Vec<f64>)>,
    /// Roots of the averaged fast field at `slow = 0` (1-D scenarios).
    pub fast_roots_at_zero_slow: Option<Vec<f64>>,
    /// Slow points where the inclusion admits a rest point (1-D slow scale).
    pub slow_rest_points: Vec<f64>,
    /// Radius of the fast limit cycle at the slow equilibrium, if any.
    pub limit_cycle_radius: Option<f64>,
    /// Documented Lipschitz bound of the kernel map in `(fast, slow)`.
    pub kernel_lipschitz: f64,
    /// Derivation notes for every value above.
    pub notes: &'static str,
}

/// A wired problem instance plus defaults and its analytically known answers.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub instance: Arc<ProblemInstance>,
    pub init_fast: Vec<f64>,
    pub init_slow: Vec<f64>,
    pub known: KnownAnswers,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Probability clip keeping shipped kernels uniformly irreducible.
fn clip_prob(p: f64) -> f64 {
    p.clamp(0.05, 0.95)
}

/// Build one of the shipped scenarios: `S1`, `S1b`, `S2`, `S3`.
pub fn make_scenario(name: &str) -> Result<Scenario> {
    let scenario = match name {
        // Linear contraction with a constant two-state kernel. The state
        // enters the fast drift as a 0.5*z shift, z in {0,1}.
        // pi = (2/3, 1/3) so E[z] = 1/3 and the averaged system is
        //   fast' = -(x - y - 1/6),  slow' = -(y - x/2),
        // with fixed point x* = 1/3, y* = 1/6 and lambda(y) = y + 1/6.
        "S1" => Scenario {
            name: "S1",
            instance: Arc::new(ProblemInstance::new(
                1,
                1,
                NoiseKernel::constant(vec![vec![0.9, 0.1], vec![0.2, 0.8]]),
                Arc::new(|x: &[f64], y: &[f64], z: usize| {
                    vec![-(x[0] - y[0] - 0.5 * z as f64)]
                }),
                Arc::new(|x: &[f64], y: &[f64], _z: usize| vec![-(y[0] - 0.5 * x[0])]),
                vec![(-2.5, 2.5)],
                vec![(-1.8, 1.8)],
            )),
            init_fast: vec![0.0],
            init_slow: vec![0.0],
            known: KnownAnswers {
                equilibrium: Some((vec![1.0 / 3.0], vec![1.0 / 6.0])),
                fast_roots_at_zero_slow: Some(vec![1.0 / 6.0]),
                slow_rest_points: vec![1.0 / 6.0],
                limit_cycle_radius: None,
                kernel_lipschitz: 0.0,
                notes: "stationary law of [[0.9,0.1],[0.2,0.8]] is (2/3,1/3); \
                        solving -(x - y - 1/6) = 0 and -(y - x/2) = 0 gives (1/3, 1/6)",
            },
        },
        // Same drifts as S1 but the kernel row of state 0 moves with the slow
        // iterate: p(1|0) = clip(0.1 + 0.8*sigmoid(y)), p(0|1) = 0.5.
        "S1b" => Scenario {
            name: "S1b",
            instance: Arc::new(ProblemInstance::new(
                1,
                1,
                NoiseKernel::new(
                    2,
                    Arc::new(|_x: &[f64], y: &[f64], z: usize| {
                        if z == 0 {
                            let p = clip_prob(0.1 + 0.8 * sigmoid(y[0]));
                            vec![1.0 - p, p]
                        } else {
                            vec![0.5, 0.5]
                        }
                    }),
                ),
                Arc::new(|x: &[f64], y: &[f64], z: usize| {
                    vec![-(x[0] - y[0] - 0.5 * z as f64)]
                }),
                Arc::new(|x: &[f64], y: &[f64], _z: usize| vec![-(y[0] - 0.5 * x[0])]),
                vec![(-2.5, 2.5)],
                vec![(-1.8, 1.8)],
            )),
            init_fast: vec![0.0],
            init_slow: vec![0.0],
            known: KnownAnswers {
                equilibrium: None,
                fast_roots_at_zero_slow: None,
                slow_rest_points: vec![],
                limit_cycle_radius: None,
                kernel_lipschitz: 0.2,
                notes: "d/dy [0.1 + 0.8*sigmoid(y)] = 0.8*sigmoid'(y) <= 0.2; \
                        at y = 0 row 0 is exactly (0.5, 0.5)",
            },
        },
        // Double well: fast' = -(x^3 - x - y) plus a +/-0.05 state shift under
        // a symmetric kernel, so the shift averages out exactly and the
        // averaged fast field keeps the closed-form cubic root structure.
        "S2" => Scenario {
            name: "S2",
            instance: Arc::new(ProblemInstance::new(
                1,
                1,
                NoiseKernel::constant(vec![vec![0.5, 0.5], vec![0.5, 0.5]]),
                Arc::new(|x: &[f64], y: &[f64], z: usize| {
                    let shift = if z == 0 { -0.05 } else { 0.05 };
                    vec![-(x[0] * x[0] * x[0] - x[0] - y[0]) + shift]
                }),
                Arc::new(|x: &[f64], y: &[f64], _z: usize| vec![x[0] - y[0]]),
                vec![(-2.5, 2.5)],
                vec![(-3.0, 3.0)],
            )),
            init_fast: vec![0.9],
            init_slow: vec![0.0],
            known: KnownAnswers {
                equilibrium: None,
                fast_roots_at_zero_slow: Some(vec![-1.0, 0.0, 1.0]),
                // 0 is in H(y) exactly where some root x of x^3 - x = y has
                // x = y, i.e. y^3 = 2y: y in {-sqrt(2), 0, sqrt(2)}.
                slow_rest_points: vec![-std::f64::consts::SQRT_2, 0.0, std::f64::consts::SQRT_2],
                limit_cycle_radius: None,
                kernel_lipschitz: 0.0,
                notes: "roots of x^3 - x at y = 0 are {-1, 0, 1}; the symmetric \
                        kernel averages the +/-0.05 shift to zero",
            },
        },
        // Planar rotation with a radial limit cycle of radius r(y) = 1 + y/2
        // and slow drift 2 - |x|^2; on the cycle the slow field is
        // 2 - r(y)^2, which vanishes at y* = 2(sqrt(2) - 1).
        "S3" => Scenario {
            name: "S3",
            instance: Arc::new(ProblemInstance::new(
                2,
                1,
                NoiseKernel::constant(vec![vec![0.9, 0.1], vec![0.2, 0.8]]),
                Arc::new(|x: &[f64], y: &[f64], _z: usize| {
                    let r = 1.0 + 0.5 * y[0];
                    let gain = r * r - (x[0] * x[0] + x[1] * x[1]);
                    vec![x[1] + gain * x[0], -x[0] + gain * x[1]]
                }),
                Arc::new(|x: &[f64], _y: &[f64], _z: usize| {
                    vec![2.0 - (x[0] * x[0] + x[1] * x[1])]
                }),
                vec![(-3.0, 3.0), (-3.0, 3.0)],
                vec![(-3.0, 3.0)],
            )),
            init_fast: vec![1.0, 0.0],
            init_slow: vec![0.0],
            known: KnownAnswers {
                equilibrium: None,
                fast_roots_at_zero_slow: None,
                slow_rest_points: vec![2.0 * (std::f64::consts::SQRT_2 - 1.0)],
                limit_cycle_radius: Some(std::f64::consts::SQRT_2),
                kernel_lipschitz: 0.0,
                notes: "(1 + y/2)^2 = 2 at y = 2(sqrt(2) - 1) ~= 0.828427; \
                        the cycle radius there is sqrt(2)",
            },
        },
        other => return Err(Error::UnknownScenario(other.to_string())),
    };
    // The asymptotic theory assumes irreducibility at every parameter point;
    // check it once per scenario over a coarse box grid.
    check_irreducibility_on_box(&scenario.instance, 5)?;
    Ok(scenario)
}

pub fn scenario_names() -> [&'static str; 4] {
    ["S1", "S1b", "S2", "S3"]
}

/// Check kernel irreducibility on a uniform grid of box points.
pub fn check_irreducibility_on_box(inst: &ProblemInstance, points_per_dim: usize) -> Result<()> {
    let fast_grid = box_grid(&inst.fast_box, points_per_dim);
    let slow_grid = box_grid(&inst.slow_box, points_per_dim);
    for fast in &fast_grid {
        for slow in &slow_grid {
            let matrix = markov::kernel_at(&inst.kernel, fast, slow)?;
            markov::stationary_distribution(&matrix)?;
        }
    }
    Ok(())
}

fn box_grid(bounds: &[(f64, f64)], points_per_dim: usize) -> Vec<Vec<f64>> {
    let mut grid: Vec<Vec<f64>> = vec![vec![]];
    for &(lo, hi) in bounds {
        let step = (hi - lo) / (points_per_dim.saturating_sub(1).max(1)) as f64;
        let mut next = Vec::with_capacity(grid.len() * points_per_dim);
        for prefix in &grid {
            for i in 0..points_per_dim {
                let mut p = prefix.clone();
                p.push(lo + step * i as f64);
                next.push(p);
            }
        }
        grid = next;
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn averaged_fast_field_s1_closed_form() {
        // E_pi[z] = 1/3, so at the origin the averaged field is 1/6.
        let s1 = make_scenario("S1").unwrap();
        let f = averaged_fast_field(&s1.instance, &[0.0], &[0.0]).unwrap();
        assert!((f[0] - 1.0 / 6.0).abs() < 1e-13, "got {}", f[0]);
    }

    #[test]
    fn state_independent_drift_is_unchanged_by_averaging() {
        let inst = ProblemInstance::new(
            1,
            1,
            NoiseKernel::constant(vec![vec![0.3, 0.7], vec![0.6, 0.4]]),
            Arc::new(|x: &[f64], y: &[f64], _z| vec![x[0] * y[0] + 2.0]),
            Arc::new(|_x: &[f64], _y: &[f64], _z| vec![0.0]),
            vec![(-1.0, 1.0)],
            vec![(-1.0, 1.0)],
        );
        let f = averaged_fast_field(&inst, &[0.5], &[2.0]).unwrap();
        assert!((f[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn single_state_alphabet_is_identity_averaging() {
        let inst = ProblemInstance::new(
            1,
            1,
            NoiseKernel::constant(vec![vec![1.0]]),
            Arc::new(|x: &[f64], _y: &[f64], z| vec![x[0] + z as f64]),
            Arc::new(|_x: &[f64], _y: &[f64], _z| vec![0.0]),
            vec![(-1.0, 1.0)],
            vec![(-1.0, 1.0)],
        );
        let f = averaged_fast_field(&inst, &[0.25], &[0.0]).unwrap();
        assert!((f[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn slow_field_vanishes_at_s1_fixed_point() {
        let s1 = make_scenario("S1").unwrap();
        let eta = AtomicMeasure::dirac(vec![1.0 / 3.0]);
        let g = averaged_slow_field(&s1.instance, &[1.0 / 6.0], &eta).unwrap();
        assert!(g[0].abs() < 1e-14, "got {}", g[0]);
    }

    #[test]
    fn slow_field_single_atom_reduces_to_drift() {
        let s1 = make_scenario("S1").unwrap();
        let eta = AtomicMeasure::dirac(vec![0.8]);
        let g = averaged_slow_field(&s1.instance, &[0.1], &eta).unwrap();
        // slow drift ignores the state, so averaging is transparent.
        assert!((g[0] - (-(0.1 - 0.4))).abs() < 1e-14);
    }

    #[test]
    fn slow_field_on_discretized_circle_vanishes_at_rest_radius() {
        let s3 = make_scenario("S3").unwrap();
        let y_star = 2.0 * (std::f64::consts::SQRT_2 - 1.0);
        let r = 1.0 + 0.5 * y_star;
        let n = 256;
        let atoms: Vec<(Vec<f64>, f64)> = (0..n)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                (vec![r * theta.cos(), r * theta.sin()], 1.0 / n as f64)
            })
            .collect();
        let eta = AtomicMeasure::new(atoms).unwrap();
        let g = averaged_slow_field(&s3.instance, &[y_star], &eta).unwrap();
        assert!(g[0].abs() < 1e-3, "got {}", g[0]);
    }

    #[test]
    fn slow_field_rejects_unnormalized_measure() {
        let err = AtomicMeasure::new(vec![(vec![0.0], 0.9)]).unwrap_err();
        assert!(matches!(err, Error::UnnormalizedWeights { .. }));
    }

    #[test]
    fn unknown_scenario_is_a_usage_error() {
        assert!(matches!(
            make_scenario("S9"),
            Err(Error::UnknownScenario(_))
        ));
    }

    #[test]
    fn scenario_kernels_are_stochastic_across_the_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for name in scenario_names() {
            let sc = make_scenario(name).unwrap();
            for _ in 0..100 {
                let x = sc.instance.sample_fast_box(&mut rng);
                let y = sc.instance.sample_slow_box(&mut rng);
                let m = markov::kernel_at(&sc.instance.kernel, &x, &y).unwrap();
                for z in 0..m.n_states() {
                    let sum: f64 = m.row(z).iter().sum();
                    assert!((sum - 1.0).abs() <= 1e-12, "{name} row {z} sums to {sum}");
                }
            }
        }
    }

    #[test]
    fn stationary_law_is_lipschitz_in_parameters() {
        // Estimate a modulus over the box, then probe fresh points against
        // the estimate with a safety factor.
        for name in scenario_names() {
            let sc = make_scenario(name).unwrap();
            let inst = &sc.instance;
            let dims = inst.fast_dim + inst.slow_dim;
            let lo: Vec<f64> = inst
                .fast_box
                .iter()
                .chain(&inst.slow_box)
                .map(|b| b.0)
                .collect();
            let hi: Vec<f64> = inst
                .fast_box
                .iter()
                .chain(&inst.slow_box)
                .map(|b| b.1)
                .collect();
            let pi_of = |p: &[f64]| {
                let (x, y) = p.split_at(inst.fast_dim);
                let m = markov::kernel_at(&inst.kernel, x, y).unwrap();
                markov::stationary_distribution(&m)
                    .unwrap()
                    .probabilities()
                    .to_vec()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let modulus = markov::estimate_lipschitz(pi_of, &lo, &hi, 60, 1e-6, &mut rng);
            let bound = 2.0 * modulus + 1e-9;
            for _ in 0..40 {
                let p: Vec<f64> = (0..dims)
                    .map(|i| rng.random_range(lo[i]..hi[i]))
                    .collect();
                let base = pi_of(&p);
                for axis in 0..dims {
                    let mut moved = p.clone();
                    moved[axis] += 1e-4;
                    let shifted = pi_of(&moved);
                    let diff = base
                        .iter()
                        .zip(&shifted)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    assert!(
                        diff <= bound * 1e-4,
                        "{name}: pi moved {diff} over 1e-4 (bound slope {bound})"
                    );
                }
            }
        }
    }

    #[test]
    fn s2_averaged_field_has_documented_sign_pattern() {
        // Signs of -(x^3 - x) around the roots -1, 0, 1: stable, unstable,
        // stable.
        let s2 = make_scenario("S2").unwrap();
        let f = |x: f64| averaged_fast_field(&s2.instance, &[x], &[0.0]).unwrap()[0];
        assert!(f(-2.0) > 0.0);
        assert!(f(-0.5) < 0.0);
        assert!(f(0.5) > 0.0);
        assert!(f(2.0) < 0.0);
        // The +/-0.05 shift averages out exactly under the symmetric kernel.
        assert!((f(0.5) - -(0.125 - 0.5)).abs() < 1e-13);
    }

    #[test]
    fn averaged_fast_field_has_bounded_difference_ratio() {
        for name in scenario_names() {
            let sc = make_scenario(name).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(100);
            let mut worst: f64 = 0.0;
            for _ in 0..60 {
                let x = sc.instance.sample_fast_box(&mut rng);
                let y = sc.instance.sample_slow_box(&mut rng);
                let base = averaged_fast_field(&sc.instance, &x, &y).unwrap();
                for axis in 0..sc.instance.fast_dim {
                    let mut moved = x.clone();
                    moved[axis] += 1e-5;
                    let shifted = averaged_fast_field(&sc.instance, &moved, &y).unwrap();
                    let diff = base
                        .iter()
                        .zip(&shifted)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    worst = worst.max(diff / 1e-5);
                }
            }
            // Generous scenario constant: every shipped field is polynomial
            // with coefficients O(1) on a box of radius 3.
            assert!(worst < 60.0, "{name}: difference ratio {worst}");
        }
    }
}
