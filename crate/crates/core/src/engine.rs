//! The coupled two-scale iteration.
//!
//! One step updates the fast iterate with step `a(n)`, the slow iterate with
//! step `b(n)`, adds martingale noise to both, and resamples the noise state
//! from the kernel evaluated at the pre-update pair. Stability is monitored
//! against a sup-norm budget, never enforced: a violation aborts the run with
//! a report instead of silently projecting.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::defaults::{THIN_STRIDE, THIN_THRESHOLD};
use crate::error::{Error, Result};
use crate::fields::ProblemInstance;
use crate::linalg;
use crate::markov;
use crate::record::TrajectoryRecord;
use crate::schedule::StepSchedule;

/// Martingale-difference noise attached to both updates.
///
/// The Gaussian model draws state-independent components `sigma * N(0, I)`,
/// so the conditional second moment is exactly `sigma^2 * (d + s)` and the
/// envelope `K * (1 + |x|^2 + |y|^2)` holds with `K = sigma^2 * (d + s)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum NoiseModel {
    None,
    Gaussian { sigma: f64 },
}

impl NoiseModel {
    /// The constant `K` of the conditional second-moment envelope.
    pub fn envelope_constant(&self, fast_dim: usize, slow_dim: usize) -> f64 {
        match self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { sigma } => sigma * sigma * (fast_dim + slow_dim) as f64,
        }
    }
}

/// Draw one noise pair `(M, M')` for the current state.
pub fn generate_martingale_noise(
    model: &NoiseModel,
    fast_dim: usize,
    slow_dim: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    match model {
        NoiseModel::None => (vec![0.0; fast_dim], vec![0.0; slow_dim]),
        NoiseModel::Gaussian { sigma } => {
            let mut draw = |dim: usize| -> Vec<f64> {
                (0..dim)
                    .map(|_| {
                        let g: f64 = StandardNormal.sample(rng);
                        sigma * g
                    })
                    .collect()
            };
            (draw(fast_dim), draw(slow_dim))
        }
    }
}

/// Full iteration state, including the generator.
#[derive(Debug, Clone)]
pub struct SAState {
    pub step_index: usize,
    pub fast: Vec<f64>,
    pub slow: Vec<f64>,
    pub noise_state: usize,
    pub rng: ChaCha8Rng,
}

impl SAState {
    pub fn new(fast: Vec<f64>, slow: Vec<f64>, noise_state: usize, seed: u64) -> Self {
        Self {
            step_index: 0,
            fast,
            slow,
            noise_state,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// Advance one step. Draw order per step is fixed for reproducibility:
/// martingale noise first (when the model has any), then the uniform used to
/// resample the noise state. The kernel is evaluated at the pre-update pair.
pub fn step(
    inst: &ProblemInstance,
    schedule: &StepSchedule,
    mut state: SAState,
    model: &NoiseModel,
) -> Result<SAState> {
    let n = state.step_index;
    let (fast_noise, slow_noise) =
        generate_martingale_noise(model, inst.fast_dim, inst.slow_dim, &mut state.rng);

    let fast_drift = inst.fast_drift(&state.fast, &state.slow, state.noise_state);
    let slow_drift = inst.slow_drift(&state.fast, &state.slow, state.noise_state);
    let a = schedule.fast_step(n);
    let b = schedule.slow_step(n);

    let u: f64 = state.rng.random();
    let next_noise_state =
        markov::sample_next(&inst.kernel, &state.fast, &state.slow, state.noise_state, u)?;

    for i in 0..inst.fast_dim {
        state.fast[i] += a * (fast_drift[i] + fast_noise[i]);
    }
    for i in 0..inst.slow_dim {
        state.slow[i] += b * (slow_drift[i] + slow_noise[i]);
    }
    if !linalg::all_finite(&state.fast) || !linalg::all_finite(&state.slow) {
        return Err(Error::Diverged { step: n + 1 });
    }
    state.noise_state = next_noise_state;
    state.step_index = n + 1;
    Ok(state)
}

/// Storage stride rule: dense below [`THIN_THRESHOLD`] steps, thinned above.
pub fn default_stride(n_steps: usize) -> usize {
    if n_steps >= THIN_THRESHOLD {
        THIN_STRIDE
    } else {
        1
    }
}

/// Run `n_steps` coupled iterates from the instance defaults, recording at
/// `stride` and monitoring `sup_n (|x(n)| + |y(n)|)` against `budget`.
#[allow(clippy::too_many_arguments)]
pub fn run_iterates(
    inst: &Arc<ProblemInstance>,
    schedule: &StepSchedule,
    init_fast: Vec<f64>,
    init_slow: Vec<f64>,
    n_steps: usize,
    seed: u64,
    model: &NoiseModel,
    budget: f64,
) -> Result<TrajectoryRecord> {
    assert!(n_steps >= 1, "need at least one step");
    let stride = default_stride(n_steps);
    let mut state = SAState::new(init_fast, init_slow, 0, seed);
    let samples = n_steps / stride + 1;
    let mut fast = Vec::with_capacity(samples * inst.fast_dim);
    let mut slow = Vec::with_capacity(samples * inst.slow_dim);
    let mut states = Vec::with_capacity(samples);
    let mut sup_norm: f64 = 0.0;

    let record_sample = |s: &SAState, fast: &mut Vec<f64>, slow: &mut Vec<f64>, states: &mut Vec<u32>| {
        fast.extend_from_slice(&s.fast);
        slow.extend_from_slice(&s.slow);
        states.push(s.noise_state as u32);
    };
    record_sample(&state, &mut fast, &mut slow, &mut states);

    for n in 0..n_steps {
        state = step(inst, schedule, state, model)?;
        let size = linalg::norm(&state.fast) + linalg::norm(&state.slow);
        sup_norm = sup_norm.max(size);
        if size > budget {
            return Err(Error::StabilityViolation {
                step: n + 1,
                observed: size,
                budget,
            });
        }
        if (n + 1).is_multiple_of(stride) {
            record_sample(&state, &mut fast, &mut slow, &mut states);
        }
    }

    Ok(TrajectoryRecord {
        instance: Arc::clone(inst),
        schedule: schedule.clone(),
        noise: *model,
        seed,
        stride,
        n_steps,
        fast,
        slow,
        states,
        sup_norm,
    })
}
