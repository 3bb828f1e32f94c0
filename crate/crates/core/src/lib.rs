//! A numerical laboratory for two-time-scale stochastic approximation with
//! controlled Markov noise.
//!
//! The crate simulates coupled fast/slow iterates driven by a finite noise
//! chain whose transition kernel depends on the current iterates, then
//! verifies at desk scale the structure their limits are expected to carry:
//!
//! * the fast iterates shadow the kernel-averaged fast ODE with the slow
//!   iterate frozen ([`timescale`]);
//! * windowed occupation measures on the slow clock approach invariant
//!   distributions of that ODE and disintegrate as the kernel's stationary
//!   law ([`occupation`]);
//! * the slow iterates track a differential inclusion whose right-hand side
//!   collects averaged slow drifts over all invariant measures, and their
//!   tails land in chain-recurrent sets of that inclusion ([`invariants`]).
//!
//! Scenarios with closed-form answers live in [`fields`]; every analysis is
//! deterministic given an instance, a schedule, a seed, and a step count.

pub mod defaults;
pub mod engine;
pub mod error;
pub mod fields;
pub mod invariants;
pub mod linalg;
pub mod markov;
pub mod measure;
pub mod occupation;
pub mod record;
pub mod schedule;
mod scc;
pub mod timescale;

pub use error::{Error, Result};
