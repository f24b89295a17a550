//! Simulation and closed-form analysis of amplitude-amplified quantum
//! transforms for the local period problem.
//!
//! The hidden set is `A = {s + rP : 0 <= r < M}` inside `N = 2^n` labels,
//! optionally XORed with a Bernoulli error stream. Three algorithms are
//! compared: Grover followed by a QFT (Amplified-QFT), a single phase-flip
//! followed by a QFT, and the two-register hidden-subgroup circuit (QHS).

pub mod analytic;
pub mod error;
pub mod montecarlo;
pub mod numerics;
pub mod oracle;
pub mod recovery;
pub mod simulator;

pub use error::{Error, Result};
