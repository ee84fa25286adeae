//! Shared fixtures for the benchmarks.

use kclg_core::{Engine, ModelParams};
use num_rational::Ratio;

/// `m = 2`, `ρ = 2/3`, `b = 1`, `γ = 1` on a ring of `factor · n` sites.
pub fn params(n: u32, factor: usize) -> ModelParams {
    ModelParams::new(2, Ratio::new(2, 3), 1.0, 1.0, n, factor * n as usize).expect("valid fixture")
}

pub fn engine(n: u32, factor: usize, seed: u64) -> Engine {
    Engine::from_equilibrium(&params(n, factor), seed, 0).expect("valid fixture")
}
