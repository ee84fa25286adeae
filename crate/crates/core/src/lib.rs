//! Kinetically constrained exclusion process ("porous medium model").
//!
//! Exact verification of the local algebra, event-driven simulation of the
//! accelerated dynamics, allowed-path construction, and Monte Carlo
//! estimators for fluctuation fields and second-order Boltzmann-Gibbs bounds.

pub mod analysis;
pub mod config;
pub mod constraint;
pub mod error;
pub mod kmc;
pub mod local;
pub mod observables;
pub mod path;
pub(crate) mod quad;
pub mod rational;
pub mod rng;
pub mod stats;

pub use config::{BoxSpec, Configuration, ModelParams};
pub use error::{Error, Result};
pub use kmc::{Engine, Trajectory};
pub use local::LocalFunction;
pub use path::ExchangePath;
pub use observables::{Term, TermAccumulator, TestFunction, TestWeights};
pub use rational::Q;
pub use stats::{EstimatorReport, ScalingFit};
