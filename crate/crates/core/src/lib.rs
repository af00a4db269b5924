//! Linear-parameter-varying surrogates of a floating wind turbine identified
//! from simulated state derivatives, plus the tooling around them: signal
//! generation, a nonlinear reference plant, the baseline controller,
//! a subspace-identification baseline, load metrics and a DOE driver.

pub mod cli;
pub mod closed_loop;
pub mod controller;
pub mod deriv;
pub mod doe;
pub mod envgen;
pub mod error;
pub mod linalg;
pub mod lpvfit;
pub mod lpvsim;
pub mod metrics;
pub mod pipeline;
pub mod refplant;
pub mod rng;
pub mod subspace;
pub mod timeseries;

pub use error::{Error, Result};
