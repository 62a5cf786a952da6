//! Numerical laboratory for a stochastic kinetic equation in the diffusion
//! approximation regime: a splitting solver for the fast-scale system, a
//! spectral Galerkin solver for the limiting stochastic diffusion, the
//! covariance machinery connecting them, stopping-time bookkeeping, the
//! perturbed-test-function calculus, and statistical experiments tying it
//! all together.

pub mod config;
pub mod covariance;
pub mod driver;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod kinetic;
pub mod limit;
pub mod report;
pub mod rng;
pub mod stats;
pub mod stopping;
pub mod testfn;
pub mod velocity;

pub use error::{Error, Result};
