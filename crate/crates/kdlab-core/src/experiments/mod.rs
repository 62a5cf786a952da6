//! Statistical experiments: each takes a [`Setup`], runs an ensemble (or a
//! deterministic sweep), and returns a result table plus any extra CSV
//! artifacts. The CLI is a thin dispatcher over these.

pub mod deterministic;
pub mod generator;
pub mod kernel;
pub mod martingale;
pub mod simulate;
pub mod stopping_stats;
pub mod tightness;
pub mod weak;
pub mod zeta;

use ndarray::Array1;

use crate::config::Setup;
use crate::error::Result;
use crate::grid::SpectralGrid;
use crate::kinetic::{self, StoppedTrajectory};
use crate::report::ResultTable;
use crate::rng::{stream, StreamKey};
use crate::{ensemble, kinetic::equilibrium_data};

/// A result table plus named CSV artifacts.
#[derive(Debug, Default)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub files: Vec<(String, Vec<u8>)>,
}

impl ExperimentOutput {
    pub fn pass(&self) -> bool {
        self.table.pass()
    }
}

/// Default initial density for the stochastic experiments: unit mass with a
/// single-mode modulation.
pub fn default_rho0(grid: &SpectralGrid) -> Array1<f64> {
    grid.points().mapv(|x| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).cos())
}

/// Pure single-mode density used by the deterministic-limit experiment.
pub fn single_mode_rho0(grid: &SpectralGrid, l: usize) -> Array1<f64> {
    grid.points().mapv(|x| (2.0 * std::f64::consts::PI * l as f64 * x).cos())
}

/// Runs a kinetic ensemble at one epsilon with per-trajectory streams.
pub fn kinetic_ensemble(
    setup: &Setup,
    experiment: &str,
    eps: f64,
    eps_index: usize,
    n_traj: usize,
    stop_enabled: bool,
    rho0: &Array1<f64>,
) -> Result<Vec<StoppedTrajectory>> {
    let config = setup.solver_config(eps, stop_enabled);
    config.validate(&setup.model)?;
    let master = setup.master_seed;
    let results = ensemble::map(n_traj, |i| {
        let mut rng = stream(
            StreamKey::new(master, experiment, "kinetic-driver")
                .with_eps_index(eps_index)
                .with_trajectory(i),
        );
        let f0 = equilibrium_data(&setup.model, rho0);
        let state = setup.driver.stationary_sample(&mut rng);
        kinetic::simulate_trajectory(
            &setup.grid,
            &setup.model,
            &setup.driver,
            &config,
            f0,
            state,
            &mut rng,
        )
    });
    results.into_iter().collect()
}

/// Time integral of a recorded squared-norm series by the trapezoid rule.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..times.len() {
        acc += 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
    }
    acc
}
