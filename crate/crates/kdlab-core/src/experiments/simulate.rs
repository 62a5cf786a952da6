//! Single-trajectory runs for the kinetic and limit solvers, emitting the
//! shared series/snapshot CSV schema.

use crate::config::Setup;
use crate::covariance::CovarianceModel;
use crate::error::Result;
use crate::kinetic::{self, energy_report, equilibrium_data};
use crate::limit::{self, LimitConfig};
use crate::report::{write_series_csv, write_snapshots_csv};
use crate::rng::{stream, StreamKey};

use super::{default_rho0, ExperimentOutput};

pub const KINETIC: &str = "simulate-kinetic";
pub const LIMIT: &str = "simulate-limit";

pub fn run_kinetic(setup: &Setup) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::default();
    let config = setup.solver_config(setup.eps, true);
    for w in config.validate(&setup.model)? {
        out.table.push_stat(KINETIC, setup.eps, &format!("warning: {w}"), f64::NAN, 0.0, None);
    }
    let mut rng = stream(StreamKey::new(setup.master_seed, KINETIC, "kinetic-driver"));
    let rho0 = default_rho0(&setup.grid);
    let f0 = equilibrium_data(&setup.model, &rho0);
    let state = setup.driver.stationary_sample(&mut rng);
    let traj = kinetic::simulate_trajectory(
        &setup.grid,
        &setup.model,
        &setup.driver,
        &config,
        f0,
        state,
        &mut rng,
    )?;
    let mut series = Vec::new();
    write_series_csv(&mut series, &traj.times, &traj.f_norm, &traj.m_e_norm, &traj.zeta_c1, traj.tau)?;
    out.files.push(("trajectory.csv".into(), series));
    let coords = setup.grid.points();
    let mut rho_csv = Vec::new();
    write_snapshots_csv(&mut rho_csv, "rho", &coords, &traj.rho_snapshots)?;
    out.files.push(("rho_snapshots.csv".into(), rho_csv));
    let mut zeta_csv = Vec::new();
    write_snapshots_csv(&mut zeta_csv, "zeta", &coords, &traj.zeta_snapshots)?;
    out.files.push(("zeta_snapshots.csv".into(), zeta_csv));
    out.table.push_stat(KINETIC, setup.eps, "tau_driver", traj.tau_driver, 0.0, None);
    out.table.push_stat(KINETIC, setup.eps, "tau_hitting", traj.tau_hitting, 0.0, None);
    out.table.push_stat(KINETIC, setup.eps, "tau", traj.tau, 0.0, None);
    out.table.push_stat(
        KINETIC,
        setup.eps,
        "diverged",
        traj.diverged as u8 as f64,
        0.0,
        Some(!traj.diverged),
    );
    let energy = energy_report(&traj, &setup.model, setup.stopping.lambda, setup.horizon);
    out.table.push_stat(KINETIC, setup.eps, "energy_worst_ratio", energy.worst_ratio, 0.0, Some(energy.pass));
    Ok(out)
}

pub fn run_limit(setup: &Setup) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::default();
    let cov = CovarianceModel::from_driver(&setup.driver)?;
    let diffusion = setup.model.diffusion_scalar()?;
    let steps = (setup.horizon / setup.limit_dt).round().max(1.0) as usize;
    let config = LimitConfig {
        dt: setup.limit_dt,
        horizon: setup.horizon,
        snapshot_stride: (steps / 100).max(1),
    };
    let mut rng = stream(StreamKey::new(setup.master_seed, LIMIT, "limit-noise"));
    let rho0 = default_rho0(&setup.grid);
    let traj = limit::simulate_limit(&setup.grid, &cov, diffusion, &config, rho0, &mut rng)?;
    let state_norm: Vec<f64> = traj.rho_l2_sq.iter().map(|v| v.sqrt()).collect();
    let zeros = vec![0.0; traj.times.len()];
    let mut series = Vec::new();
    write_series_csv(&mut series, &traj.times, &state_norm, &zeros, &traj.zeta_c1, f64::INFINITY)?;
    out.files.push(("trajectory.csv".into(), series));
    let coords = setup.grid.points();
    let mut rho_csv = Vec::new();
    write_snapshots_csv(&mut rho_csv, "rho", &coords, &traj.rho_snapshots)?;
    out.files.push(("rho_snapshots.csv".into(), rho_csv));
    let mut zeta_csv = Vec::new();
    write_snapshots_csv(&mut zeta_csv, "zeta", &coords, &traj.zeta_snapshots)?;
    out.files.push(("zeta_snapshots.csv".into(), zeta_csv));
    out.table.push_stat(LIMIT, f64::NAN, "final_rho_l2", *state_norm.last().unwrap(), 0.0, None);
    // Ito-Stratonovich drift consistency for the assembled covariance
    let (_, err) = limit::ito_stratonovich_check(&cov);
    out.table.push_stat(LIMIT, f64::NAN, "ito_drift_reconstruction_error", err, 0.0, Some(err < 1e-8));
    Ok(out)
}
