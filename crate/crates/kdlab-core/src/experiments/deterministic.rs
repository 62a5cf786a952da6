//! Noiseless diffusion-limit sweep: the kinetic density against the exact
//! heat decay of a single Fourier mode.

use crate::config::Setup;
use crate::driver::{OuParams, SigmaProfile};
use crate::error::Result;
use crate::kinetic::{self, equilibrium_data};
use crate::rng::{stream, StreamKey};

use super::{single_mode_rho0, ExperimentOutput};

pub const NAME: &str = "deterministic-limit";

/// Relative and initial-normalized terminal errors at one epsilon.
#[derive(Debug, Clone)]
pub struct DeterministicRow {
    pub eps: f64,
    pub rel_to_reference: f64,
    pub rel_to_initial: f64,
    pub abs_distance: f64,
}

pub fn sweep(setup: &Setup, eps_list: &[f64]) -> Result<Vec<DeterministicRow>> {
    let grid = &setup.grid;
    let quiet = OuParams::from_profile(
        setup.driver.mode_cutoff(),
        setup.driver.theta(),
        SigmaProfile::Zero,
        1.0,
        grid.nx(),
    )?;
    let diffusion = setup.model.diffusion_scalar()?;
    let rho0 = single_mode_rho0(grid, 1);
    let decay = (-4.0 * std::f64::consts::PI.powi(2) * diffusion * setup.horizon).exp();
    let reference = rho0.mapv(|v| v * decay);
    let mut rows = Vec::new();
    for &eps in eps_list {
        let config = setup.solver_config(eps, false);
        config.validate(&setup.model)?;
        let mut rng = stream(StreamKey::new(setup.master_seed, NAME, "kinetic-driver"));
        let f0 = equilibrium_data(&setup.model, &rho0);
        let state = quiet.stationary_sample(&mut rng);
        let traj = kinetic::simulate_trajectory(
            &setup.grid,
            &setup.model,
            &quiet,
            &config,
            f0,
            state,
            &mut rng,
        )?;
        let (_, rho_t) = traj.rho_snapshots.last().expect("snapshots recorded");
        let distance = grid.l2_norm(&(rho_t - &reference));
        rows.push(DeterministicRow {
            eps,
            rel_to_reference: distance / grid.l2_norm(&reference),
            rel_to_initial: distance / grid.l2_norm(&rho0),
            abs_distance: distance,
        });
    }
    Ok(rows)
}

pub fn run(setup: &Setup) -> Result<ExperimentOutput> {
    let rows = sweep(setup, &setup.eps_list)?;
    let mut out = ExperimentOutput::default();
    let monotone = rows.windows(2).all(|w| w[1].rel_to_reference < w[0].rel_to_reference);
    for row in &rows {
        out.table.push_stat(NAME, row.eps, "rel_error_to_reference", row.rel_to_reference, 0.0, None);
        out.table.push_stat(NAME, row.eps, "rel_error_to_initial", row.rel_to_initial, 0.0, None);
        out.table.push_stat(NAME, row.eps, "l2_distance", row.abs_distance, 0.0, None);
    }
    out.table.push_stat(
        NAME,
        f64::NAN,
        "rel_error_monotone_decreasing",
        monotone as u8 as f64,
        0.0,
        Some(monotone),
    );
    let last = rows.last().expect("nonempty eps list");
    out.table.push_stat(
        NAME,
        last.eps,
        "rel_error_below_5pct_at_finest",
        last.rel_to_reference,
        0.0,
        Some(last.rel_to_reference < 0.05),
    );
    Ok(out)
}
