//! Exceedance statistics of the driver stopping time across epsilon,
//! computed on driver-only trajectories (the stopping times are functionals
//! of the driver path alone).

use ndarray::Array1;

use crate::config::Setup;
use crate::driver::RescaledOu;
use crate::ensemble;
use crate::error::Result;
use crate::rng::{stream, StreamKey};
use crate::stopping::{self, ExceedanceRow, NEVER};

use super::ExperimentOutput;

pub const NAME: &str = "stopping-stats";

/// First crossing times `(tau_driver, tau_hitting)` of one driver path on
/// the solver time grid, without any feedback (no stopping applied).
pub fn driver_crossings(
    setup: &Setup,
    experiment: &str,
    eps: f64,
    eps_index: usize,
    traj: usize,
) -> (f64, f64) {
    let mut rng = stream(
        StreamKey::new(setup.master_seed, experiment, "driver-only")
            .with_eps_index(eps_index)
            .with_trajectory(traj),
    );
    let dt = setup.c_dt * eps * eps;
    let steps = (setup.horizon / dt).round().max(1.0) as usize;
    let threshold = setup.stopping.driver_threshold(eps);
    let state = setup.driver.stationary_sample(&mut rng);
    let mut view = RescaledOu::new(state, eps);
    let mut zeta = Array1::zeros(setup.driver.n_modes());
    let mut tau_driver = NEVER;
    let mut tau_hitting = NEVER;
    if setup.driver.e_norm(&view.state) > threshold {
        tau_driver = 0.0;
    }
    for i in 0..steps {
        let prev = view.state.modes.clone();
        view.step(&setup.driver, dt, &mut rng);
        stopping::update_zeta(&mut zeta, &prev, &view.state.modes, dt, eps);
        let t = (i + 1) as f64 * dt;
        if tau_driver == NEVER && setup.driver.e_norm(&view.state) > threshold {
            tau_driver = t;
        }
        if tau_hitting == NEVER
            && setup.driver.c1_norm_of_modes(&zeta) >= setup.stopping.lambda
        {
            tau_hitting = t;
        }
        if tau_driver != NEVER && tau_hitting != NEVER {
            break;
        }
    }
    (tau_driver, tau_hitting)
}

pub fn exceedance_table(setup: &Setup, n_traj: usize) -> Result<Vec<ExceedanceRow>> {
    let mut rows = Vec::new();
    for (ei, &eps) in setup.eps_list.iter().enumerate() {
        let crossings = ensemble::map(n_traj, |i| driver_crossings(setup, NAME, eps, ei, i));
        let taus: Vec<f64> = crossings.iter().map(|c| c.0).collect();
        rows.push(stopping::exceedance_row(eps, &setup.stopping, &taus, setup.horizon));
    }
    Ok(rows)
}

pub fn run(setup: &Setup) -> Result<ExperimentOutput> {
    let n_traj = setup.ensemble.max(1024);
    let rows = exceedance_table(setup, n_traj)?;
    let mut out = ExperimentOutput::default();
    for r in &rows {
        out.table.push_stat(NAME, r.eps, "p_tau_lt_T", r.p_hat, 0.0, None);
        out.table.push_stat(NAME, r.eps, "ci_low", r.ci_low, 0.0, None);
        out.table.push_stat(NAME, r.eps, "ci_high", r.ci_high, 0.0, None);
    }
    let nonincreasing = rows.windows(2).all(|w| w[1].p_hat <= w[0].p_hat);
    out.table.push_stat(
        NAME,
        f64::NAN,
        "p_hat_nonincreasing",
        nonincreasing as u8 as f64,
        0.0,
        Some(nonincreasing),
    );
    let last = rows.last().expect("eps list nonempty");
    out.table.push_stat(
        NAME,
        last.eps,
        "p_hat_below_2pct_at_finest",
        last.p_hat,
        0.0,
        Some(last.p_hat < 0.02),
    );
    let mut csv = Vec::new();
    {
        use std::io::Write;
        writeln!(&mut csv, "epsilon,Lambda,alpha,p_hat,ci_low,ci_high,n_traj")?;
        for r in &rows {
            writeln!(
                &mut csv,
                "{},{},{},{},{},{},{}",
                r.eps, r.lambda, r.alpha, r.p_hat, r.ci_low, r.ci_high, r.n_traj
            )?;
        }
    }
    out.files.push(("stopping_stats.csv".into(), csv));
    Ok(out)
}
