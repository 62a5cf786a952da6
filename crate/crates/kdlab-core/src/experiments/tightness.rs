//! Tightness diagnostics (stopped auxiliary-process moments and moduli of
//! continuity) and the averaging-lemma-motivated Sobolev-norm diagnostic.

use ndarray::Array1;

use crate::config::Setup;
use crate::driver::RescaledOu;
use crate::ensemble;
use crate::error::Result;
use crate::rng::{stream, StreamKey};
use crate::stats;
use crate::stopping;
use crate::testfn::default_battery;

use super::{default_rho0, kinetic_ensemble, ExperimentOutput};

pub const TIGHTNESS: &str = "tightness";
pub const SOBOLEV: &str = "sobolev-diagnostic";

/// Trend threshold on |log-log slope| across the epsilon list.
const SLOPE_TOL: f64 = 0.1;

/// `sup_t ||zeta^{eps, tau}(t)||_{H^2}^2` of one driver path; the running
/// sup freezes at the driver stopping time.
fn zeta_h2_sup(setup: &Setup, eps: f64, eps_index: usize, traj: usize) -> f64 {
    let mut rng = stream(
        StreamKey::new(setup.master_seed, TIGHTNESS, "driver-only")
            .with_eps_index(eps_index)
            .with_trajectory(traj),
    );
    let dt = setup.c_dt * eps * eps;
    let steps = (setup.horizon / dt).round().max(1.0) as usize;
    let threshold = setup.stopping.driver_threshold(eps);
    let state = setup.driver.stationary_sample(&mut rng);
    let mut view = RescaledOu::new(state, eps);
    let mut zeta = Array1::zeros(setup.driver.n_modes());
    let mut sup = 0.0f64;
    if setup.driver.e_norm(&view.state) > threshold {
        return 0.0; // stopped at once; zeta(0) = 0
    }
    for _ in 0..steps {
        let prev = view.state.modes.clone();
        view.step(&setup.driver, dt, &mut rng);
        stopping::update_zeta(&mut zeta, &prev, &view.state.modes, dt, eps);
        sup = sup.max(h2_norm_sq_of_modes(setup, &zeta));
        if setup.driver.e_norm(&view.state) > threshold {
            break;
        }
    }
    sup
}

/// `H^2` norm squared of a mode vector in the orthonormal real basis.
fn h2_norm_sq_of_modes(setup: &Setup, modes: &Array1<f64>) -> f64 {
    let cutoff = setup.driver.mode_cutoff();
    let mut acc = modes[0] * modes[0];
    for j in 1..=cutoff {
        let w = (1.0 + (2.0 * std::f64::consts::PI * j as f64).powi(2)).powi(2);
        acc += w * (modes[j] * modes[j] + modes[cutoff + j] * modes[cutoff + j]);
    }
    acc
}

pub fn run_tightness(setup: &Setup) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::default();
    let n_traj = setup.ensemble;

    // stopped zeta moments across epsilon
    let mut moments = Vec::new();
    for (ei, &eps) in setup.eps_list.iter().enumerate() {
        let sups = ensemble::map(n_traj, |i| zeta_h2_sup(setup, eps, ei, i));
        let (mean, se) = ensemble::mean_se(&sups);
        out.table.push_stat(TIGHTNESS, eps, "zeta_h2_sup_moment", mean, se, None);
        moments.push(mean);
    }
    let slope = stats::loglog_slope(&setup.eps_list, &moments);
    out.table.push_stat(
        TIGHTNESS,
        f64::NAN,
        "zeta_moment_loglog_slope",
        slope,
        0.0,
        Some(slope.abs() < SLOPE_TOL),
    );

    // modulus of continuity of phi(rho, zeta) on the snapshot grid
    let battery = default_battery(&setup.grid);
    let probes = [battery[0].clone(), battery[3].clone()];
    let rho0 = default_rho0(&setup.grid);
    let base_dt = setup.c_dt * setup.eps_list[0] * setup.eps_list[0];
    let lags: Vec<f64> = (0..4).map(|k| base_dt * (1 << k) as f64).collect();
    let mut modulus: Vec<Vec<(f64, f64)>> = Vec::new(); // per eps, per lag
    for (ei, &eps) in setup.eps_list.iter().enumerate() {
        let trajs = kinetic_ensemble(setup, TIGHTNESS, eps, ei, n_traj, true, &rho0)?;
        let mut per_lag = Vec::new();
        for &lag in &lags {
            let vals: Vec<f64> = trajs
                .iter()
                .map(|t| {
                    let series: Vec<(f64, f64)> = t
                        .rho_snapshots
                        .iter()
                        .zip(t.zeta_snapshots.iter())
                        .map(|((time, rho), (_, zeta))| {
                            (
                                *time,
                                probes
                                    .iter()
                                    .map(|tf| tf.eval(&setup.grid, rho, zeta))
                                    .sum::<f64>(),
                            )
                        })
                        .collect();
                    let mut sup = 0.0f64;
                    for (i, (ti, vi)) in series.iter().enumerate() {
                        for (tj, vj) in series.iter().skip(i + 1) {
                            if tj - ti > lag + 1e-12 {
                                break;
                            }
                            sup = sup.max((vj - vi).abs());
                        }
                    }
                    sup
                })
                .collect();
            per_lag.push(ensemble::mean_se(&vals));
        }
        for (li, &lag) in lags.iter().enumerate() {
            out.table.push_stat(
                TIGHTNESS,
                eps,
                &format!("modulus_lag_{lag:.4}"),
                per_lag[li].0,
                per_lag[li].1,
                None,
            );
        }
        modulus.push(per_lag);
    }
    // nonincreasing in eps at fixed lag, within confidence overlap
    let mut mod_ok = true;
    for li in 0..lags.len() {
        for w in modulus.windows(2) {
            let (m_big, se_big) = w[0][li];
            let (m_small, se_small) = w[1][li];
            if m_small > m_big + 2.0 * (se_big.powi(2) + se_small.powi(2)).sqrt() {
                mod_ok = false;
            }
        }
    }
    out.table.push_stat(
        TIGHTNESS,
        f64::NAN,
        "modulus_nonincreasing_in_eps",
        mod_ok as u8 as f64,
        0.0,
        Some(mod_ok),
    );
    Ok(out)
}

/// `E || rho^{eps, tau} ||_{L^2_T H^{1/4}}` across epsilon for two initial
/// conditions; the trend must stay flat. Labeled a diagnostic: the discrete
/// velocity model sits outside the averaging hypothesis, so this is
/// evidence, not a theorem check.
pub fn run_sobolev(setup: &Setup) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::default();
    let n_traj = setup.ensemble;
    let smooth = default_rho0(&setup.grid);
    let rough = setup
        .grid
        .points()
        .mapv(|x| 1.0 + 0.7 * (2.0 * std::f64::consts::PI * 6.0 * x).cos());
    for (ic_label, rho0) in [("smooth", &smooth), ("rough", &rough)] {
        let mut means = Vec::new();
        for (ei, &eps) in setup.eps_list.iter().enumerate() {
            let trajs = kinetic_ensemble(setup, SOBOLEV, eps, ei, n_traj, true, rho0)?;
            let vals: Vec<f64> = trajs
                .iter()
                .map(|t| {
                    let times: Vec<f64> = t.rho_snapshots.iter().map(|(time, _)| *time).collect();
                    let norms: Vec<f64> = t
                        .rho_snapshots
                        .iter()
                        .map(|(_, rho)| setup.grid.sobolev_norm_sq(rho, 0.25))
                        .collect();
                    super::trapezoid(&times, &norms).sqrt()
                })
                .collect();
            let (mean, se) = ensemble::mean_se(&vals);
            out.table.push_stat(SOBOLEV, eps, &format!("l2t_h14_{ic_label}"), mean, se, None);
            means.push(mean);
        }
        let slope = stats::loglog_slope(&setup.eps_list, &means);
        out.table.push_stat(
            SOBOLEV,
            f64::NAN,
            &format!("l2t_h14_slope_{ic_label}"),
            slope,
            0.0,
            Some(slope.abs() < SLOPE_TOL),
        );
    }
    Ok(out)
}
