//! Auxiliary-process limit diagnostics: covariance against `t k(x,y)`,
//! Gaussianity of smooth functionals, and an increment-independence proxy.

use ndarray::Array1;

use crate::config::Setup;
use crate::driver::RescaledOu;
use crate::ensemble;
use crate::error::Result;
use crate::rng::{stream, StreamKey};
use crate::stats;
use crate::stopping;

use super::ExperimentOutput;

pub const NAME: &str = "zeta-wiener";

/// Epsilon above which the limit comparison is skipped as pre-asymptotic.
const EPS_SKIP: f64 = 0.5;

struct ZetaSample {
    /// zeta field at the half horizon
    half: Array1<f64>,
    /// zeta field at the horizon
    full: Array1<f64>,
}

fn sample_zeta(setup: &Setup, eps: f64, traj: usize) -> ZetaSample {
    let mut rng = stream(
        StreamKey::new(setup.master_seed, NAME, "driver-only").with_trajectory(traj),
    );
    let dt = setup.c_dt * eps * eps;
    let steps = (setup.horizon / dt).round().max(1.0) as usize;
    let half_step = steps / 2;
    let state = setup.driver.stationary_sample(&mut rng);
    let mut view = RescaledOu::new(state, eps);
    let mut zeta = Array1::zeros(setup.driver.n_modes());
    let mut half = Array1::zeros(setup.grid.nx());
    for i in 0..steps {
        let prev = view.state.modes.clone();
        view.step(&setup.driver, dt, &mut rng);
        stopping::update_zeta(&mut zeta, &prev, &view.state.modes, dt, eps);
        if i + 1 == half_step {
            half = setup.driver.synthesize(&zeta);
        }
    }
    ZetaSample { half, full: setup.driver.synthesize(&zeta) }
}

pub fn run(setup: &Setup) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::default();
    let eps = *setup.eps_list.last().expect("eps list nonempty");
    if eps > EPS_SKIP {
        out.table.push_stat(NAME, eps, "skipped_pre_asymptotic", 1.0, 0.0, None);
        return Ok(out);
    }
    let n_traj = setup.ensemble.max(1024);
    let samples = ensemble::map(n_traj, |i| sample_zeta(setup, eps, i));
    let kernel = setup.driver.analytic_kernel();
    let nx = setup.grid.nx();

    // covariance at a 4x4 grid of point pairs
    let idx = [0, nx / 4, nx / 2, 3 * nx / 4];
    let mut worst = 0.0f64;
    for &a in &idx {
        for &b in &idx {
            let vals: Vec<f64> = samples.iter().map(|s| s.full[a] * s.full[b]).collect();
            let (mean, se) = ensemble::mean_se(&vals);
            let expected = setup.horizon * kernel[(a, b)];
            let dev = if se > 0.0 { (mean - expected).abs() / se } else { 0.0 };
            worst = worst.max(dev);
            out.table.push_stat(NAME, eps, &format!("cov_dev_se_{a}_{b}"), dev, 0.0, None);
        }
    }
    out.table.push_stat(NAME, eps, "cov_max_deviation_se", worst, 0.0, Some(worst < 3.0));

    // Gaussianity of a smooth linear functional at the horizon
    let eta = setup.grid.points().mapv(|x| 1.0 + (2.0 * std::f64::consts::PI * x).cos());
    let proj: Vec<f64> = samples.iter().map(|s| setup.grid.inner(&s.full, &eta)).collect();
    let (z_skew, z_kurt) = stats::normality_z(&proj);
    out.table.push_stat(NAME, eps, "normality_z_skew", z_skew, 0.0, Some(z_skew.abs() < 3.0));
    out.table.push_stat(NAME, eps, "normality_z_kurt", z_kurt, 0.0, Some(z_kurt.abs() < 3.0));

    // increment independence proxy: corr(<zeta(t2)-zeta(t1), eta>, <zeta(t1), eta>)
    let early: Vec<f64> = samples.iter().map(|s| setup.grid.inner(&s.half, &eta)).collect();
    let incr: Vec<f64> = samples
        .iter()
        .map(|s| setup.grid.inner(&(&s.full - &s.half), &eta))
        .collect();
    let corr = stats::correlation(&early, &incr);
    let corr_limit = 3.0 / (n_traj as f64).sqrt();
    out.table.push_stat(
        NAME,
        eps,
        "increment_correlation",
        corr,
        1.0 / (n_traj as f64).sqrt(),
        Some(corr.abs() < corr_limit),
    );
    Ok(out)
}
