//! Weak-convergence comparison: test-function expectations of the kinetic
//! pair `(rho^eps, zeta^eps)` against the limiting pair `(rho, zeta)` over a
//! decreasing epsilon list, plus the time-integrated L2 functional and a
//! negative-Sobolev distance diagnostic.

use ndarray::Array1;

use crate::config::Setup;
use crate::covariance::CovarianceModel;
use crate::ensemble;
use crate::error::Result;
use crate::limit::{self, LimitConfig};
use crate::rng::{stream, StreamKey};
use crate::testfn::{default_battery, TestFunction};

use super::{default_rho0, kinetic_ensemble, trapezoid, ExperimentOutput};

pub const NAME: &str = "weak-convergence";

/// Observables of one trajectory (kinetic or limit).
#[derive(Debug, Clone)]
pub struct Observables {
    pub phi: Vec<f64>,
    pub l2t: f64,
    pub h_minus_sq: f64,
}

#[derive(Debug, Clone)]
pub struct MeanWithSe {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

fn summarize(samples: &[Observables]) -> MeanWithSe {
    let n_obs = samples[0].phi.len() + 2;
    let mut mean = Vec::with_capacity(n_obs);
    let mut se = Vec::with_capacity(n_obs);
    for k in 0..samples[0].phi.len() {
        let vals: Vec<f64> = samples.iter().map(|s| s.phi[k]).collect();
        let (m, s) = ensemble::mean_se(&vals);
        mean.push(m);
        se.push(s);
    }
    for extract in [
        (|s: &Observables| s.l2t) as fn(&Observables) -> f64,
        |s: &Observables| s.h_minus_sq,
    ] {
        let vals: Vec<f64> = samples.iter().map(extract).collect();
        let (m, s) = ensemble::mean_se(&vals);
        mean.push(m);
        se.push(s);
    }
    MeanWithSe { mean, se }
}

fn observe(
    setup: &Setup,
    battery: &[TestFunction],
    rho_t: &Array1<f64>,
    zeta_t: &Array1<f64>,
    times: &[f64],
    rho_l2_sq: &[f64],
) -> Observables {
    let phi = battery.iter().map(|tf| tf.eval(&setup.grid, rho_t, zeta_t)).collect();
    Observables {
        phi,
        l2t: trapezoid(times, rho_l2_sq),
        h_minus_sq: setup.grid.sobolev_norm_sq(rho_t, -setup.sigma_exponent),
    }
}

pub fn kinetic_observables(
    setup: &Setup,
    battery: &[TestFunction],
    eps: f64,
    eps_index: usize,
    n_traj: usize,
) -> Result<Vec<Observables>> {
    let rho0 = default_rho0(&setup.grid);
    let trajs = kinetic_ensemble(setup, NAME, eps, eps_index, n_traj, false, &rho0)?;
    Ok(trajs
        .iter()
        .map(|t| {
            let (_, rho_t) = t.rho_snapshots.last().expect("snapshots");
            let (_, zeta_t) = t.zeta_snapshots.last().expect("snapshots");
            observe(setup, battery, rho_t, zeta_t, &t.times, &t.rho_l2_sq)
        })
        .collect())
}

pub fn limit_observables(
    setup: &Setup,
    battery: &[TestFunction],
    n_traj: usize,
) -> Result<Vec<Observables>> {
    let cov = CovarianceModel::from_driver(&setup.driver)?;
    let diffusion = setup.model.diffusion_scalar()?;
    let steps = (setup.horizon / setup.limit_dt).round().max(1.0) as usize;
    let config = LimitConfig {
        dt: setup.limit_dt,
        horizon: setup.horizon,
        snapshot_stride: (steps / 100).max(1),
    };
    let rho0 = default_rho0(&setup.grid);
    let results: Result<Vec<Observables>> = ensemble::map(n_traj, |i| {
        let mut rng = stream(
            StreamKey::new(setup.master_seed, NAME, "limit-noise").with_trajectory(i),
        );
        let traj = limit::simulate_limit(&setup.grid, &cov, diffusion, &config, rho0.clone(), &mut rng)?;
        let (_, rho_t) = traj.rho_snapshots.last().expect("snapshots");
        let (_, zeta_t) = traj.zeta_snapshots.last().expect("snapshots");
        Ok(observe(setup, battery, rho_t, zeta_t, &traj.times, &traj.rho_l2_sq))
    })
    .into_iter()
    .collect();
    results
}

pub fn run(setup: &Setup) -> Result<ExperimentOutput> {
    let battery = default_battery(&setup.grid);
    let n = setup.ensemble;
    let limit_stats = summarize(&limit_observables(setup, &battery, n)?);
    let mut per_eps = Vec::new();
    for (ei, &eps) in setup.eps_list.iter().enumerate() {
        per_eps.push((eps, summarize(&kinetic_observables(setup, &battery, eps, ei, n)?)));
    }
    let mut out = ExperimentOutput::default();
    let n_phi = battery.len();
    let labels: Vec<String> = battery
        .iter()
        .map(|t| t.label.clone())
        .chain(["l2t_functional".to_string(), "h_minus_sigma_sq".to_string()])
        .collect();

    // deltas and their standard errors per observable and epsilon
    let deltas: Vec<Vec<(f64, f64)>> = per_eps
        .iter()
        .map(|(_, stats)| {
            (0..labels.len())
                .map(|k| {
                    let d = (stats.mean[k] - limit_stats.mean[k]).abs();
                    let se = (stats.se[k].powi(2) + limit_stats.se[k].powi(2)).sqrt();
                    (d, se)
                })
                .collect()
        })
        .collect();
    for ((eps, _), row) in per_eps.iter().zip(deltas.iter()) {
        for (k, label) in labels.iter().enumerate() {
            out.table.push_stat(NAME, *eps, &format!("delta_{label}"), row[k].0, row[k].1, None);
        }
    }
    // ordering requirement: Delta at the smallest eps beats the largest by
    // two combined standard errors, for at least 5 of the 6 test functions
    let first = &deltas[0];
    let last = deltas.last().expect("eps list nonempty");
    let mut phi_ordered = 0;
    for k in 0..n_phi {
        let se_comb = (first[k].1.powi(2) + last[k].1.powi(2)).sqrt();
        let ok = last[k].0 < first[k].0 - 2.0 * se_comb;
        if ok {
            phi_ordered += 1;
        }
        out.table.push_stat(
            NAME,
            f64::NAN,
            &format!("ordering_{}", labels[k]),
            (first[k].0 - last[k].0) / se_comb.max(1e-300),
            0.0,
            None,
        );
    }
    out.table.push_stat(
        NAME,
        f64::NAN,
        "phi_orderings_passed",
        phi_ordered as f64,
        0.0,
        Some(phi_ordered >= 5),
    );
    let k_l2t = n_phi;
    let se_comb = (first[k_l2t].1.powi(2) + last[k_l2t].1.powi(2)).sqrt();
    let l2t_ok = last[k_l2t].0 < first[k_l2t].0 - 2.0 * se_comb;
    out.table.push_stat(
        NAME,
        f64::NAN,
        "l2t_ordering",
        (first[k_l2t].0 - last[k_l2t].0) / se_comb.max(1e-300),
        0.0,
        Some(l2t_ok),
    );
    let k_h = n_phi + 1;
    out.table.push_stat(
        NAME,
        f64::NAN,
        "h_minus_sigma_ordering_info",
        first[k_h].0 - last[k_h].0,
        (first[k_h].1.powi(2) + last[k_h].1.powi(2)).sqrt(),
        None,
    );
    Ok(out)
}
