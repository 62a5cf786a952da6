//! Stopped-martingale experiment: Dynkin increment tests and the variance
//! identity over an ensemble of stopped kinetic trajectories, together with
//! the pathwise energy bound.

use crate::config::Setup;
use crate::ensemble;
use crate::error::Result;
use crate::kinetic::{self, energy_report, equilibrium_data};
use crate::rng::{stream, StreamKey};
use crate::testfn::calculus::CalculusCtx;
use crate::testfn::martingale::{
    increment_test, variance_identity, IncrementSpec, MartingaleRecorder, PathFunctionals, Weight,
};
use crate::testfn::{default_battery, xi_constant, xi_cos};

use super::{default_rho0, ExperimentOutput};

pub const NAME: &str = "martingale-check";

pub struct MartingaleRun {
    pub paths: Vec<PathFunctionals>,
    pub energy_worst: f64,
    pub energy_bound: f64,
    pub energy_violations: usize,
    pub sample_times: Vec<f64>,
    pub specs: Vec<IncrementSpec>,
    pub weights: Vec<Weight>,
}

/// The six (phi, s, t, g) increment tests from the default battery.
pub fn default_specs(setup: &Setup) -> (Vec<IncrementSpec>, Vec<Weight>) {
    let horizon = setup.horizon;
    let grid = &setup.grid;
    let weights = vec![
        Weight::One,
        Weight::SineRho { xi: xi_cos(grid, 1) },
        Weight::One,
        Weight::CosZeta { eta: xi_constant(grid) },
        Weight::One,
        Weight::SineRho { xi: xi_constant(grid) },
    ];
    let combos = [
        (0usize, 0.1, 0.6),
        (1, 0.2, 1.0),
        (2, 0.0, 0.5),
        (3, 0.1, 0.9),
        (4, 0.25, 0.75),
        (5, 0.0, 1.0),
    ];
    let specs = combos
        .iter()
        .zip(weights.iter())
        .map(|((tf, s, t), w)| IncrementSpec {
            tf_index: *tf,
            s: s * horizon,
            t: t * horizon,
            weight: w.clone(),
            label: format!("phi{tf}-s{s}-t{t}-{}", w.name()),
        })
        .collect();
    (specs, weights)
}

pub fn run_ensemble(setup: &Setup, eps: f64, eps_index: usize, n_traj: usize) -> Result<MartingaleRun> {
    let ctx = CalculusCtx::new(setup.model.clone(), setup.driver.clone())?;
    let battery = default_battery(&setup.grid);
    let (specs, weights) = default_specs(setup);
    let mut sample_times: Vec<f64> = specs.iter().flat_map(|s| [s.s, s.t]).collect();
    sample_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sample_times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let config = setup.solver_config(eps, true);
    config.validate(&setup.model)?;
    let dt = config.dt();
    let rho0 = default_rho0(&setup.grid);

    struct TrajOut {
        path: PathFunctionals,
        energy_ratio: f64,
    }
    let results: Result<Vec<TrajOut>> = ensemble::map(n_traj, |i| {
        let mut rng = stream(
            StreamKey::new(setup.master_seed, NAME, "kinetic-driver")
                .with_eps_index(eps_index)
                .with_trajectory(i),
        );
        let f0 = equilibrium_data(&setup.model, &rho0);
        let state = setup.driver.stationary_sample(&mut rng);
        let mut recorder =
            MartingaleRecorder::new(&ctx, &battery, &weights, eps, dt, &sample_times);
        let traj = kinetic::simulate_trajectory_with(
            &setup.grid,
            &setup.model,
            &setup.driver,
            &config,
            f0,
            state,
            &mut rng,
            |sim| recorder.observe(sim),
        )?;
        let energy = energy_report(&traj, &setup.model, setup.stopping.lambda, setup.horizon);
        Ok(TrajOut { path: recorder.finish(), energy_ratio: energy.worst_ratio })
    })
    .into_iter()
    .collect();
    let results = results?;
    let lambda = setup.stopping.lambda;
    let bound =
        (2.0 * lambda + 4.0 * setup.model.a_l2m_norm_sq() * lambda * lambda * setup.horizon).exp();
    let energy_worst = results.iter().map(|r| r.energy_ratio).fold(0.0f64, f64::max);
    let energy_violations = results.iter().filter(|r| r.energy_ratio > bound).count();
    Ok(MartingaleRun {
        paths: results.into_iter().map(|r| r.path).collect(),
        energy_worst,
        energy_bound: bound,
        energy_violations,
        sample_times,
        specs,
        weights,
    })
}

pub fn run(setup: &Setup) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::default();
    let eps = setup.eps;
    let eps_index = setup.eps_list.iter().position(|&e| e == eps).unwrap_or(0);
    let run_data = run_ensemble(setup, eps, eps_index, setup.ensemble)?;

    let mut csv = Vec::new();
    {
        use std::io::Write;
        writeln!(&mut csv, "test,z_score,mean,se,n_used,n_rejected,exact_zero")?;
        for (i, spec) in run_data.specs.iter().enumerate() {
            let res = increment_test(spec, i, &run_data.sample_times, &run_data.paths);
            writeln!(
                &mut csv,
                "{},{},{},{},{},{},{}",
                res.label, res.z, res.mean, res.se, res.n_used, res.n_rejected, res.exact_zero
            )?;
            out.table.push_stat(
                NAME,
                eps,
                &format!("z_{}", res.label),
                res.z,
                res.se,
                Some(res.exact_zero || res.z.abs() < 3.0),
            );
        }
    }
    out.files.push(("martingale_tests.csv".into(), csv));

    // variance identity in two configurations
    let horizon = setup.horizon;
    for (label, tf_index, t) in
        [("var-phi0-T", 0usize, horizon), ("var-phi3-halfT", 3usize, 0.5 * horizon)]
    {
        let res = variance_identity(label, tf_index, t, eps, &run_data.sample_times, &run_data.paths);
        out.table.push_stat(
            NAME,
            eps,
            &format!("variance_ratio_{label}"),
            res.ratio,
            res.m2_se / res.gamma_mean.abs().max(1e-300),
            Some((res.ratio - 1.0).abs() < 0.2),
        );
    }

    // pathwise energy bound over the whole ensemble
    out.table.push_stat(
        NAME,
        eps,
        "energy_bound",
        run_data.energy_bound,
        0.0,
        None,
    );
    out.table.push_stat(
        NAME,
        eps,
        "energy_worst_ratio",
        run_data.energy_worst,
        0.0,
        Some(run_data.energy_violations == 0),
    );
    out.table.push_stat(
        NAME,
        eps,
        "energy_violations",
        run_data.energy_violations as f64,
        0.0,
        Some(run_data.energy_violations == 0),
    );
    let rejected = run_data.paths.iter().filter(|p| p.diverged).count();
    out.table.push_stat(NAME, eps, "trajectories_rejected", rejected as f64, 0.0, None);
    Ok(out)
}
