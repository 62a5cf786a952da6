//! Generator consistency experiment: the corrector cascade at random
//! states, derivative cross-checks against central differences, and the
//! first-order decay of the perturbed-generator residual.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::config::Setup;
use crate::error::Result;
use crate::rng::{stream, StreamKey};
use crate::stats;
use crate::testfn::calculus::{CalculusCtx, Functional};
use crate::testfn::{default_battery, TestFunction};

use super::ExperimentOutput;

pub const NAME: &str = "generator-consistency";

pub const RESIDUAL_EPS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Random smooth state: band-limited phase-space field around unit mass,
/// smooth auxiliary field, stationary driver sample.
pub fn random_state(
    ctx: &CalculusCtx,
    rng: &mut ChaCha12Rng,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let nx = ctx.grid().nx();
    let nv = ctx.model().nodes();
    let pts = ctx.grid().points();
    let mut f = Array2::zeros((nv, nx));
    for mut row in f.rows_mut() {
        let coef: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() - 0.5).collect();
        for (j, v) in row.iter_mut().enumerate() {
            let x = pts[j];
            *v = 1.0
                + coef[0]
                + coef[1] * (2.0 * std::f64::consts::PI * x).cos()
                + coef[2] * (4.0 * std::f64::consts::PI * x).sin();
        }
    }
    let (za, zb) = (rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
    let z = pts.mapv(|x| za + zb * (2.0 * std::f64::consts::PI * x).sin());
    let n = ctx.driver().stationary_sample(rng).modes;
    (f, z, n)
}

fn rel(residual: f64, scale: f64) -> f64 {
    residual.abs() / scale.max(1e-12)
}

pub struct CascadeReport {
    pub max_order2: f64,
    pub max_order1: f64,
    pub max_order0: f64,
    pub max_derivative_gap: f64,
    pub slopes: Vec<f64>,
}

pub fn cascade_report(
    ctx: &CalculusCtx,
    battery: &[TestFunction],
    n_states: usize,
    master_seed: u64,
) -> CascadeReport {
    let mut rng = stream(StreamKey::new(master_seed, NAME, "states"));
    let mut report = CascadeReport {
        max_order2: 0.0,
        max_order1: 0.0,
        max_order0: 0.0,
        max_derivative_gap: 0.0,
        slopes: Vec::new(),
    };
    for _ in 0..n_states {
        let (f, z, n) = random_state(ctx, &mut rng);
        let (df_dir, dz_dir, dn_dir) = random_state(ctx, &mut rng);
        let mut residual_by_eps = vec![0.0f64; RESIDUAL_EPS.len()];
        for tf in battery {
            // order -2: L2 phi = 0
            let l2phi = ctx.l2(tf, Functional::Phi, &f, &z, &n);
            report.max_order2 = report.max_order2.max(l2phi.abs());
            // order -1: L1 phi + L2 phi1 = 0
            let a = ctx.l1(tf, Functional::Phi, &f, &z, &n);
            let b = ctx.l2(tf, Functional::Phi1, &f, &z, &n);
            report.max_order1 = report.max_order1.max(rel(a + b, a.abs() + b.abs()));
            // order 0: L1 phi1 + L2 phi2 = L phi
            let lhs = ctx.l1(tf, Functional::Phi1, &f, &z, &n)
                + ctx.l2(tf, Functional::Phi2, &f, &z, &n);
            let rhs = ctx.value(tf, Functional::LimitGen, &f, &z, &n);
            report.max_order0 = report.max_order0.max(rel(lhs - rhs, lhs.abs() + rhs.abs() + 1.0));
            // derivative cross-checks against central differences
            let h = 1e-6;
            for kind in [Functional::Phi1, Functional::Phi2] {
                let analytic = ctx.d_f(tf, kind, &f, &z, &n, &df_dir);
                let fd = (ctx.value(tf, kind, &(&f + &df_dir.mapv(|v| v * h)), &z, &n)
                    - ctx.value(tf, kind, &(&f - &df_dir.mapv(|v| v * h)), &z, &n))
                    / (2.0 * h);
                report.max_derivative_gap =
                    report.max_derivative_gap.max(rel(analytic - fd, analytic.abs() + 1.0));
                let analytic = ctx.d_z(tf, kind, &f, &z, &n, &dz_dir);
                let fd = (ctx.value(tf, kind, &f, &(&z + &dz_dir.mapv(|v| v * h)), &n)
                    - ctx.value(tf, kind, &f, &(&z - &dz_dir.mapv(|v| v * h)), &n))
                    / (2.0 * h);
                report.max_derivative_gap =
                    report.max_derivative_gap.max(rel(analytic - fd, analytic.abs() + 1.0));
                let analytic = ctx.d_n(tf, kind, &f, &z, &n, &dn_dir);
                let fd = (ctx.value(tf, kind, &f, &z, &(&n + &dn_dir.mapv(|v| v * h)))
                    - ctx.value(tf, kind, &f, &z, &(&n - &dn_dir.mapv(|v| v * h))))
                    / (2.0 * h);
                report.max_derivative_gap =
                    report.max_derivative_gap.max(rel(analytic - fd, analytic.abs() + 1.0));
            }
            // residual decay in eps
            for (i, &eps) in RESIDUAL_EPS.iter().enumerate() {
                residual_by_eps[i] += ctx.normalized_residual(tf, eps, &f, &z, &n);
            }
        }
        if residual_by_eps.iter().all(|r| *r > 1e-13) {
            report.slopes.push(stats::loglog_slope(&RESIDUAL_EPS, &residual_by_eps));
        }
    }
    report
}

pub fn run(setup: &Setup) -> Result<ExperimentOutput> {
    let ctx = CalculusCtx::new(setup.model.clone(), setup.driver.clone())?;
    let battery = default_battery(ctx.grid());
    let report = cascade_report(&ctx, &battery, 32, setup.master_seed);
    let mut out = ExperimentOutput::default();
    out.table.push_stat(
        NAME,
        f64::NAN,
        "cascade_order2_max_abs",
        report.max_order2,
        0.0,
        Some(report.max_order2 < 1e-6),
    );
    out.table.push_stat(
        NAME,
        f64::NAN,
        "cascade_order1_max_rel",
        report.max_order1,
        0.0,
        Some(report.max_order1 < 1e-6),
    );
    out.table.push_stat(
        NAME,
        f64::NAN,
        "cascade_order0_max_rel",
        report.max_order0,
        0.0,
        Some(report.max_order0 < 1e-6),
    );
    out.table.push_stat(
        NAME,
        f64::NAN,
        "derivative_fd_max_rel",
        report.max_derivative_gap,
        0.0,
        Some(report.max_derivative_gap < 1e-5),
    );
    let slope_ok = report.slopes.iter().all(|s| (s - 1.0).abs() < 0.15);
    let mean_slope = report.slopes.iter().sum::<f64>() / report.slopes.len().max(1) as f64;
    out.table.push_stat(
        NAME,
        f64::NAN,
        "residual_loglog_slope_mean",
        mean_slope,
        0.0,
        Some(slope_ok && !report.slopes.is_empty()),
    );
    let mut csv = Vec::new();
    {
        use std::io::Write;
        writeln!(&mut csv, "state,slope")?;
        for (i, s) in report.slopes.iter().enumerate() {
            writeln!(&mut csv, "{i},{s}")?;
        }
    }
    out.files.push(("residual_slopes.csv".into(), csv));
    Ok(out)
}
