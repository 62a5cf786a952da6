//! Covariance machinery experiment: Monte Carlo kernel versus the closed
//! form, spectral assembly checks, Mercer reconstruction, trace identity and
//! the C^1 summability report.

use crate::config::Setup;
use crate::covariance::{estimate_kernel_mc, CovarianceModel};
use crate::error::Result;
use crate::report::{write_field_csv, write_matrix_csv};

use super::ExperimentOutput;

pub const NAME: &str = "estimate-kernel";

pub fn run(setup: &Setup) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::default();
    let driver = &setup.driver;
    let theta = driver.theta();
    let t_star = 10.0 / theta;
    let samples = setup.config.usize_or("kernel.samples", 2000)?;
    let dt = setup.config.f64_or("kernel.dt", 0.02)? / theta;
    let estimate = estimate_kernel_mc(driver, t_star, dt, samples, setup.master_seed)?;
    let analytic = driver.analytic_kernel();

    let max_dev = estimate.max_deviation_in_se(&analytic);
    out.table.push_stat(NAME, f64::NAN, "mc_max_deviation_se", max_dev, 0.0, Some(max_dev < 3.0));

    // forward/reversed agreement (both resolvent terms of the kernel
    // identity estimate the same half of the kernel)
    let mut max_asym = 0.0f64;
    for i in 0..estimate.asym_mean.nrows() {
        for j in 0..estimate.asym_mean.ncols() {
            let se = estimate.asym_se[(i, j)];
            if se > 0.0 {
                max_asym = max_asym.max(estimate.asym_mean[(i, j)].abs() / se);
            }
        }
    }
    out.table.push_stat(NAME, f64::NAN, "two_term_asymmetry_se", max_asym, 0.0, Some(max_asym < 4.5));

    let model = CovarianceModel::assemble(&analytic, setup.grid.dx())?;
    let mercer = model.mercer_error();
    out.table.push_stat(NAME, f64::NAN, "mercer_max_abs_error", mercer, 0.0, Some(mercer < 1e-8));
    let trace_gap = (model.trace() - model.trace_from_field()).abs();
    out.table.push_stat(NAME, f64::NAN, "trace_identity_gap", trace_gap, 0.0, Some(trace_gap < 1e-10));
    let min_eig = model.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    out.table.push_stat(NAME, f64::NAN, "min_eigenvalue", min_eig, 0.0, Some(min_eig >= -1e-10));

    let sums = model.c1_summability(&setup.grid);
    let total = *sums.last().unwrap_or(&0.0);
    let nm = driver.n_modes();
    let saturated = if total == 0.0 {
        true
    } else {
        (total - sums[nm.min(sums.len()) - 1]).abs() < 1e-8 * total
    };
    out.table.push_stat(
        NAME,
        f64::NAN,
        "c1_sum_saturation_terms",
        nm as f64,
        0.0,
        Some(saturated),
    );
    out.table.push_stat(NAME, f64::NAN, "c1_sum_total", total, 0.0, None);
    for w in &estimate.warnings {
        out.table.push_stat(NAME, f64::NAN, &format!("warning: {w}"), f64::NAN, 0.0, None);
    }

    let coords = setup.grid.points();
    let mut kernel_csv = Vec::new();
    write_matrix_csv(&mut kernel_csv, &coords, &estimate.mean)?;
    out.files.push(("kernel_mc.csv".into(), kernel_csv));
    let mut se_csv = Vec::new();
    write_matrix_csv(&mut se_csv, &coords, &estimate.se)?;
    out.files.push(("kernel_mc_se.csv".into(), se_csv));
    let mut analytic_csv = Vec::new();
    write_matrix_csv(&mut analytic_csv, &coords, &analytic)?;
    out.files.push(("kernel_analytic.csv".into(), analytic_csv));
    let mut eig_csv = Vec::new();
    {
        use std::io::Write;
        writeln!(&mut eig_csv, "index,eigenvalue,c1_partial_sum")?;
        for (i, q) in model.eigenvalues().iter().enumerate() {
            writeln!(&mut eig_csv, "{i},{q},{}", sums[i])?;
        }
    }
    out.files.push(("eigenvalues.csv".into(), eig_csv));
    let mut f_csv = Vec::new();
    write_field_csv(&mut f_csv, "F", &coords, model.trace_field())?;
    out.files.push(("trace_field.csv".into(), f_csv));
    Ok(out)
}
