use kdlab_core::config::{Config, Setup};
use kdlab_core::experiments::stopping_stats;

#[test]
#[ignore]
fn tune_sigma_scale() {
    for scale in [1e-5, 2e-5, 2.5e-5, 3e-5, 4e-5, 6e-5, 1e-4] {
        let mut cfg = Config::default_acceptance();
        cfg.set("driver.sigma_scale", format!("{scale:e}"));
        let setup = Setup::from_config(&cfg).unwrap();
        let rows = stopping_stats::exceedance_table(&setup, 1024).unwrap();
        let ps: Vec<f64> = rows.iter().map(|r| r.p_hat).collect();
        println!("scale {scale:e}: p_hat = {ps:?}");
    }
}
