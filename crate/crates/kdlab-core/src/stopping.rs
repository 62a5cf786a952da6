//! Stopping times for the driver norm and the auxiliary process, plus the
//! trapezoidal update of the auxiliary process itself.
//!
//! Crossings are evaluated on the solver time grid; the driver threshold is
//! a strict `>`, the hitting threshold of the auxiliary process a `>=`,
//! mirroring how the two times are defined.

use ndarray::Array1;

use crate::error::{Error, Result};

/// Sentinel for "never stopped".
pub const NEVER: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy)]
pub struct StoppingConfig {
    /// driver-norm exponent; the threshold is `eps^{-alpha}`
    pub alpha: f64,
    /// C^1 threshold for the auxiliary process
    pub lambda: f64,
}

impl StoppingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if self.lambda <= 0.0 {
            return Err(Error::Config(format!("Lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn driver_threshold(&self, eps: f64) -> f64 {
        eps.powf(-self.alpha)
    }
}

/// Trapezoidal update `zeta += (dt / eps) (m(t) + m(t + dt)) / 2`, performed
/// on mode coefficients. Exact for constant-in-time drivers.
pub fn update_zeta(zeta: &mut Array1<f64>, m_prev: &Array1<f64>, m_next: &Array1<f64>, dt: f64, eps: f64) {
    let w = dt / (2.0 * eps);
    for ((z, a), b) in zeta.iter_mut().zip(m_prev.iter()).zip(m_next.iter()) {
        *z += w * (a + b);
    }
}

/// First grid time with `value > threshold` (strict), else [`NEVER`].
pub fn first_strict_exceedance(times: &[f64], values: &[f64], threshold: f64) -> f64 {
    times
        .iter()
        .zip(values.iter())
        .find(|(_, &v)| v > threshold)
        .map(|(&t, _)| t)
        .unwrap_or(NEVER)
}

/// First grid time with `value >= threshold`, else [`NEVER`].
pub fn first_hitting(times: &[f64], values: &[f64], threshold: f64) -> f64 {
    times
        .iter()
        .zip(values.iter())
        .find(|(_, &v)| v >= threshold)
        .map(|(&t, _)| t)
        .unwrap_or(NEVER)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// One row of the exceedance-probability table.
#[derive(Debug, Clone)]
pub struct ExceedanceRow {
    pub eps: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_traj: usize,
}

/// Empirical `P(tau^eps < horizon)` from per-trajectory stopping times.
pub fn exceedance_row(
    eps: f64,
    cfg: &StoppingConfig,
    taus: &[f64],
    horizon: f64,
) -> ExceedanceRow {
    let hits = taus.iter().filter(|&&t| t < horizon).count();
    let (lo, hi) = wilson_interval(hits, taus.len(), 1.96);
    ExceedanceRow {
        eps,
        lambda: cfg.lambda,
        alpha: cfg.alpha,
        p_hat: hits as f64 / taus.len().max(1) as f64,
        ci_low: lo,
        ci_high: hi,
        n_traj: taus.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn constant_driver_integrates_exactly() {
        let mut zeta = Array1::zeros(3);
        let m = Array1::from_vec(vec![2.0, -1.0, 0.5]);
        let (dt, eps) = (0.01, 0.1);
        let steps = 50;
        for _ in 0..steps {
            update_zeta(&mut zeta, &m, &m, dt, eps);
        }
        let t = dt * steps as f64;
        for (z, c) in zeta.iter().zip(m.iter()) {
            assert_abs_diff_eq!(*z, c * t / eps, epsilon = 1e-12);
        }
    }

    #[test]
    fn trapezoid_is_second_order_on_decaying_driver() {
        // deterministic driver m(t) = e^{-t/eps^2}; zeta(T) = (eps) (1 - e^{-T/eps^2})
        let eps = 0.5f64;
        let theta = 1.0f64;
        let horizon = 0.5f64;
        let exact = eps / theta * (1.0 - (-theta * horizon / (eps * eps)).exp());
        let run = |dt: f64| {
            let mut z = Array1::zeros(1);
            let steps = (horizon / dt).round() as usize;
            for i in 0..steps {
                let t0 = i as f64 * dt;
                let t1 = t0 + dt;
                let m0 = Array1::from_vec(vec![(-theta * t0 / (eps * eps)).exp()]);
                let m1 = Array1::from_vec(vec![(-theta * t1 / (eps * eps)).exp()]);
                update_zeta(&mut z, &m0, &m1, dt, eps);
            }
            (z[0] - exact).abs()
        };
        let e1 = run(0.01);
        let e2 = run(0.005);
        let slope = (e1 / e2).log2();
        assert!(slope > 1.8 && slope < 2.2, "richardson slope {slope}");
    }

    #[test]
    fn exceedance_detectors() {
        let times = [0.0, 0.1, 0.2, 0.3];
        let vals = [0.1, 0.5, 0.5, 0.9];
        assert_eq!(first_strict_exceedance(&times, &vals, 1.0), NEVER);
        assert_eq!(first_strict_exceedance(&times, &vals, 0.45), 0.1);
        // >= triggers on the plateau, > does not
        assert_eq!(first_hitting(&times, &vals, 0.5), 0.1);
        assert_eq!(first_strict_exceedance(&times, &vals, 0.5), 0.3);
    }

    #[test]
    fn initial_exceedance_stops_at_zero() {
        let times = [0.0, 0.1];
        let vals = [3.0, 0.0];
        assert_eq!(first_strict_exceedance(&times, &vals, 2.0), 0.0);
    }

    #[test]
    fn wilson_contains_p_hat() {
        let (lo, hi) = wilson_interval(3, 100, 1.96);
        assert!(lo < 0.03 && 0.03 < hi);
        let (lo, hi) = wilson_interval(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0);
    }

    proptest! {
        #[test]
        fn hitting_time_monotone_in_lambda(vals in proptest::collection::vec(0.0f64..10.0, 4..64)) {
            let times: Vec<f64> = (0..vals.len()).map(|i| i as f64 * 0.1).collect();
            let t1 = first_hitting(&times, &vals, 2.0);
            let t2 = first_hitting(&times, &vals, 5.0);
            prop_assert!(t2 >= t1);
        }

        #[test]
        fn lowering_path_never_decreases_hitting_time(
            vals in proptest::collection::vec(0.0f64..10.0, 4..64),
            cuts in proptest::collection::vec(0.0f64..1.0, 4..64),
        ) {
            let n = vals.len().min(cuts.len());
            let times: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
            let lowered: Vec<f64> = vals.iter().zip(cuts.iter()).take(n).map(|(v, c)| v * c).collect();
            let t_orig = first_hitting(&times, &vals[..n], 4.0);
            let t_low = first_hitting(&times, &lowered, 4.0);
            prop_assert!(t_low >= t_orig);
        }
    }
}
