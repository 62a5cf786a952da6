//! Spectral Galerkin solver for the limiting stochastic diffusion equation
//! in Ito form, coupled to the Q-Wiener process through shared Brownian
//! increments. The stiff heat part uses an exponential integrator; drift and
//! noise are Euler-Maruyama.

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::grid::SpectralGrid;

/// Eigenvalue threshold (relative to the top) below which noise modes are
/// dropped from the synthesis.
const MODE_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct LimitConfig {
    pub dt: f64,
    pub horizon: f64,
    pub snapshot_stride: usize,
}

impl LimitConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.dt <= 0.0 || self.horizon <= 0.0 {
            return Err(Error::Config("limit solver needs positive dt and horizon".into()));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Config("snapshot stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// State of the coupled pair (rho, zeta).
#[derive(Debug, Clone)]
pub struct LimitState {
    pub rho: Array1<f64>,
    pub zeta: Array1<f64>,
    pub t: f64,
}

pub struct LimitSim<'a> {
    grid: &'a SpectralGrid,
    cov: &'a CovarianceModel,
    config: &'a LimitConfig,
    /// heat multipliers e^{-lambda_l dt} with lambda_l = 4 pi^2 <l, K l>
    heat_factors: Vec<f64>,
    active: Vec<usize>,
    pub state: LimitState,
}

impl<'a> LimitSim<'a> {
    pub fn new(
        grid: &'a SpectralGrid,
        cov: &'a CovarianceModel,
        diffusion: f64,
        config: &'a LimitConfig,
        rho0: Array1<f64>,
    ) -> Result<Self> {
        config.validate()?;
        if rho0.len() != grid.nx() || cov.nx() != grid.nx() {
            return Err(Error::Shape("limit solver grid sizes disagree".into()));
        }
        let heat_factors = (0..grid.nx())
            .map(|i| {
                let l = grid.frequency(i) as f64;
                let lambda = 4.0 * std::f64::consts::PI.powi(2) * diffusion * l * l;
                (-lambda * config.dt).exp()
            })
            .collect();
        let active = cov.active_modes(MODE_TOL);
        Ok(Self {
            grid,
            cov,
            config,
            heat_factors,
            active,
            state: LimitState { rho: rho0, zeta: Array1::zeros(grid.nx()), t: 0.0 },
        })
    }

    /// Heat eigenvalue of Fourier mode `l` for diffusion coefficient `k`.
    pub fn heat_rate(diffusion: f64, l: i64) -> f64 {
        4.0 * std::f64::consts::PI.powi(2) * diffusion * (l * l) as f64
    }

    /// One exponential-Euler step; the same Brownian increments drive rho
    /// and zeta.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let dt = self.config.dt;
        let sqrt_dt = dt.sqrt();
        let nx = self.grid.nx();
        let mut g = Array1::zeros(nx);
        // drift (1/2) F rho
        for j in 0..nx {
            g[j] = self.state.rho[j] * (1.0 + 0.5 * dt * self.cov.trace_field()[j]);
        }
        for &i in &self.active {
            let db: f64 = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
            let sq = self.cov.eigenvalues()[i].sqrt();
            let field = self.cov.eigenfield(i);
            for j in 0..nx {
                g[j] += sq * field[j] * self.state.rho[j] * db;
                self.state.zeta[j] += sq * field[j] * db;
            }
        }
        let mut coeffs = self.grid.fft(g.as_slice().unwrap());
        for (c, h) in coeffs.iter_mut().zip(self.heat_factors.iter()) {
            *c *= *h;
        }
        self.state.rho = self.grid.ifft(&coeffs);
        self.state.t += dt;
    }
}

/// Trajectory record mirroring the kinetic solver's diagnostics schema.
#[derive(Debug, Clone)]
pub struct LimitTrajectory {
    pub times: Vec<f64>,
    pub rho_l2_sq: Vec<f64>,
    pub zeta_c1: Vec<f64>,
    pub rho_snapshots: Vec<(f64, Array1<f64>)>,
    pub zeta_snapshots: Vec<(f64, Array1<f64>)>,
}

pub fn simulate_limit_with<R, F>(
    grid: &SpectralGrid,
    cov: &CovarianceModel,
    diffusion: f64,
    config: &LimitConfig,
    rho0: Array1<f64>,
    rng: &mut R,
    mut observer: F,
) -> Result<LimitTrajectory>
where
    R: Rng + ?Sized,
    F: FnMut(&LimitSim<'_>),
{
    let mut sim = LimitSim::new(grid, cov, diffusion, config, rho0)?;
    let steps = config.steps();
    let mut traj = LimitTrajectory {
        times: Vec::with_capacity(steps + 1),
        rho_l2_sq: Vec::with_capacity(steps + 1),
        zeta_c1: Vec::with_capacity(steps + 1),
        rho_snapshots: Vec::new(),
        zeta_snapshots: Vec::new(),
    };
    let record = |sim: &LimitSim<'_>, traj: &mut LimitTrajectory, idx: usize| {
        traj.times.push(sim.state.t);
        traj.rho_l2_sq.push(grid.l2_norm(&sim.state.rho).powi(2));
        traj.zeta_c1.push(grid.c1_norm(&sim.state.zeta));
        if idx % config.snapshot_stride == 0 || idx == steps {
            traj.rho_snapshots.push((sim.state.t, sim.state.rho.clone()));
            traj.zeta_snapshots.push((sim.state.t, sim.state.zeta.clone()));
        }
    };
    record(&sim, &mut traj, 0);
    observer(&sim);
    for i in 1..=steps {
        sim.step(rng);
        record(&sim, &mut traj, i);
        observer(&sim);
    }
    Ok(traj)
}

pub fn simulate_limit<R: Rng + ?Sized>(
    grid: &SpectralGrid,
    cov: &CovarianceModel,
    diffusion: f64,
    config: &LimitConfig,
    rho0: Array1<f64>,
    rng: &mut R,
) -> Result<LimitTrajectory> {
    simulate_limit_with(grid, cov, diffusion, config, rho0, rng, |_| {})
}

/// The Ito correction field `F/2` together with its reconstruction error
/// against `(1/2) sum_i q_i F_i^2`.
pub fn ito_stratonovich_check(cov: &CovarianceModel) -> (Array1<f64>, f64) {
    let drift = cov.trace_field().mapv(|v| 0.5 * v);
    let mut rebuilt = Array1::zeros(cov.nx());
    for (q, f) in cov.eigenvalues().iter().zip((0..cov.eigenvalues().len()).map(|i| cov.eigenfield(i))) {
        for (r, v) in rebuilt.iter_mut().zip(f.iter()) {
            *r += 0.5 * q * v * v;
        }
    }
    let err = drift
        .iter()
        .zip(rebuilt.iter())
        .map(|(a, b): (&f64, &f64)| (a - b).abs())
        .fold(0.0f64, f64::max);
    (drift, err)
}

/// Gronwall growth constant `|F|_inf + sum_i q_i |F_i|_inf^2` for the second
/// moment of the limit solution.
pub fn moment_growth_constant(cov: &CovarianceModel) -> f64 {
    let f_sup = cov.trace_field().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sum: f64 = cov
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let sup = cov.eigenfield(i).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            q * sup * sup
        })
        .sum();
    f_sup + sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble;
    use crate::rng::{stream, StreamKey};
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn heat_only_cov(nx: usize) -> CovarianceModel {
        CovarianceModel::assemble(&Array2::zeros((nx, nx)), 1.0 / nx as f64).unwrap()
    }

    #[test]
    fn pure_heat_decay_is_exact_per_mode() {
        let grid = SpectralGrid::new(32);
        let cov = heat_only_cov(32);
        let config = LimitConfig { dt: 1e-3, horizon: 0.05, snapshot_stride: 1000 };
        let rho0 = grid.points().mapv(|x| (2.0 * std::f64::consts::PI * x).cos());
        let mut rng = stream(StreamKey::new(1, "test", "limit-noise"));
        let traj = simulate_limit(&grid, &cov, 1.0, &config, rho0.clone(), &mut rng).unwrap();
        let (_, rho_t) = traj.rho_snapshots.last().unwrap();
        let decay = (-LimitSim::heat_rate(1.0, 1) * config.horizon).exp();
        for (a, b) in rho_t.iter().zip(rho0.iter()) {
            assert_abs_diff_eq!(*a, b * decay, epsilon = 1e-12);
        }
    }

    #[test]
    fn heat_rate_arithmetic() {
        assert_abs_diff_eq!(
            LimitSim::heat_rate(1.0, 1),
            4.0 * std::f64::consts::PI.powi(2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn ito_drift_consistency() {
        let params =
            crate::driver::OuParams::from_profile(2, 1.0, crate::driver::SigmaProfile::Split, 1.0, 32)
                .unwrap();
        let cov = CovarianceModel::from_driver(&params).unwrap();
        let (drift, err) = ito_stratonovich_check(&cov);
        assert!(err < 1e-8, "drift reconstruction error {err}");
        // single constant eigenfield: drift is q/2
        let grid = SpectralGrid::new(16);
        let ones = Array1::ones(16);
        let rank1 = CovarianceModel::rank_one(0.4, &ones, grid.dx()).unwrap();
        let (d1, e1) = ito_stratonovich_check(&rank1);
        assert!(e1 < 1e-10);
        for v in d1.iter() {
            assert_abs_diff_eq!(*v, 0.2, epsilon = 1e-10);
        }
        assert!(drift.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn constant_noise_matches_lognormal_moment() {
        // single constant eigenfield: rho(t) = heat(t) e^{sqrt(q) B(t)} in law,
        // so E||rho(T)||^2 = e^{2 q T} ||heat(T)||^2
        let grid = SpectralGrid::new(32);
        let q = 0.5;
        let ones = Array1::ones(32);
        let cov = CovarianceModel::rank_one(q, &ones, grid.dx()).unwrap();
        let config = LimitConfig { dt: 5e-4, horizon: 0.25, snapshot_stride: 10000 };
        let rho0 = grid.points().mapv(|x| 1.0 + 0.3 * (2.0 * std::f64::consts::PI * x).cos());
        let heat_t: Array1<f64> = {
            let mut coeffs = grid.fft(rho0.as_slice().unwrap());
            for (i, c) in coeffs.iter_mut().enumerate() {
                let l = grid.frequency(i);
                *c *= (-LimitSim::heat_rate(1.0, l) * config.horizon).exp();
            }
            grid.ifft(&coeffs)
        };
        let n = 4000;
        let norms = ensemble::map(n, |i| {
            let mut rng = stream(StreamKey::new(5, "lognormal", "limit-noise").with_trajectory(i));
            let traj = simulate_limit(&grid, &cov, 1.0, &config, rho0.clone(), &mut rng).unwrap();
            *traj.rho_l2_sq.last().unwrap()
        });
        let (mean, se) = ensemble::mean_se(&norms);
        let expected = (2.0 * q * config.horizon).exp() * grid.l2_norm(&heat_t).powi(2);
        assert!(
            (mean - expected).abs() < 3.0 * se + 0.01 * expected,
            "mean {mean} expected {expected} se {se}"
        );
        // Gronwall constant bounds the growth
        let c = moment_growth_constant(&cov);
        assert_abs_diff_eq!(c, 2.0 * q, epsilon = 1e-10);
        let bound = (c * config.horizon).exp() * grid.l2_norm(&rho0).powi(2);
        assert!(mean <= bound * (1.0 + 1e-6) + 3.0 * se);
    }

    #[test]
    fn zeta_covariance_is_t_times_kernel() {
        let params =
            crate::driver::OuParams::from_profile(1, 1.0, crate::driver::SigmaProfile::Even, 1.0, 16)
                .unwrap();
        let cov = CovarianceModel::from_driver(&params).unwrap();
        let grid = SpectralGrid::new(16);
        let config = LimitConfig { dt: 1e-3, horizon: 0.2, snapshot_stride: 10000 };
        let rho0 = Array1::ones(16);
        let n = 3000;
        let pairs = [(0usize, 0usize), (0, 5), (3, 11)];
        let samples = ensemble::map(n, |i| {
            let mut rng = stream(StreamKey::new(9, "zeta-cov", "limit-noise").with_trajectory(i));
            let traj = simulate_limit(&grid, &cov, 1.0, &config, rho0.clone(), &mut rng).unwrap();
            let (_, z) = traj.zeta_snapshots.last().unwrap();
            pairs.map(|(a, b)| z[a] * z[b])
        });
        for (pi, (a, b)) in pairs.iter().enumerate() {
            let vals: Vec<f64> = samples.iter().map(|s| s[pi]).collect();
            let (mean, se) = ensemble::mean_se(&vals);
            let expected = config.horizon * cov.kernel()[(*a, *b)];
            assert!((mean - expected).abs() < 3.5 * se, "pair {a},{b}: {mean} vs {expected}");
        }
    }

    #[test]
    fn mean_dynamics_follow_deterministic_drifted_heat() {
        // E rho solves the heat equation with the F/2 drift (Ito noise is centered)
        let grid = SpectralGrid::new(16);
        let q = 0.8;
        let ones = Array1::ones(16);
        let cov = CovarianceModel::rank_one(q, &ones, grid.dx()).unwrap();
        let config = LimitConfig { dt: 1e-3, horizon: 0.1, snapshot_stride: 10000 };
        let rho0 = Array1::ones(16);
        let n = 4000;
        let finals = ensemble::map(n, |i| {
            let mut rng = stream(StreamKey::new(12, "mean-dyn", "limit-noise").with_trajectory(i));
            let traj = simulate_limit(&grid, &cov, 1.0, &config, rho0.clone(), &mut rng).unwrap();
            traj.rho_snapshots.last().unwrap().1[0]
        });
        let (mean, se) = ensemble::mean_se(&finals);
        let expected = (0.5 * q * config.horizon).exp();
        assert!((mean - expected).abs() < 3.5 * se, "{mean} vs {expected}");
    }
}
