//! Pathwise solver for the scaled kinetic equation by operator splitting on
//! the torus. Each substep is the exact flow of its own generator: spectral
//! shifts for transport, the explicit relaxation exponential, and pointwise
//! multiplication by the exponential of the frozen driving field.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::driver::{OuParams, OuState, RescaledOu};
use crate::error::{Error, Result};
use crate::grid::SpectralGrid;
use crate::stopping::{self, StoppingConfig, NEVER};
use crate::velocity::VelocityModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Lie,
    Strang,
}

impl Scheme {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "lie" => Ok(Self::Lie),
            "strang" => Ok(Self::Strang),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub eps: f64,
    /// time step is `c_dt * eps^2`
    pub c_dt: f64,
    pub horizon: f64,
    pub stopping: StoppingConfig,
    pub scheme: Scheme,
    /// steps between recorded snapshots of rho and zeta
    pub snapshot_stride: usize,
    /// when false the trajectory runs unstopped (stopping times are still
    /// recorded as first crossings)
    pub stop_enabled: bool,
}

impl SolverConfig {
    pub fn dt(&self) -> f64 {
        self.c_dt * self.eps * self.eps
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt()).round().max(1.0) as usize
    }

    /// Validates hard invariants; returns soft warnings (the epsilon bound
    /// tied to the energy estimate is advisory since the default experiment
    /// grids intentionally exceed it at the largest epsilon).
    pub fn validate(&self, model: &VelocityModel) -> Result<Vec<String>> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if !(self.c_dt > 0.0 && self.c_dt <= 0.5) {
            return Err(Error::Config(format!(
                "c_dt must lie in (0, 0.5] so the relaxation scale is resolved, got {}",
                self.c_dt
            )));
        }
        if self.horizon <= 0.0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Config("snapshot stride must be at least 1".into()));
        }
        self.stopping.validate()?;
        let mut warnings = Vec::new();
        let eps_max = 1.0 / (4.0 * model.a_sup_norm() * self.stopping.lambda);
        if self.eps > eps_max {
            warnings.push(format!(
                "eps = {} exceeds (4 |a|_inf Lambda)^-1 = {eps_max:.4}; the energy bound constant is not covered by the estimate at this eps",
                self.eps
            ));
        }
        Ok(warnings)
    }
}

/// Phase-space state `f` (velocity-major) at one time.
#[derive(Debug, Clone)]
pub struct KineticState {
    pub f: Array2<f64>,
    pub t: f64,
}

/// Diagnostics recorded along a trajectory, frozen after the combined
/// stopping time.
#[derive(Debug, Clone)]
pub struct StoppedTrajectory {
    pub times: Vec<f64>,
    pub f_norm: Vec<f64>,
    pub m_e_norm: Vec<f64>,
    pub zeta_c1: Vec<f64>,
    /// cumulative `(1/eps^2) int ||Lf||^2 ds` (trapezoid)
    pub relaxation_energy: Vec<f64>,
    pub rho_l2_sq: Vec<f64>,
    pub rho_snapshots: Vec<(f64, Array1<f64>)>,
    pub zeta_snapshots: Vec<(f64, Array1<f64>)>,
    pub tau_driver: f64,
    pub tau_hitting: f64,
    pub tau: f64,
    pub diverged: bool,
    pub initial_f_norm: f64,
}

impl StoppedTrajectory {
    pub fn stopped_before(&self, t: f64) -> bool {
        self.tau < t
    }
}

/// One kinetic trajectory with its driver view and auxiliary process.
pub struct KineticSim<'a> {
    grid: &'a SpectralGrid,
    model: &'a VelocityModel,
    driver_params: &'a OuParams,
    config: &'a SolverConfig,
    driver: RescaledOu,
    /// current driver field on the grid (kept in sync with `driver`)
    m_field: Array1<f64>,
    pub f: Array2<f64>,
    pub zeta_modes: Array1<f64>,
    pub t: f64,
    pub step_index: usize,
    stopped: bool,
    diverged: bool,
    tau_driver: f64,
    tau_hitting: f64,
    velocities: Vec<f64>,
}

impl<'a> KineticSim<'a> {
    pub fn new(
        grid: &'a SpectralGrid,
        model: &'a VelocityModel,
        driver_params: &'a OuParams,
        config: &'a SolverConfig,
        f0: Array2<f64>,
        driver_state: OuState,
    ) -> Result<Self> {
        if model.dim() != 1 {
            return Err(Error::Config("kinetic solver runs one spatial dimension".into()));
        }
        if f0.nrows() != model.nodes() || f0.ncols() != grid.nx() {
            return Err(Error::Shape(format!(
                "initial data has shape {:?}, expected ({}, {})",
                f0.dim(),
                model.nodes(),
                grid.nx()
            )));
        }
        if driver_params.grid().nx() != grid.nx() {
            return Err(Error::Shape("driver and solver grids disagree".into()));
        }
        if f0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("initial data must be finite".into()));
        }
        let driver = RescaledOu::new(driver_state, config.eps);
        let m_field = driver_params.evaluate(&driver.state);
        let velocities = model.velocities_1d()?;
        let mut sim = Self {
            grid,
            model,
            driver_params,
            config,
            driver,
            m_field,
            f: f0,
            zeta_modes: Array1::zeros(driver_params.n_modes()),
            t: 0.0,
            step_index: 0,
            stopped: false,
            diverged: false,
            tau_driver: NEVER,
            tau_hitting: NEVER,
            velocities,
        };
        // the driver stop may already trigger at t = 0
        sim.check_stops();
        Ok(sim)
    }

    pub fn driver_modes(&self) -> &Array1<f64> {
        &self.driver.state.modes
    }

    pub fn m_field(&self) -> &Array1<f64> {
        &self.m_field
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged
    }

    pub fn tau(&self) -> f64 {
        self.tau_driver.min(self.tau_hitting)
    }

    pub fn tau_driver(&self) -> f64 {
        self.tau_driver
    }

    pub fn tau_hitting(&self) -> f64 {
        self.tau_hitting
    }

    pub fn rho(&self) -> Array1<f64> {
        self.model.density(&self.f).expect("shape fixed at construction")
    }

    pub fn zeta_field(&self) -> Array1<f64> {
        self.driver_params.synthesize(&self.zeta_modes)
    }

    pub fn driver_e_norm(&self) -> f64 {
        self.driver_params.e_norm(&self.driver.state)
    }

    pub fn zeta_c1_norm(&self) -> f64 {
        self.driver_params.c1_norm_of_modes(&self.zeta_modes)
    }

    fn check_stops(&mut self) {
        if self.stopped || !self.config.stop_enabled {
            // unstopped runs still record the first crossings
            if self.tau_driver == NEVER
                && self.driver_e_norm() > self.config.stopping.driver_threshold(self.config.eps)
            {
                self.tau_driver = self.t;
            }
            if self.tau_hitting == NEVER && self.zeta_c1_norm() >= self.config.stopping.lambda {
                self.tau_hitting = self.t;
            }
            if self.config.stop_enabled && self.tau() <= self.t {
                self.stopped = true;
            }
            return;
        }
        if self.tau_driver == NEVER
            && self.driver_e_norm() > self.config.stopping.driver_threshold(self.config.eps)
        {
            self.tau_driver = self.t;
        }
        if self.tau_hitting == NEVER && self.zeta_c1_norm() >= self.config.stopping.lambda {
            self.tau_hitting = self.t;
        }
        if self.tau() <= self.t {
            self.stopped = true;
        }
    }

    /// Advances one time step; frozen trajectories only advance the clock.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let dt = self.config.dt();
        if self.stopped || self.diverged {
            self.t += dt;
            self.step_index += 1;
            return;
        }
        let m_prev_modes = self.driver.state.modes.clone();
        // exact driver transitions to the substep midpoint and endpoint
        self.driver.step(self.driver_params, 0.5 * dt, rng);
        let m_mid = self.driver_params.evaluate(&self.driver.state);
        self.driver.step(self.driver_params, 0.5 * dt, rng);
        let m_next_modes = self.driver.state.modes.clone();
        stopping::update_zeta(&mut self.zeta_modes, &m_prev_modes, &m_next_modes, dt, self.config.eps);
        match self.config.scheme {
            Scheme::Lie => {
                self.transport_substep(dt);
                self.relaxation_substep(dt);
                self.noise_substep(&m_mid, dt);
            }
            Scheme::Strang => {
                self.transport_substep(0.5 * dt);
                self.relaxation_substep(0.5 * dt);
                self.noise_substep(&m_mid, dt);
                self.relaxation_substep(0.5 * dt);
                self.transport_substep(0.5 * dt);
            }
        }
        self.m_field = self.driver_params.evaluate(&self.driver.state);
        self.t += dt;
        self.step_index += 1;
        if self.f.iter().any(|v| !v.is_finite()) {
            self.diverged = true;
        }
        self.check_stops();
    }

    /// Exact free transport over `h`: each velocity row is shifted by
    /// `(h/eps) a_k` via Fourier phases.
    pub fn transport_substep(&mut self, h: f64) {
        let eps = self.config.eps;
        for (k, mut row) in self.f.rows_mut().into_iter().enumerate() {
            let displacement = h / eps * self.velocities[k];
            if displacement == 0.0 {
                continue;
            }
            let shifted = self.grid.shift(&row.to_owned(), displacement);
            row.assign(&shifted);
        }
    }

    /// Exact relaxation over `h`: `f <- rho M + e^{-h/eps^2} (f - rho M)`.
    pub fn relaxation_substep(&mut self, h: f64) {
        let decay = (-h / (self.config.eps * self.config.eps)).exp();
        let rho = self.rho();
        for (k, mut row) in self.f.rows_mut().into_iter().enumerate() {
            let m = self.model.equilibrium()[k];
            for (j, v) in row.iter_mut().enumerate() {
                let eq = rho[j] * m;
                *v = eq + decay * (*v - eq);
            }
        }
    }

    /// Exact multiplicative noise over `h` with the field frozen at the
    /// substep midpoint: `f <- e^{(h/eps) m(x)} f`.
    pub fn noise_substep(&mut self, m_mid: &Array1<f64>, h: f64) {
        let scale = h / self.config.eps;
        let factors = m_mid.mapv(|m| (scale * m).exp());
        for mut row in self.f.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v *= factors[j];
            }
        }
        if self.f.iter().any(|v| !v.is_finite()) {
            self.diverged = true;
        }
    }
}

/// Runs a full trajectory, recording the standard diagnostics and invoking
/// `observer` after initialization and after every step.
pub fn simulate_trajectory_with<R, F>(
    grid: &SpectralGrid,
    model: &VelocityModel,
    driver_params: &OuParams,
    config: &SolverConfig,
    f0: Array2<f64>,
    driver_state: OuState,
    rng: &mut R,
    mut observer: F,
) -> Result<StoppedTrajectory>
where
    R: Rng + ?Sized,
    F: FnMut(&KineticSim<'_>),
{
    let mut sim = KineticSim::new(grid, model, driver_params, config, f0, driver_state)?;
    let steps = config.steps();
    let dx = grid.dx();
    let n_rec = steps + 1;
    let mut traj = StoppedTrajectory {
        times: Vec::with_capacity(n_rec),
        f_norm: Vec::with_capacity(n_rec),
        m_e_norm: Vec::with_capacity(n_rec),
        zeta_c1: Vec::with_capacity(n_rec),
        relaxation_energy: Vec::with_capacity(n_rec),
        rho_l2_sq: Vec::with_capacity(n_rec),
        rho_snapshots: Vec::new(),
        zeta_snapshots: Vec::new(),
        tau_driver: NEVER,
        tau_hitting: NEVER,
        tau: NEVER,
        diverged: false,
        initial_f_norm: model.fspace_norm(&sim.f, dx),
    };
    let mut lf_sq_prev = 0.0;
    let mut relax_acc = 0.0;
    let record = |sim: &KineticSim<'_>, traj: &mut StoppedTrajectory, lf_sq_prev: &mut f64, relax_acc: &mut f64, first: bool| {
        let lf = model.bgk_apply(&sim.f).expect("shape fixed");
        let lf_sq = model.fspace_norm_sq(&lf, dx);
        if !first && !sim.is_stopped() {
            *relax_acc += 0.5 * (lf_sq + *lf_sq_prev) * config.dt() / (config.eps * config.eps);
        }
        *lf_sq_prev = lf_sq;
        traj.times.push(sim.t);
        traj.f_norm.push(model.fspace_norm(&sim.f, dx));
        traj.m_e_norm.push(sim.driver_e_norm());
        traj.zeta_c1.push(sim.zeta_c1_norm());
        traj.relaxation_energy.push(*relax_acc);
        let rho = sim.rho();
        traj.rho_l2_sq.push(rho.iter().map(|v| v * v).sum::<f64>() * dx);
        if sim.step_index % config.snapshot_stride == 0 || sim.step_index == steps {
            traj.rho_snapshots.push((sim.t, rho));
            traj.zeta_snapshots.push((sim.t, sim.zeta_field()));
        }
    };
    record(&sim, &mut traj, &mut lf_sq_prev, &mut relax_acc, true);
    observer(&sim);
    for _ in 0..steps {
        sim.step(rng);
        record(&sim, &mut traj, &mut lf_sq_prev, &mut relax_acc, false);
        observer(&sim);
    }
    traj.tau_driver = sim.tau_driver();
    traj.tau_hitting = sim.tau_hitting();
    traj.tau = sim.tau();
    traj.diverged = sim.is_diverged();
    Ok(traj)
}

pub fn simulate_trajectory<R: Rng + ?Sized>(
    grid: &SpectralGrid,
    model: &VelocityModel,
    driver_params: &OuParams,
    config: &SolverConfig,
    f0: Array2<f64>,
    driver_state: OuState,
    rng: &mut R,
) -> Result<StoppedTrajectory> {
    simulate_trajectory_with(grid, model, driver_params, config, f0, driver_state, rng, |_| {})
}

/// Equilibrium initial data `f0 = rho0 M`.
pub fn equilibrium_data(model: &VelocityModel, rho0: &Array1<f64>) -> Array2<f64> {
    let mut f = Array2::zeros((model.nodes(), rho0.len()));
    for (k, mut row) in f.rows_mut().into_iter().enumerate() {
        let m = model.equilibrium()[k];
        for (j, v) in row.iter_mut().enumerate() {
            *v = rho0[j] * m;
        }
    }
    f
}

/// Pathwise energy-bound report for a recorded trajectory.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub bound: f64,
    pub worst_ratio: f64,
    pub worst_time: f64,
    pub pass: bool,
}

/// Checks `||f(t)||^2 + (1/eps^2) int_0^t ||Lf||^2 <= exp(2 Lambda +
/// 4 |a|^2_{L2(M)} Lambda^2 T) ||f0||^2` along the trajectory up to the
/// hitting time of the auxiliary process.
pub fn energy_report(
    traj: &StoppedTrajectory,
    model: &VelocityModel,
    lambda: f64,
    horizon: f64,
) -> EnergyReport {
    let bound = (2.0 * lambda + 4.0 * model.a_l2m_norm_sq() * lambda * lambda * horizon).exp();
    let f0_sq = traj.initial_f_norm.powi(2);
    let mut worst_ratio = 0.0;
    let mut worst_time = 0.0;
    for i in 0..traj.times.len() {
        if traj.times[i] > traj.tau_hitting {
            break;
        }
        let lhs = traj.f_norm[i].powi(2) + traj.relaxation_energy[i];
        let ratio = lhs / f0_sq;
        if ratio > worst_ratio {
            worst_ratio = ratio;
            worst_time = traj.times[i];
        }
    }
    EnergyReport { bound, worst_ratio, worst_time, pass: worst_ratio <= bound }
}
