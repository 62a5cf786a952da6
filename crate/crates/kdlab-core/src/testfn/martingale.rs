//! Martingale statistics for the perturbed test functions along stopped
//! kinetic trajectories: the Dynkin-type increment test and the variance
//! identity against the driver's carre du champ.

use ndarray::Array1;

use crate::ensemble;
use crate::grid::SpectralGrid;
use crate::kinetic::KineticSim;

use super::calculus::CalculusCtx;
use super::TestFunction;

/// Bounded, adapted weight evaluated at the early time of an increment test.
#[derive(Debug, Clone)]
pub enum Weight {
    One,
    /// `sin(<rho(s), xi>)`
    SineRho { xi: Array1<f64> },
    /// `cos(<zeta(s), eta>)`
    CosZeta { eta: Array1<f64> },
}

impl Weight {
    pub fn eval(&self, grid: &SpectralGrid, rho: &Array1<f64>, zeta: &Array1<f64>) -> f64 {
        match self {
            Weight::One => 1.0,
            Weight::SineRho { xi } => grid.inner(rho, xi).sin(),
            Weight::CosZeta { eta } => grid.inner(zeta, eta).cos(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Weight::One => "one",
            Weight::SineRho { .. } => "sine-rho",
            Weight::CosZeta { .. } => "cos-zeta",
        }
    }
}

/// One increment test `(phi, s, t, g)`.
#[derive(Debug, Clone)]
pub struct IncrementSpec {
    pub tf_index: usize,
    pub s: f64,
    pub t: f64,
    pub weight: Weight,
    pub label: String,
}

/// Per-trajectory functionals extracted by the recorder.
#[derive(Debug, Clone)]
pub struct PathFunctionals {
    /// stopped martingale value at each requested time, per test function
    pub m_at: Vec<Vec<f64>>,
    /// accumulated `int_0^{t and tau} Gamma(phi^eps) ds` at each requested time
    pub gamma_at: Vec<Vec<f64>>,
    /// weight values at each requested time, per weight
    pub weights_at: Vec<Vec<f64>>,
    pub diverged: bool,
}

/// Observer accumulating the stopped martingale along one trajectory.
pub struct MartingaleRecorder<'a> {
    ctx: &'a CalculusCtx,
    tfs: &'a [TestFunction],
    weights: &'a [Weight],
    eps: f64,
    dt: f64,
    /// requested sample times as step indices
    sample_steps: Vec<usize>,
    phi0: Vec<f64>,
    prev_gen: Vec<f64>,
    prev_gamma: Vec<f64>,
    integral: Vec<f64>,
    gamma_integral: Vec<f64>,
    prev_stopped: bool,
    started: bool,
    out: PathFunctionals,
}

impl<'a> MartingaleRecorder<'a> {
    pub fn new(
        ctx: &'a CalculusCtx,
        tfs: &'a [TestFunction],
        weights: &'a [Weight],
        eps: f64,
        dt: f64,
        sample_times: &[f64],
    ) -> Self {
        let sample_steps = sample_times.iter().map(|t| (t / dt).round() as usize).collect();
        let nf = tfs.len();
        Self {
            ctx,
            tfs,
            weights,
            eps,
            dt,
            sample_steps,
            phi0: vec![0.0; nf],
            prev_gen: vec![0.0; nf],
            prev_gamma: vec![0.0; nf],
            integral: vec![0.0; nf],
            gamma_integral: vec![0.0; nf],
            prev_stopped: false,
            started: false,
            out: PathFunctionals {
                m_at: vec![Vec::new(); nf],
                gamma_at: vec![Vec::new(); nf],
                weights_at: vec![Vec::new(); 0],
                diverged: false,
            },
        }
    }

    pub fn observe(&mut self, sim: &KineticSim<'_>) {
        if sim.is_diverged() {
            self.out.diverged = true;
            return;
        }
        let zeta = sim.zeta_field();
        let evals = self.ctx.battery_phi_eps(self.tfs, self.eps, &sim.f, &zeta, sim.driver_modes(), );
        if !self.started {
            self.started = true;
            self.out.weights_at = vec![Vec::new(); self.weights.len()];
            for (i, (v, g, gam)) in evals.iter().enumerate() {
                self.phi0[i] = *v;
                self.prev_gen[i] = *g;
                self.prev_gamma[i] = *gam;
            }
        } else {
            // trapezoid increments only while the trajectory still evolves
            if !self.prev_stopped {
                for (i, (_, g, gam)) in evals.iter().enumerate() {
                    self.integral[i] += 0.5 * self.dt * (self.prev_gen[i] + g);
                    self.gamma_integral[i] += 0.5 * self.dt * (self.prev_gamma[i] + gam);
                }
            }
            for (i, (_, g, gam)) in evals.iter().enumerate() {
                self.prev_gen[i] = *g;
                self.prev_gamma[i] = *gam;
            }
        }
        if self.sample_steps.contains(&sim.step_index) {
            let rho = sim.rho();
            for (i, (v, _, _)) in evals.iter().enumerate() {
                self.out.m_at[i].push(v - self.phi0[i] - self.integral[i]);
                self.out.gamma_at[i].push(self.gamma_integral[i]);
            }
            for (wi, w) in self.weights.iter().enumerate() {
                self.out.weights_at[wi].push(w.eval(self.ctx.grid(), &rho, &zeta));
            }
        }
        self.prev_stopped = sim.is_stopped();
    }

    pub fn finish(self) -> PathFunctionals {
        self.out
    }
}

/// Result of one increment test over an ensemble.
#[derive(Debug, Clone)]
pub struct IncrementResult {
    pub label: String,
    pub mean: f64,
    pub se: f64,
    pub z: f64,
    pub n_used: usize,
    pub n_rejected: usize,
    pub exact_zero: bool,
}

/// `mean((M(t) - M(s)) g(s)) / se`; trajectories flagged diverged are
/// rejected and counted.
pub fn increment_test(
    spec: &IncrementSpec,
    spec_index: usize,
    sample_times: &[f64],
    paths: &[PathFunctionals],
) -> IncrementResult {
    let si = sample_times.iter().position(|t| (*t - spec.s).abs() < 1e-12).expect("s not sampled");
    let ti = sample_times.iter().position(|t| (*t - spec.t).abs() < 1e-12).expect("t not sampled");
    let mut vals = Vec::with_capacity(paths.len());
    let mut rejected = 0;
    for p in paths {
        if p.diverged {
            rejected += 1;
            continue;
        }
        let m_incr = p.m_at[spec.tf_index][ti] - p.m_at[spec.tf_index][si];
        let g = p.weights_at[spec_index][si];
        vals.push(m_incr * g);
    }
    let (mean, se) = ensemble::mean_se(&vals);
    let scale = vals.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let exact_zero = scale < 1e-14;
    let z = if exact_zero { 0.0 } else { mean / se };
    IncrementResult {
        label: spec.label.clone(),
        mean,
        se,
        z,
        n_used: vals.len(),
        n_rejected: rejected,
        exact_zero,
    }
}

/// Variance-identity ratio `E |M(t)|^2 / ((1/eps^2) E int_0^{t and tau} Gamma ds)`.
#[derive(Debug, Clone)]
pub struct VarianceResult {
    pub label: String,
    pub ratio: f64,
    pub m2_mean: f64,
    pub m2_se: f64,
    pub gamma_mean: f64,
    pub n_used: usize,
}

pub fn variance_identity(
    label: &str,
    tf_index: usize,
    t: f64,
    eps: f64,
    sample_times: &[f64],
    paths: &[PathFunctionals],
) -> VarianceResult {
    let ti = sample_times.iter().position(|x| (*x - t).abs() < 1e-12).expect("t not sampled");
    let mut m2 = Vec::new();
    let mut gam = Vec::new();
    for p in paths {
        if p.diverged {
            continue;
        }
        m2.push(p.m_at[tf_index][ti].powi(2));
        gam.push(p.gamma_at[tf_index][ti] / (eps * eps));
    }
    let (m2_mean, m2_se) = ensemble::mean_se(&m2);
    let (gamma_mean, _) = ensemble::mean_se(&gam);
    VarianceResult {
        label: label.to_string(),
        ratio: m2_mean / gamma_mean,
        m2_mean,
        m2_se,
        gamma_mean,
        n_used: m2.len(),
    }
}
