//! Spectral Ornstein-Uhlenbeck driving field on the torus.
//!
//! The field is expanded in the real Fourier basis `{1, sqrt(2) cos(2 pi j x),
//! sqrt(2) sin(2 pi j x)}` with independent OU coefficients sharing the
//! damping `theta`. Every transition law, mixing rate and covariance used by
//! the rest of the crate is then available in closed form.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpectralGrid;

/// Which real Fourier mode a coefficient index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeKind {
    Constant,
    Cos(usize),
    Sin(usize),
}

/// Amplitude profile across modes; `scale` multiplies every sigma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SigmaProfile {
    /// cos amplitudes `1/(1+j)^2`, sin amplitudes half of that, so that the
    /// kernel diagonal `F(x)` is genuinely non-constant.
    Split,
    /// identical cos and sin amplitudes `1/(1+j)^2` (constant `F`).
    Even,
    /// only the constant mode is driven.
    Single,
    /// noiseless driver.
    Zero,
}

impl SigmaProfile {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "split" => Ok(Self::Split),
            "even" => Ok(Self::Even),
            "single" => Ok(Self::Single),
            "zero" => Ok(Self::Zero),
            other => Err(Error::Config(format!("unknown sigma profile '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Split => "split",
            Self::Even => "even",
            Self::Single => "single",
            Self::Zero => "zero",
        }
    }
}

/// Parameters of the spectral OU field; immutable and shared across workers.
#[derive(Debug, Clone)]
pub struct OuParams {
    mode_cutoff: usize,
    theta: f64,
    sigmas: Vec<f64>,
    grid: SpectralGrid,
    /// basis functions sampled on the grid, one row per mode
    basis: Array2<f64>,
}

impl OuParams {
    /// Builds parameters with explicit per-mode amplitudes ordered
    /// `[const, cos 1..J, sin 1..J]`.
    pub fn new(mode_cutoff: usize, theta: f64, sigmas: Vec<f64>, nx: usize) -> Result<Self> {
        if theta <= 0.0 {
            return Err(Error::Config(format!("damping theta must be positive, got {theta}")));
        }
        let nm = 2 * mode_cutoff + 1;
        if sigmas.len() != nm {
            return Err(Error::Shape(format!(
                "expected {nm} sigmas for cutoff {mode_cutoff}, got {}",
                sigmas.len()
            )));
        }
        if sigmas.iter().any(|s| *s < 0.0 || !s.is_finite()) {
            return Err(Error::Config("sigmas must be finite and nonnegative".into()));
        }
        if nx < 8 * mode_cutoff.max(1) {
            return Err(Error::Config(format!(
                "grid too coarse for cutoff {mode_cutoff}: need nx >= {}, got {nx}",
                8 * mode_cutoff.max(1)
            )));
        }
        let grid = SpectralGrid::new(nx);
        let points = grid.points();
        let mut basis = Array2::zeros((nm, nx));
        for (i, mut row) in basis.rows_mut().into_iter().enumerate() {
            let kind = mode_kind(i, mode_cutoff);
            for (j, &x) in points.iter().enumerate() {
                row[j] = basis_value(kind, x);
            }
        }
        Ok(Self { mode_cutoff, theta, sigmas, grid, basis })
    }

    pub fn from_profile(
        mode_cutoff: usize,
        theta: f64,
        profile: SigmaProfile,
        scale: f64,
        nx: usize,
    ) -> Result<Self> {
        let nm = 2 * mode_cutoff + 1;
        let mut sigmas = vec![0.0; nm];
        match profile {
            SigmaProfile::Zero => {}
            SigmaProfile::Single => sigmas[0] = scale,
            SigmaProfile::Split | SigmaProfile::Even => {
                sigmas[0] = scale;
                let sin_factor = if profile == SigmaProfile::Split { 0.5 } else { 1.0 };
                for j in 1..=mode_cutoff {
                    let decay = 1.0 / ((1 + j) as f64).powi(2);
                    sigmas[j] = scale * decay;
                    sigmas[mode_cutoff + j] = scale * decay * sin_factor;
                }
            }
        }
        Self::new(mode_cutoff, theta, sigmas, nx)
    }

    pub fn mode_cutoff(&self) -> usize {
        self.mode_cutoff
    }

    pub fn n_modes(&self) -> usize {
        self.sigmas.len()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn grid(&self) -> &SpectralGrid {
        self.grid_ref()
    }

    fn grid_ref(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn mode_kind(&self, i: usize) -> ModeKind {
        mode_kind(i, self.mode_cutoff)
    }

    /// Basis function of mode `i` sampled on the grid.
    pub fn basis_row(&self, i: usize) -> Array1<f64> {
        self.basis.row(i).to_owned()
    }

    /// Stationary variance `sigma_j^2 / (2 theta)` of each coefficient.
    pub fn stationary_variances(&self) -> Vec<f64> {
        self.sigmas.iter().map(|s| s * s / (2.0 * self.theta)).collect()
    }

    pub fn is_trivial(&self) -> bool {
        self.sigmas.iter().all(|s| *s == 0.0)
    }

    /// Draws from the stationary distribution `nu`.
    pub fn stationary_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> OuState {
        let modes = self
            .stationary_variances()
            .iter()
            .map(|v| v.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        OuState { modes: Array1::from_vec(modes), time: 0.0 }
    }

    /// Exact OU transition over `dt` (base-process time).
    pub fn step<R: Rng + ?Sized>(&self, state: &mut OuState, dt: f64, rng: &mut R) {
        assert!(dt > 0.0, "step requires dt > 0");
        let decay = (-self.theta * dt).exp();
        let var_factor = (1.0 - (-2.0 * self.theta * dt).exp()) / (2.0 * self.theta);
        for (m, s) in state.modes.iter_mut().zip(self.sigmas.iter()) {
            let noise: f64 = rng.sample(StandardNormal);
            *m = decay * *m + s * var_factor.sqrt() * noise;
        }
        state.time += dt;
    }

    /// Synthesizes the field on the grid.
    pub fn evaluate(&self, state: &OuState) -> Array1<f64> {
        self.synthesize(&state.modes)
    }

    pub fn synthesize(&self, modes: &Array1<f64>) -> Array1<f64> {
        modes.dot(&self.basis)
    }

    /// Coefficients of the p-th spatial derivative. Differentiation rotates
    /// each (cos, sin) pair and multiplies by `2 pi j`; the constant mode dies.
    pub fn derive_modes(&self, modes: &Array1<f64>) -> Array1<f64> {
        let j_max = self.mode_cutoff;
        let mut out = Array1::zeros(modes.len());
        for j in 1..=j_max {
            let w = 2.0 * std::f64::consts::PI * j as f64;
            let c = modes[j];
            let s = modes[j_max + j];
            out[j] = w * s;
            out[j_max + j] = -w * c;
        }
        out
    }

    /// `E`-norm: sum over derivative orders `0..=2 floor(d/2) + 4` of grid
    /// sup norms (d = 1 here, so orders 0..=4).
    pub fn e_norm_of_modes(&self, modes: &Array1<f64>) -> f64 {
        let mut total = 0.0;
        let mut current = modes.clone();
        for p in 0..=E_NORM_ORDER {
            total += self.grid.sup_norm(&self.synthesize(&current));
            if p < E_NORM_ORDER {
                current = self.derive_modes(&current);
            }
        }
        total
    }

    pub fn e_norm(&self, state: &OuState) -> f64 {
        self.e_norm_of_modes(&state.modes)
    }

    /// `sup |u| + sup |u'|` of a mode vector.
    pub fn c1_norm_of_modes(&self, modes: &Array1<f64>) -> f64 {
        self.grid.sup_norm(&self.synthesize(modes))
            + self.grid.sup_norm(&self.synthesize(&self.derive_modes(modes)))
    }

    /// Closed-form covariance kernel `k(x,y) = sum_j (sigma_j^2/theta^2) e_j(x) e_j(y)`.
    pub fn analytic_kernel(&self) -> Array2<f64> {
        let nx = self.grid.nx();
        let mut k = Array2::zeros((nx, nx));
        for (i, s) in self.sigmas.iter().enumerate() {
            if *s == 0.0 {
                continue;
            }
            let q = s * s / (self.theta * self.theta);
            let row = self.basis.row(i);
            for a in 0..nx {
                for b in 0..nx {
                    k[(a, b)] += q * row[a] * row[b];
                }
            }
        }
        k
    }

    /// Diagonal `F(x) = k(x,x)` of the analytic kernel.
    pub fn analytic_trace_field(&self) -> Array1<f64> {
        let nx = self.grid.nx();
        let mut f = Array1::zeros(nx);
        for (i, s) in self.sigmas.iter().enumerate() {
            let q = s * s / (self.theta * self.theta);
            for (fx, b) in f.iter_mut().zip(self.basis.row(i).iter()) {
                *fx += q * b * b;
            }
        }
        f
    }

    /// Eigenvalues `sigma_j^2/theta^2` of the analytic covariance operator.
    pub fn analytic_eigenvalues(&self) -> Vec<f64> {
        self.sigmas.iter().map(|s| s * s / (self.theta * self.theta)).collect()
    }

    /// Mixing rate of the synchronous coupling. All modes share the damping,
    /// so the coupled difference decays as `e^{-theta t}` exactly.
    pub fn mixing_rate(&self) -> MixingRate {
        MixingRate { prefactor: 1.0, rate: self.theta }
    }

    /// Audits the moment/mixing hypotheses for a finite effective moment
    /// order and checks the admissible alpha window.
    pub fn audit_hypotheses(&self, alpha: f64, gamma_effective: f64) -> Result<HypothesisAudit> {
        if gamma_effective <= 4.0 {
            return Err(Error::Config("gamma_effective must exceed 4".into()));
        }
        // The Gaussian OU field has all moments; the conditional second moment
        // grows linearly in the starting point, so b = 1.
        let b = 1.0;
        let window = (2.0 / gamma_effective, 1.0 / (b + 2.0));
        let audit = HypothesisAudit {
            gamma_effective,
            growth_exponent: b,
            alpha,
            window,
            accepted: alpha > window.0 && alpha < window.1,
        };
        if !audit.accepted {
            return Err(Error::Config(format!(
                "alpha = {alpha} outside admissible window ({:.6}, {:.6})",
                window.0, window.1
            )));
        }
        Ok(audit)
    }
}

const E_NORM_ORDER: usize = 4;

fn mode_kind(i: usize, cutoff: usize) -> ModeKind {
    if i == 0 {
        ModeKind::Constant
    } else if i <= cutoff {
        ModeKind::Cos(i)
    } else {
        ModeKind::Sin(i - cutoff)
    }
}

fn basis_value(kind: ModeKind, x: f64) -> f64 {
    let sqrt2 = std::f64::consts::SQRT_2;
    match kind {
        ModeKind::Constant => 1.0,
        ModeKind::Cos(j) => sqrt2 * (2.0 * std::f64::consts::PI * j as f64 * x).cos(),
        ModeKind::Sin(j) => sqrt2 * (2.0 * std::f64::consts::PI * j as f64 * x).sin(),
    }
}

/// Coefficients of the driving field at one instant of base-process time.
#[derive(Debug, Clone)]
pub struct OuState {
    pub modes: Array1<f64>,
    pub time: f64,
}

impl OuState {
    pub fn zero(n_modes: usize) -> Self {
        Self { modes: Array1::zeros(n_modes), time: 0.0 }
    }
}

/// Exponential mixing envelope `gamma(t) = prefactor * e^{-rate t}`.
#[derive(Debug, Clone, Copy)]
pub struct MixingRate {
    pub prefactor: f64,
    pub rate: f64,
}

impl MixingRate {
    pub fn gamma(&self, t: f64) -> f64 {
        self.prefactor * (-self.rate * t).exp()
    }

    pub fn integral(&self) -> f64 {
        self.prefactor / self.rate
    }
}

/// Outcome of the hypothesis audit for the configured driver.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HypothesisAudit {
    pub gamma_effective: f64,
    pub growth_exponent: f64,
    pub alpha: f64,
    pub window: (f64, f64),
    pub accepted: bool,
}

/// Time-rescaled view `m^eps(t) = m(t / eps^2)`; the state's own clock stays
/// in base-process time.
#[derive(Debug, Clone)]
pub struct RescaledOu {
    pub state: OuState,
    pub eps: f64,
}

impl RescaledOu {
    pub fn new(state: OuState, eps: f64) -> Self {
        assert!(eps > 0.0);
        Self { state, eps }
    }

    /// Advances the view by `dt` of slow time (base process by `dt / eps^2`).
    pub fn step<R: Rng + ?Sized>(&mut self, params: &OuParams, dt: f64, rng: &mut R) {
        params.step(&mut self.state, dt / (self.eps * self.eps), rng);
    }

    /// Slow time currently reached by the view.
    pub fn time(&self) -> f64 {
        self.state.time * self.eps * self.eps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn default_params(nx: usize) -> OuParams {
        OuParams::from_profile(4, 1.0, SigmaProfile::Split, 1.0, nx).unwrap()
    }

    #[test]
    fn zero_profile_samples_zero_field() {
        let params = OuParams::from_profile(2, 1.0, SigmaProfile::Zero, 1.0, 32).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let state = params.stationary_sample(&mut rng);
        assert!(state.modes.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn stationary_variance_single_mode() {
        // sigma_0 = sqrt(2), theta = 1 -> Var = 1
        let params = OuParams::new(0, 1.0, vec![std::f64::consts::SQRT_2], 16).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 20000;
        let mean_sq: f64 = (0..n)
            .map(|_| params.stationary_sample(&mut rng).modes[0].powi(2))
            .sum::<f64>()
            / n as f64;
        // 3 standard errors of the chi^2 estimator
        assert!((mean_sq - 1.0).abs() < 3.0 * (2.0f64 / n as f64).sqrt());
    }

    #[test]
    fn deterministic_decay() {
        let params = OuParams::new(0, 1.0, vec![0.0], 16).unwrap();
        let mut state = OuState { modes: Array1::from_vec(vec![1.0]), time: 0.0 };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        params.step(&mut state, std::f64::consts::LN_2, &mut rng);
        assert_abs_diff_eq!(state.modes[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn chained_steps_match_single_step_law() {
        // mean decay and variance accumulation compose exactly
        let theta = 1.3;
        let sigma = 0.8;
        let (dt1, dt2) = (0.21, 0.37);
        let v = |dt: f64| sigma * sigma * (1.0 - (-2.0 * theta * dt).exp()) / (2.0 * theta);
        let two_step_var = (-2.0 * theta * dt2).exp() * v(dt1) + v(dt2);
        assert_abs_diff_eq!(two_step_var, v(dt1 + dt2), epsilon = 1e-14);
        // and on an ensemble
        let params = OuParams::new(0, theta, vec![sigma], 16).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let n = 40000;
        let mut sum_sq_chained = 0.0;
        let mut sum_sq_single = 0.0;
        for _ in 0..n {
            let mut s1 = OuState::zero(1);
            params.step(&mut s1, dt1, &mut rng);
            params.step(&mut s1, dt2, &mut rng);
            sum_sq_chained += s1.modes[0].powi(2);
            let mut s2 = OuState::zero(1);
            params.step(&mut s2, dt1 + dt2, &mut rng);
            sum_sq_single += s2.modes[0].powi(2);
        }
        let (a, b) = (sum_sq_chained / n as f64, sum_sq_single / n as f64);
        let se = v(dt1 + dt2) * (2.0f64 / n as f64).sqrt();
        assert!((a - b).abs() < 4.0 * se, "chained {a} vs single {b}");
    }

    #[test]
    fn autocovariance_matches_analytic() {
        let theta = 1.0;
        let sigma = 1.0;
        let dt = 0.4;
        let params = OuParams::new(0, theta, vec![sigma], 16).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 50000;
        let mut acc = 0.0;
        for _ in 0..n {
            let mut s = params.stationary_sample(&mut rng);
            let before = s.modes[0];
            params.step(&mut s, dt, &mut rng);
            acc += before * s.modes[0];
        }
        let est = acc / n as f64;
        let expected = (-theta * dt).exp() * sigma * sigma / (2.0 * theta);
        assert!((est - expected).abs() < 3.0 * 0.5 / (n as f64).sqrt(), "est {est} vs {expected}");
    }

    #[test]
    fn evaluate_constant_and_cos_modes() {
        let params = default_params(64);
        let mut modes = Array1::zeros(params.n_modes());
        modes[0] = 2.5;
        let field = params.synthesize(&modes);
        assert!(field.iter().all(|v| (v - 2.5).abs() < 1e-14));
        let mut modes = Array1::zeros(params.n_modes());
        modes[1] = 1.0; // cos j=1
        let field = params.synthesize(&modes);
        let pts = params.grid().points();
        for (v, x) in field.iter().zip(pts.iter()) {
            let expected = std::f64::consts::SQRT_2 * (2.0 * std::f64::consts::PI * x).cos();
            assert_abs_diff_eq!(*v, expected, epsilon = 1e-13);
        }
    }

    #[test]
    fn parseval_on_grid() {
        let params = default_params(64);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let state = params.stationary_sample(&mut rng);
        let field = params.evaluate(&state);
        let l2sq = params.grid().l2_norm(&field).powi(2);
        let mode_sq: f64 = state.modes.iter().map(|m| m * m).sum();
        assert_abs_diff_eq!(l2sq, mode_sq, epsilon = 1e-10);
    }

    #[test]
    fn e_norm_single_cos_mode() {
        let params = default_params(64);
        let mut modes = Array1::zeros(params.n_modes());
        modes[1] = 1.0;
        let w = 2.0 * std::f64::consts::PI;
        let expected: f64 = (0..=4).map(|p| w.powi(p) * std::f64::consts::SQRT_2).sum();
        // the grid sup of |cos| and |sin| on 64 points is attained exactly at 1
        assert_abs_diff_eq!(params.e_norm_of_modes(&modes), expected, epsilon = 1e-8 * expected);
    }

    #[test]
    fn coupled_difference_decays_exactly() {
        let params = default_params(64);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let s1 = params.stationary_sample(&mut rng);
        let s2 = params.stationary_sample(&mut rng);
        let diff0 = &s1.modes - &s2.modes;
        // same noise cancels in the difference, leaving pure decay
        let t = 0.7;
        let decayed = diff0.mapv(|v| v * (-params.theta() * t).exp());
        let rate = params.mixing_rate();
        assert_abs_diff_eq!(
            params.e_norm_of_modes(&decayed),
            rate.gamma(t) * params.e_norm_of_modes(&diff0),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(rate.integral(), 1.0 / params.theta(), epsilon = 1e-15);
        assert!(rate.gamma(0.0) >= 1.0);
    }

    #[test]
    fn rescaled_view_steps_base_time() {
        let params = default_params(64);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let state = params.stationary_sample(&mut rng);
        let mut view = RescaledOu::new(state, 0.1);
        view.step(&params, 0.02, &mut rng);
        assert_abs_diff_eq!(view.state.time, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(view.time(), 0.02, epsilon = 1e-12);
    }

    #[test]
    fn analytic_kernel_single_mode_is_constant() {
        let params = OuParams::new(0, 2.0, vec![0.6], 16).unwrap();
        let k = params.analytic_kernel();
        let expected = 0.36 / 4.0;
        for v in k.iter() {
            assert_abs_diff_eq!(*v, expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn analytic_kernel_symmetric() {
        let params = default_params(32);
        let k = params.analytic_kernel();
        for a in 0..32 {
            for b in 0..32 {
                assert_abs_diff_eq!(k[(a, b)], k[(b, a)], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn audit_window_matches_arithmetic() {
        let params = default_params(32);
        let audit = params.audit_hypotheses(0.3, 8.0).unwrap();
        assert_abs_diff_eq!(audit.window.0, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(audit.window.1, 1.0 / 3.0, epsilon = 1e-15);
        assert!(audit.accepted);
        assert!(params.audit_hypotheses(0.5, 8.0).is_err());
        assert!(params.audit_hypotheses(0.2, 8.0).is_err());
    }
}
