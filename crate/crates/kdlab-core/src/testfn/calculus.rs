//! Closed-form corrector calculus for the spectral OU driver.
//!
//! Every member of the perturbed family is represented, at a fixed state
//! `(f, z)`, as a quadratic polynomial in the driver modes whose
//! coefficients are jets in `(f, z)`. The fast generator then acts through
//! the exact OU rules on the polynomial while the slow generator acts
//! through the jet direction, so the corrector identities hold to roundoff.

use ndarray::{Array1, Array2};

use crate::covariance::CovarianceModel;
use crate::driver::OuParams;
use crate::error::{Error, Result};
use crate::grid::SpectralGrid;
use crate::velocity::VelocityModel;

use super::dual::{DualPhase, DualX, Jet};
use super::poly::JetPoly;
use super::{Chi, TestFunction};

/// Members of the closed-form family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// `phi(rho, z)`
    Phi,
    /// first corrector
    Phi1,
    /// transport part of the second corrector
    Phi2c,
    /// pseudo-linear part of the second corrector
    Phi2l,
    /// pseudo-quadratic part of the second corrector
    Phi2q,
    /// full second corrector
    Phi2,
    /// perturbed test function `phi + eps phi1 + eps^2 phi2`
    PhiEps(f64),
    /// the n-free part of `L1 phi1`
    CPart,
    /// the pseudo-linear part of `L1 phi1`
    LPart,
    /// the pseudo-quadratic part of `L1 phi1`
    QPart,
    /// the limit generator applied to `phi`
    LimitGen,
}

/// Shared evaluation context: grid, velocity model and driver data.
#[derive(Debug, Clone)]
pub struct CalculusCtx {
    grid: SpectralGrid,
    model: VelocityModel,
    driver: OuParams,
    basis: Vec<Array1<f64>>,
    basis_derivs: Vec<Array1<f64>>,
    /// products `e_j e_k`, row-major
    basis_pairs: Vec<Array1<f64>>,
    diffusion: f64,
    sigma_sq: Vec<f64>,
    stationary_var: Vec<f64>,
}

/// Fields derived from one `(f, direction)` pair; shared across the whole
/// test-function battery.
pub struct StateFields {
    rho: DualX,
    rho_xx: DualX,
    abar_f: DualX,
    abar2_f: DualX,
    /// velocity-weighted average without differentiation
    a_avg: DualX,
}

/// Scalar primitives of one state/direction pair for one test function.
struct Primitives {
    p: Jet,
    s2: Jet,
    s2eq: Jet,
    nj: Vec<Jet>,
    n2: Vec<Jet>,
    q1: Vec<Jet>,
    q2: Vec<Jet>,
    chi: Jet,
    xd: Vec<Jet>,
    xdd: Vec<Jet>,
    /// `psi^{(r)}(u)` for r = 0..=3
    psi: [Jet; 4],
}

impl CalculusCtx {
    pub fn new(model: VelocityModel, driver: OuParams) -> Result<Self> {
        if model.dim() != 1 {
            return Err(Error::Config("corrector calculus runs one spatial dimension".into()));
        }
        let grid = driver.grid().clone();
        let diffusion = model.diffusion_scalar()?;
        let nm = driver.n_modes();
        let basis: Vec<Array1<f64>> = (0..nm).map(|j| driver.basis_row(j)).collect();
        let basis_derivs: Vec<Array1<f64>> = (0..nm)
            .map(|j| {
                let mut unit = Array1::zeros(nm);
                unit[j] = 1.0;
                driver.synthesize(&driver.derive_modes(&unit))
            })
            .collect();
        let mut basis_pairs = Vec::with_capacity(nm * nm);
        for j in 0..nm {
            for k in 0..nm {
                basis_pairs.push(&basis[j] * &basis[k]);
            }
        }
        let sigma_sq = driver.sigmas().iter().map(|s| s * s).collect();
        let stationary_var = driver.stationary_variances();
        Ok(Self {
            grid,
            model,
            driver,
            basis,
            basis_derivs,
            basis_pairs,
            diffusion,
            sigma_sq,
            stationary_var,
        })
    }

    /// Computes the f-level fields once per state/direction pair.
    pub fn state_fields(&self, f: &DualPhase) -> StateFields {
        let rho = f.density(&self.model);
        let rho_xx = rho.derivative(&self.grid, 2);
        let abar_f = f.abar(&self.model, &self.grid);
        let abar2_f = f.abar2(&self.model, &self.grid);
        let a_avg = f.a_average(&self.model);
        StateFields { rho, rho_xx, abar_f, abar2_f, a_avg }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn model(&self) -> &VelocityModel {
        &self.model
    }

    pub fn driver(&self) -> &OuParams {
        &self.driver
    }

    pub fn n_modes(&self) -> usize {
        self.driver.n_modes()
    }

    fn primitives(&self, tf: &TestFunction, sf: &StateFields, z: &DualX) -> Primitives {
        let dx = self.grid.dx();
        let nm = self.n_modes();
        let u = sf.rho.inner(&tf.xi, dx);
        let p = sf.abar_f.inner(&tf.xi, dx);
        let s2 = sf.abar2_f.inner(&tf.xi, dx);
        let s2eq = sf.rho_xx.inner(&tf.xi, dx).scale(self.diffusion);
        let rho_xi = sf.rho.mul_field(&tf.xi);
        let nj: Vec<Jet> = (0..nm).map(|j| rho_xi.inner(&self.basis[j], dx)).collect();
        let n2: Vec<Jet> =
            (0..nm * nm).map(|idx| rho_xi.inner(&self.basis_pairs[idx], dx)).collect();
        // product rule: abar(e_j f) = e_j' (sum mu a f) + e_j abar(f)
        let q1: Vec<Jet> = (0..nm)
            .map(|j| {
                sf.a_avg
                    .mul_field(&self.basis_derivs[j])
                    .add(&sf.abar_f.mul_field(&self.basis[j]))
                    .inner(&tf.xi, dx)
            })
            .collect();
        let q2: Vec<Jet> = (0..nm).map(|j| sf.abar_f.mul_field(&self.basis[j]).inner(&tf.xi, dx)).collect();
        let (chi, xd, xdd) = match &tf.chi {
            Chi::One => (Jet::ONE, vec![Jet::ZERO; nm], vec![Jet::ZERO; nm * nm]),
            Chi::CosInner { eta } => {
                let v = z.inner(eta, dx);
                let cosv = v.cos();
                let msin = -v.sin();
                let d: Vec<f64> = (0..nm).map(|j| self.grid.inner(&self.basis[j], eta)).collect();
                let xd: Vec<Jet> = (0..nm).map(|j| msin.scale(d[j])).collect();
                let xdd: Vec<Jet> = (0..nm * nm)
                    .map(|idx| (-cosv).scale(d[idx / nm] * d[idx % nm]))
                    .collect();
                (cosv, xd, xdd)
            }
        };
        let psi = [
            tf.psi.derivative_jet(u, 0),
            tf.psi.derivative_jet(u, 1),
            tf.psi.derivative_jet(u, 2),
            tf.psi.derivative_jet(u, 3),
        ];
        Primitives { p, s2, s2eq, nj, n2, q1, q2, chi, xd, xdd, psi }
    }

    fn build(&self, kind: Functional, pr: &Primitives) -> JetPoly {
        let nm = self.n_modes();
        let theta = self.driver.theta();
        match kind {
            Functional::Phi => {
                let mut poly = JetPoly::zero(nm);
                poly.c0 = pr.psi[0] * pr.chi;
                poly
            }
            Functional::Phi1 => {
                let mut poly = JetPoly::zero(nm);
                poly.c0 = -(pr.psi[1] * pr.p * pr.chi);
                for j in 0..nm {
                    poly.lin[j] =
                        (pr.psi[1] * pr.nj[j] * pr.chi + pr.psi[0] * pr.xd[j]).scale(1.0 / theta);
                }
                poly
            }
            Functional::CPart => {
                let mut poly = JetPoly::zero(nm);
                poly.c0 = pr.psi[2] * pr.p * pr.p * pr.chi + pr.psi[1] * pr.s2 * pr.chi;
                poly
            }
            Functional::LPart => {
                let beta = 1.0 + 1.0 / theta;
                let mut poly = JetPoly::zero(nm);
                for j in 0..nm {
                    let quad_term = (pr.psi[2] * pr.p * pr.nj[j] * pr.chi).scale(beta);
                    let grad_term =
                        pr.psi[1] * (pr.q1[j] + pr.q2[j].scale(1.0 / theta)) * pr.chi;
                    let chi_term = (pr.psi[1] * pr.p * pr.xd[j]).scale(beta);
                    poly.lin[j] = -(quad_term + grad_term + chi_term);
                }
                poly
            }
            Functional::QPart => {
                let mut poly = JetPoly::zero(nm);
                for j in 0..nm {
                    for k in 0..nm {
                        let idx = j * nm + k;
                        let term = pr.psi[2] * pr.nj[j] * pr.nj[k] * pr.chi
                            + pr.psi[1] * pr.n2[idx] * pr.chi
                            + pr.psi[1] * (pr.nj[j] * pr.xd[k] + pr.nj[k] * pr.xd[j])
                            + pr.psi[0] * pr.xdd[idx];
                        poly.quad[idx] = term.scale(1.0 / theta);
                    }
                }
                poly
            }
            Functional::Phi2c => {
                let mut poly = JetPoly::zero(nm);
                poly.c0 = (pr.psi[2] * pr.p * pr.p * pr.chi).scale(0.5)
                    + pr.psi[1] * (pr.s2 - pr.s2eq) * pr.chi;
                poly
            }
            Functional::Phi2l => self.build(Functional::LPart, pr).scale(1.0 / (1.0 + theta)),
            Functional::Phi2q => {
                let q = self.build(Functional::QPart, pr);
                let mean = q.mean_nu(&self.stationary_var);
                let mut poly = q.scale(1.0 / (2.0 * theta));
                poly.c0 = poly.c0 - mean.scale(1.0 / (2.0 * theta));
                poly
            }
            Functional::Phi2 => self
                .build(Functional::Phi2c, pr)
                .add(&self.build(Functional::Phi2l, pr))
                .add(&self.build(Functional::Phi2q, pr)),
            Functional::PhiEps(eps) => self
                .build(Functional::Phi, pr)
                .add(&self.build(Functional::Phi1, pr).scale(eps))
                .add(&self.build(Functional::Phi2, pr).scale(eps * eps)),
            Functional::LimitGen => {
                // heat part plus the nu-average of the pseudo-quadratic part
                let mut poly = JetPoly::zero(nm);
                let qmean = self.build(Functional::QPart, pr).mean_nu(&self.stationary_var);
                poly.c0 = pr.psi[1] * pr.s2eq * pr.chi + qmean;
                poly
            }
        }
    }

    /// Direction of the slow generator: `-Af + n f`.
    pub fn l1_direction(&self, f: &Array2<f64>, n_field: &Array1<f64>) -> Array2<f64> {
        let vels = self.model.velocities_1d().expect("d=1 checked at construction");
        let mut h = Array2::zeros(f.raw_dim());
        for (k, row) in f.rows().into_iter().enumerate() {
            let df = self.grid.derivative(&row.to_owned(), 1);
            for j in 0..f.ncols() {
                h[(k, j)] = -vels[k] * df[j] + n_field[j] * row[j];
            }
        }
        h
    }

    /// Plain value of a family member at `(f, z, n)`.
    pub fn value(&self, tf: &TestFunction, kind: Functional, f: &Array2<f64>, z: &Array1<f64>, n: &Array1<f64>) -> f64 {
        let fd = DualPhase::plain(f.clone());
        let zd = DualX::plain(z.clone());
        let pr = self.primitives(tf, &self.state_fields(&fd), &zd);
        self.build(kind, &pr).eval(n.as_slice().unwrap()).v
    }

    /// `L1 T = D_f T(-Af + n f) + D_z T(n)`.
    pub fn l1(&self, tf: &TestFunction, kind: Functional, f: &Array2<f64>, z: &Array1<f64>, n: &Array1<f64>) -> f64 {
        let n_field = self.driver.synthesize(n);
        let h = self.l1_direction(f, &n_field);
        let fd = DualPhase::with_direction(f.clone(), h);
        let zd = DualX { v: z.clone(), d: n_field };
        let pr = self.primitives(tf, &self.state_fields(&fd), &zd);
        self.build(kind, &pr).eval(n.as_slice().unwrap()).d
    }

    /// `L2 T = D_f T(Lf) + B T`.
    pub fn l2(&self, tf: &TestFunction, kind: Functional, f: &Array2<f64>, z: &Array1<f64>, n: &Array1<f64>) -> f64 {
        let lf = self.model.bgk_apply(f).expect("shape checked");
        let fd = DualPhase::with_direction(f.clone(), lf);
        let zd = DualX::plain(z.clone());
        let pr = self.primitives(tf, &self.state_fields(&fd), &zd);
        let poly = self.build(kind, &pr);
        let transport = poly.eval(n.as_slice().unwrap()).d;
        let fast = poly.values().b_apply(n.as_slice().unwrap(), self.driver.theta(), &self.sigma_sq);
        transport + fast
    }

    /// Full scaled generator applied to the perturbed test function.
    pub fn l_eps_phi_eps(&self, tf: &TestFunction, eps: f64, f: &Array2<f64>, z: &Array1<f64>, n: &Array1<f64>) -> f64 {
        let kind = Functional::PhiEps(eps);
        self.l1(tf, kind, f, z, n) / eps + self.l2(tf, kind, f, z, n) / (eps * eps)
    }

    /// Value and scaled generator in two primitive passes (shared by the
    /// martingale statistics, which evaluate along whole trajectories).
    pub fn phi_eps_and_generator(
        &self,
        tf: &TestFunction,
        eps: f64,
        f: &Array2<f64>,
        z: &Array1<f64>,
        n: &Array1<f64>,
    ) -> (f64, f64, f64) {
        let kind = Functional::PhiEps(eps);
        let n_slice = n.as_slice().unwrap();
        let n_field = self.driver.synthesize(n);
        let h = self.l1_direction(f, &n_field);
        let fd = DualPhase::with_direction(f.clone(), h);
        let zd = DualX { v: z.clone(), d: n_field };
        let pr = self.primitives(tf, &self.state_fields(&fd), &zd);
        let poly1 = self.build(kind, &pr);
        let jet1 = poly1.eval(n_slice);
        let value = jet1.v;
        let l1 = jet1.d;
        let lf = self.model.bgk_apply(f).expect("shape checked");
        let fd2 = DualPhase::with_direction(f.clone(), lf);
        let zd2 = DualX::plain(z.clone());
        let pr2 = self.primitives(tf, &self.state_fields(&fd2), &zd2);
        let poly2 = self.build(kind, &pr2);
        let l2 = poly2.eval(n_slice).d
            + poly2.values().b_apply(n_slice, self.driver.theta(), &self.sigma_sq);
        let gamma = poly2.values().gamma(n_slice, &self.sigma_sq);
        (value, l1 / eps + l2 / (eps * eps), gamma)
    }

    /// Value, scaled generator and carre du champ of `phi^eps` for a whole
    /// battery at one state; the f-level fields are computed once.
    pub fn battery_phi_eps(
        &self,
        tfs: &[TestFunction],
        eps: f64,
        f: &Array2<f64>,
        z: &Array1<f64>,
        n: &Array1<f64>,
    ) -> Vec<(f64, f64, f64)> {
        let kind = Functional::PhiEps(eps);
        let n_slice = n.as_slice().unwrap();
        let n_field = self.driver.synthesize(n);
        let h = self.l1_direction(f, &n_field);
        let sf1 = self.state_fields(&DualPhase::with_direction(f.clone(), h));
        let zd1 = DualX { v: z.clone(), d: n_field };
        let lf = self.model.bgk_apply(f).expect("shape checked");
        let sf2 = self.state_fields(&DualPhase::with_direction(f.clone(), lf));
        let zd2 = DualX::plain(z.clone());
        tfs.iter()
            .map(|tf| {
                let poly1 = self.build(kind, &self.primitives(tf, &sf1, &zd1));
                let jet1 = poly1.eval(n_slice);
                let poly2 = self.build(kind, &self.primitives(tf, &sf2, &zd2));
                let l2 = poly2.eval(n_slice).d
                    + poly2.values().b_apply(n_slice, self.driver.theta(), &self.sigma_sq);
                let gamma = poly2.values().gamma(n_slice, &self.sigma_sq);
                (jet1.v, jet1.d / eps + l2 / (eps * eps), gamma)
            })
            .collect()
    }

    /// Directional derivative in `f` (exact, via jets).
    pub fn d_f(&self, tf: &TestFunction, kind: Functional, f: &Array2<f64>, z: &Array1<f64>, n: &Array1<f64>, dir: &Array2<f64>) -> f64 {
        let fd = DualPhase::with_direction(f.clone(), dir.clone());
        let zd = DualX::plain(z.clone());
        let pr = self.primitives(tf, &self.state_fields(&fd), &zd);
        self.build(kind, &pr).eval(n.as_slice().unwrap()).d
    }

    /// Directional derivative in `z`.
    pub fn d_z(&self, tf: &TestFunction, kind: Functional, f: &Array2<f64>, z: &Array1<f64>, n: &Array1<f64>, dir: &Array1<f64>) -> f64 {
        let fd = DualPhase::plain(f.clone());
        let zd = DualX { v: z.clone(), d: dir.clone() };
        let pr = self.primitives(tf, &self.state_fields(&fd), &zd);
        self.build(kind, &pr).eval(n.as_slice().unwrap()).d
    }

    /// Directional derivative in the driver modes.
    pub fn d_n(&self, tf: &TestFunction, kind: Functional, f: &Array2<f64>, z: &Array1<f64>, n: &Array1<f64>, dir: &Array1<f64>) -> f64 {
        let fd = DualPhase::plain(f.clone());
        let zd = DualX::plain(z.clone());
        let pr = self.primitives(tf, &self.state_fields(&fd), &zd);
        let poly = self.build(kind, &pr).values();
        (0..self.n_modes()).map(|j| dir[j] * poly.partial(j, n.as_slice().unwrap())).sum()
    }

    /// Carre du champ of a family member's n-dependence at the state.
    pub fn gamma(&self, tf: &TestFunction, kind: Functional, f: &Array2<f64>, z: &Array1<f64>, n: &Array1<f64>) -> f64 {
        let fd = DualPhase::plain(f.clone());
        let zd = DualX::plain(z.clone());
        let pr = self.primitives(tf, &self.state_fields(&fd), &zd);
        self.build(kind, &pr).values().gamma(n.as_slice().unwrap(), &self.sigma_sq)
    }

    /// Normalized residual `|L^eps phi^eps - L phi| / ((1 + |f|^3)(1 + |n|_E^{b+2}))`
    /// with the OU growth exponent `b = 1`.
    pub fn normalized_residual(&self, tf: &TestFunction, eps: f64, f: &Array2<f64>, z: &Array1<f64>, n: &Array1<f64>) -> f64 {
        let leps = self.l_eps_phi_eps(tf, eps, f, z, n);
        let lphi = self.value(tf, Functional::LimitGen, f, z, n);
        let f_norm = self.model.fspace_norm(f, self.grid.dx());
        let n_norm = self.driver.e_norm_of_modes(n);
        (leps - lphi).abs() / ((1.0 + f_norm.powi(3)) * (1.0 + n_norm.powi(3)))
    }
}

/// The limit generator evaluated from a covariance model's eigenpairs
/// (the trace form). Cross-checks the driver-mode route used internally.
pub fn limit_generator(
    grid: &SpectralGrid,
    tf: &TestFunction,
    rho: &Array1<f64>,
    z: &Array1<f64>,
    cov: &CovarianceModel,
    diffusion: f64,
) -> f64 {
    let dx = grid.dx();
    let u = grid.inner(rho, &tf.xi);
    let psi = |r: usize| tf.psi.derivative_jet(Jet::constant(u), r).v;
    let rho_xx = grid.derivative(rho, 2);
    let heat = diffusion * grid.inner(&rho_xx, &tf.xi);
    let f_rho = cov.trace_field() * rho;
    let drift = 0.5 * grid.inner(&f_rho, &tf.xi);
    let (chi, dchi_of, d2chi_of): (f64, Box<dyn Fn(&Array1<f64>) -> f64>, Box<dyn Fn(&Array1<f64>) -> f64>) =
        match &tf.chi {
            Chi::One => (1.0, Box::new(|_| 0.0), Box::new(|_| 0.0)),
            Chi::CosInner { eta } => {
                let v = grid.inner(z, eta);
                let eta = eta.clone();
                let grid_a = grid.clone();
                let grid_b = grid.clone();
                let eta_b = eta.clone();
                (
                    v.cos(),
                    Box::new(move |w: &Array1<f64>| -v.sin() * grid_a.inner(w, &eta)),
                    Box::new(move |w: &Array1<f64>| {
                        let ip = grid_b.inner(w, &eta_b);
                        -v.cos() * ip * ip
                    }),
                )
            }
        };
    let mut noise = 0.0;
    for (i, &q) in cov.eigenvalues().iter().enumerate() {
        if q == 0.0 {
            continue;
        }
        let fi = cov.eigenfield(i);
        let fi_rho = fi * rho;
        let ci = grid.inner(&fi_rho, &tf.xi);
        noise += 0.5 * q * (psi(2) * ci * ci * chi + 2.0 * psi(1) * ci * dchi_of(fi) + psi(0) * d2chi_of(fi));
    }
    let _ = dx;
    psi(1) * (heat + drift) * chi + noise
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::SigmaProfile;
    use crate::kinetic::equilibrium_data;
    use crate::testfn::{default_battery, xi_cos};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn ctx_o1(nx: usize) -> CalculusCtx {
        let model = VelocityModel::two_velocity();
        let driver = OuParams::from_profile(2, 1.3, SigmaProfile::Split, 0.8, nx).unwrap();
        CalculusCtx::new(model, driver).unwrap()
    }

    fn random_state(ctx: &CalculusCtx, rng: &mut ChaCha12Rng) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let nx = ctx.grid().nx();
        let nv = ctx.model().nodes();
        let pts = ctx.grid().points();
        let mut f = Array2::zeros((nv, nx));
        for mut row in f.rows_mut() {
            let (a, b, c): (f64, f64, f64) = (rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            for (j, v) in row.iter_mut().enumerate() {
                let x = pts[j];
                *v = 0.8 + a + b * (2.0 * std::f64::consts::PI * x).cos()
                    + c * (4.0 * std::f64::consts::PI * x).sin();
            }
        }
        let (za, zb): (f64, f64) = (rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        let z = pts.mapv(|x| za + zb * (2.0 * std::f64::consts::PI * x).sin());
        let n = ctx.driver().stationary_sample(rng).modes;
        (f, z, n)
    }

    fn rel(residual: f64, scale: f64) -> f64 {
        residual.abs() / scale.max(1e-12)
    }

    #[test]
    fn order_minus_two_l2_phi_vanishes() {
        let ctx = ctx_o1(32);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for tf in default_battery(ctx.grid()) {
            let (f, z, n) = random_state(&ctx, &mut rng);
            let v = ctx.l2(&tf, Functional::Phi, &f, &z, &n);
            assert!(v.abs() < 1e-10, "{}: L2 phi = {v}", tf.label);
        }
    }

    #[test]
    fn order_minus_one_identity() {
        let ctx = ctx_o1(32);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for tf in default_battery(ctx.grid()) {
            for _ in 0..4 {
                let (f, z, n) = random_state(&ctx, &mut rng);
                let a = ctx.l1(&tf, Functional::Phi, &f, &z, &n);
                let b = ctx.l2(&tf, Functional::Phi1, &f, &z, &n);
                assert!(rel(a + b, a.abs() + b.abs()) < 1e-9, "{}: {a} + {b}", tf.label);
            }
        }
    }

    #[test]
    fn l1_phi1_decomposes_into_c_l_q() {
        let ctx = ctx_o1(32);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for tf in default_battery(ctx.grid()) {
            let (f, z, n) = random_state(&ctx, &mut rng);
            let whole = ctx.l1(&tf, Functional::Phi1, &f, &z, &n);
            let parts = ctx.value(&tf, Functional::CPart, &f, &z, &n)
                + ctx.value(&tf, Functional::LPart, &f, &z, &n)
                + ctx.value(&tf, Functional::QPart, &f, &z, &n);
            assert!(rel(whole - parts, whole.abs() + parts.abs()) < 1e-9, "{}", tf.label);
        }
    }

    #[test]
    fn order_zero_identity() {
        let ctx = ctx_o1(32);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for tf in default_battery(ctx.grid()) {
            for _ in 0..4 {
                let (f, z, n) = random_state(&ctx, &mut rng);
                let lhs = ctx.l1(&tf, Functional::Phi1, &f, &z, &n)
                    + ctx.l2(&tf, Functional::Phi2, &f, &z, &n);
                let rhs = ctx.value(&tf, Functional::LimitGen, &f, &z, &n);
                assert!(
                    rel(lhs - rhs, lhs.abs() + rhs.abs() + 1.0) < 1e-9,
                    "{}: {lhs} vs {rhs}",
                    tf.label
                );
            }
        }
    }

    #[test]
    fn residual_is_eps_times_l1_phi2() {
        let ctx = ctx_o1(32);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for tf in default_battery(ctx.grid()) {
            let (f, z, n) = random_state(&ctx, &mut rng);
            let eps = 0.17;
            let leps = ctx.l_eps_phi_eps(&tf, eps, &f, &z, &n);
            let lphi = ctx.value(&tf, Functional::LimitGen, &f, &z, &n);
            let l1phi2 = ctx.l1(&tf, Functional::Phi2, &f, &z, &n);
            assert!(
                rel(leps - lphi - eps * l1phi2, leps.abs() + lphi.abs() + 1.0) < 1e-8,
                "{}",
                tf.label
            );
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let ctx = ctx_o1(32);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let battery = default_battery(ctx.grid());
        for tf in &battery {
            let (f, z, n) = random_state(&ctx, &mut rng);
            let (df_dir, dz_dir, dn_dir) = {
                let (df, dz, nn) = random_state(&ctx, &mut rng);
                (df, dz, nn)
            };
            for kind in [Functional::Phi, Functional::Phi1, Functional::Phi2] {
                let h = 1e-6;
                // f-direction
                let analytic = ctx.d_f(tf, kind, &f, &z, &n, &df_dir);
                let plus = ctx.value(tf, kind, &(&f + &df_dir.mapv(|v| v * h)), &z, &n);
                let minus = ctx.value(tf, kind, &(&f - &df_dir.mapv(|v| v * h)), &z, &n);
                let fd = (plus - minus) / (2.0 * h);
                assert!(rel(analytic - fd, analytic.abs() + 1.0) < 1e-5, "{} f-dir", tf.label);
                // z-direction
                let analytic = ctx.d_z(tf, kind, &f, &z, &n, &dz_dir);
                let plus = ctx.value(tf, kind, &f, &(&z + &dz_dir.mapv(|v| v * h)), &n);
                let minus = ctx.value(tf, kind, &f, &(&z - &dz_dir.mapv(|v| v * h)), &n);
                let fd = (plus - minus) / (2.0 * h);
                assert!(rel(analytic - fd, analytic.abs() + 1.0) < 1e-5, "{} z-dir", tf.label);
                // n-direction
                let analytic = ctx.d_n(tf, kind, &f, &z, &n, &dn_dir);
                let plus = ctx.value(tf, kind, &f, &z, &(&n + &dn_dir.mapv(|v| v * h)));
                let minus = ctx.value(tf, kind, &f, &z, &(&n - &dn_dir.mapv(|v| v * h)));
                let fd = (plus - minus) / (2.0 * h);
                assert!(rel(analytic - fd, analytic.abs() + 1.0) < 1e-5, "{} n-dir", tf.label);
            }
        }
    }

    #[test]
    fn phi1_vanishes_at_equilibrium_quiet_driver() {
        let ctx = ctx_o1(32);
        let rho = xi_cos(ctx.grid(), 1).mapv(|v| 1.0 + 0.5 * v);
        let f = equilibrium_data(ctx.model(), &rho);
        let z = Array1::zeros(32);
        let n = Array1::zeros(ctx.n_modes());
        for tf in default_battery(ctx.grid()) {
            let v = ctx.value(&tf, Functional::Phi1, &f, &z, &n);
            assert!(v.abs() < 1e-12, "{}: phi1 = {v}", tf.label);
        }
    }

    #[test]
    fn phi1_linear_mass_case_reduces_to_integral() {
        // psi = u, xi = 1, chi = 1: phi1 = (1/theta) int n rho dx
        let ctx = ctx_o1(32);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let (f, z, n) = random_state(&ctx, &mut rng);
        let tf = TestFunction::new(
            crate::testfn::Psi::Linear,
            crate::testfn::xi_constant(ctx.grid()),
            Chi::One,
            "lin-mass",
        );
        let rho = ctx.model().density(&f).unwrap();
        let n_field = ctx.driver().synthesize(&n);
        let expected = ctx.grid().inner(&(&rho * &n_field), &crate::testfn::xi_constant(ctx.grid()))
            / ctx.driver().theta();
        let got = ctx.value(&tf, Functional::Phi1, &f, &z, &n);
        assert_abs_diff_eq!(got, expected, epsilon = 1e-10 * expected.abs().max(1.0));
    }

    #[test]
    fn phi2_components_vanish_where_expected() {
        let ctx = ctx_o1(32);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let (f, z, _) = random_state(&ctx, &mut rng);
        let zero_n = Array1::zeros(ctx.n_modes());
        for tf in default_battery(ctx.grid()) {
            // l is linear in n, so phi2^l vanishes at n = 0
            let v = ctx.value(&tf, Functional::Phi2l, &f, &z, &zero_n);
            assert!(v.abs() < 1e-12, "{}: phi2l(0) = {v}", tf.label);
        }
        // phi2c vanishes on equilibrium data
        let rho = ctx.model().density(&f).unwrap();
        let feq = equilibrium_data(ctx.model(), &rho);
        for tf in default_battery(ctx.grid()) {
            let v = ctx.value(&tf, Functional::Phi2c, &feq, &z, &zero_n);
            assert!(v.abs() < 1e-10, "{}: phi2c(eq) = {v}", tf.label);
        }
    }

    #[test]
    fn limit_generator_routes_agree() {
        let ctx = ctx_o1(32);
        let cov = CovarianceModel::from_driver(ctx.driver()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for tf in default_battery(ctx.grid()) {
            let (f, z, n) = random_state(&ctx, &mut rng);
            // the limit generator only sees (rho, z); evaluate the internal
            // route at equilibrium data to fix rho
            let rho = ctx.model().density(&f).unwrap();
            let feq = equilibrium_data(ctx.model(), &rho);
            let internal = ctx.value(&tf, Functional::LimitGen, &feq, &z, &n);
            let trace_form = limit_generator(ctx.grid(), &tf, &rho, &z, &cov, 1.0);
            assert!(
                rel(internal - trace_form, internal.abs() + trace_form.abs() + 1.0) < 1e-8,
                "{}: {internal} vs {trace_form}",
                tf.label
            );
        }
    }

    #[test]
    fn limit_generator_noiseless_is_heat_only() {
        let model = VelocityModel::two_velocity();
        let driver = OuParams::from_profile(2, 1.0, SigmaProfile::Zero, 1.0, 32).unwrap();
        let ctx = CalculusCtx::new(model, driver).unwrap();
        let grid = ctx.grid().clone();
        let rho = xi_cos(&grid, 1);
        let z = Array1::zeros(32);
        let tf = TestFunction::new(crate::testfn::Psi::Linear, xi_cos(&grid, 1), Chi::One, "t");
        let cov = CovarianceModel::from_driver(ctx.driver()).unwrap();
        let got = limit_generator(&grid, &tf, &rho, &z, &cov, 1.0);
        // L phi = <div(K grad rho), xi> = -4 pi^2 <rho, xi>
        let expected = -4.0 * std::f64::consts::PI.powi(2) * grid.inner(&rho, &xi_cos(&grid, 1));
        assert_abs_diff_eq!(got, expected, epsilon = 1e-8 * expected.abs());
    }

    #[test]
    fn limit_generator_quadratic_includes_ito_term() {
        // psi = u^2, xi = 1, chi = 1 on a rank-one constant covariance:
        // L phi = 2 <rho, 1> <div K rho'' + F rho / 2, 1> + q <rho, 1>^2
        let grid = SpectralGrid::new(32);
        let q = 0.4;
        let ones = Array1::ones(32);
        let cov = CovarianceModel::rank_one(q, &ones, grid.dx()).unwrap();
        let rho = grid.points().mapv(|x| 1.0 + 0.3 * (2.0 * std::f64::consts::PI * x).cos());
        let z = Array1::zeros(32);
        let tf = TestFunction::new(crate::testfn::Psi::Quadratic, xi_constant_local(&grid), Chi::One, "t");
        let got = limit_generator(&grid, &tf, &rho, &z, &cov, 1.0);
        let mass = grid.inner(&rho, &Array1::ones(32));
        let drift = 0.5 * q * mass; // <F rho / 2, 1>, heat part integrates to zero
        let expected = 2.0 * mass * drift + q * mass * mass;
        assert_abs_diff_eq!(got, expected, epsilon = 1e-8 * expected.abs());
    }

    fn xi_constant_local(grid: &SpectralGrid) -> Array1<f64> {
        Array1::ones(grid.nx())
    }

    #[test]
    fn mean_l1_phi_vanishes_over_stationary_driver() {
        let ctx = ctx_o1(32);
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let rho = xi_cos(ctx.grid(), 1).mapv(|v| 1.0 + 0.4 * v);
        let f = equilibrium_data(ctx.model(), &rho);
        let z = Array1::zeros(32);
        let tf = &default_battery(ctx.grid())[3];
        let n_samples = 4000;
        let vals: Vec<f64> = (0..n_samples)
            .map(|_| {
                let n = ctx.driver().stationary_sample(&mut rng).modes;
                ctx.l1(tf, Functional::Phi, &f, &z, &n)
            })
            .collect();
        let (mean, se) = crate::ensemble::mean_se(&vals);
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn qpart_mean_matches_monte_carlo() {
        let ctx = ctx_o1(32);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let (f, z, _) = random_state(&ctx, &mut rng);
        let tf = &default_battery(ctx.grid())[4];
        let fd = DualPhase::plain(f.clone());
        let zd = DualX::plain(z.clone());
        let pr = ctx.primitives(tf, &ctx.state_fields(&fd), &zd);
        let analytic = ctx.build(Functional::QPart, &pr).mean_nu(&ctx.stationary_var).v;
        let n_samples = 20000;
        let vals: Vec<f64> = (0..n_samples)
            .map(|_| {
                let n = ctx.driver().stationary_sample(&mut rng).modes;
                ctx.value(tf, Functional::QPart, &f, &z, &n)
            })
            .collect();
        let (mean, se) = crate::ensemble::mean_se(&vals);
        assert!((mean - analytic).abs() < 3.5 * se, "mc {mean} vs {analytic} (se {se})");
    }

    #[test]
    fn growth_bounds_hold_on_random_states() {
        let ctx = ctx_o1(32);
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let battery = default_battery(ctx.grid());
        let mut fitted_c1 = 0.0f64;
        let mut fitted_c2 = 0.0f64;
        let mut states = Vec::new();
        for _ in 0..24 {
            states.push(random_state(&ctx, &mut rng));
        }
        let (fit, check) = states.split_at(12);
        for tf in &battery {
            for (f, z, n) in fit {
                let f_norm = ctx.model().fspace_norm(f, ctx.grid().dx());
                let n_norm = ctx.driver().e_norm_of_modes(n);
                let p1 = ctx.value(tf, Functional::Phi1, f, z, n).abs()
                    / ((1.0 + f_norm * f_norm) * (1.0 + n_norm));
                let p2 = ctx.value(tf, Functional::Phi2, f, z, n).abs()
                    / ((1.0 + f_norm * f_norm) * (1.0 + n_norm * n_norm));
                fitted_c1 = fitted_c1.max(p1);
                fitted_c2 = fitted_c2.max(p2);
            }
        }
        for tf in &battery {
            for (f, z, n) in check {
                let f_norm = ctx.model().fspace_norm(f, ctx.grid().dx());
                let n_norm = ctx.driver().e_norm_of_modes(n);
                let p1 = ctx.value(tf, Functional::Phi1, f, z, n).abs()
                    / ((1.0 + f_norm * f_norm) * (1.0 + n_norm));
                let p2 = ctx.value(tf, Functional::Phi2, f, z, n).abs()
                    / ((1.0 + f_norm * f_norm) * (1.0 + n_norm * n_norm));
                assert!(p1 <= 5.0 * fitted_c1 + 1e-12, "{}: phi1 ratio {p1}", tf.label);
                assert!(p2 <= 5.0 * fitted_c2 + 1e-12, "{}: phi2 ratio {p2}", tf.label);
            }
        }
    }
}
