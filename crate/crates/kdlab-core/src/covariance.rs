//! Covariance kernel and operator: assembly from grid samples of `k`,
//! eigendecomposition, Mercer reconstruction, trace identities, the C^1
//! summability report and a Monte Carlo kernel estimator cross-validating
//! the closed form.

use ndarray::{Array1, Array2};

use crate::driver::OuParams;
use crate::ensemble;
use crate::error::{Error, Result};
use crate::grid::SpectralGrid;
use crate::rng::{stream, StreamKey};

const EIGEN_CLIP: f64 = 1e-10;

/// Spectral data of the covariance operator `Q` on the grid.
///
/// Eigenfields are orthonormal in discrete `L^2(dx)`; the quadrature weight
/// `dx` is folded into the operator so eigenvalues approximate the continuum
/// problem independently of the grid.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    kernel: Array2<f64>,
    dx: f64,
    eigenvalues: Vec<f64>,
    eigenfields: Vec<Array1<f64>>,
    trace_field: Array1<f64>,
}

impl CovarianceModel {
    /// Assembles the model from grid samples of a symmetric kernel.
    /// The input is symmetrized defensively; eigenvalues in `[-1e-10, 0)`
    /// are clipped to zero and anything below that is rejected.
    pub fn assemble(kernel: &Array2<f64>, dx: f64) -> Result<Self> {
        let n = kernel.nrows();
        if kernel.ncols() != n {
            return Err(Error::Shape(format!("kernel must be square, got {}x{}", n, kernel.ncols())));
        }
        let mut sym = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                sym[(i, j)] = 0.5 * (kernel[(i, j)] + kernel[(j, i)]);
            }
        }
        let weighted = nalgebra::DMatrix::from_fn(n, n, |i, j| sym[(i, j)] * dx);
        let eig = nalgebra::SymmetricEigen::new(weighted);
        let mut pairs: Vec<(f64, Array1<f64>)> = (0..n)
            .map(|i| {
                let q = eig.eigenvalues[i];
                let v = Array1::from_iter((0..n).map(|r| eig.eigenvectors[(r, i)] / dx.sqrt()));
                (q, v)
            })
            .collect();
        let scale = pairs.iter().map(|(q, _)| q.abs()).fold(0.0f64, f64::max).max(1.0);
        for (q, _) in pairs.iter_mut() {
            if *q < 0.0 {
                if *q < -EIGEN_CLIP * scale {
                    return Err(Error::Covariance(format!(
                        "eigenvalue {q:e} below the negativity tolerance; kernel is not positive semidefinite"
                    )));
                }
                *q = 0.0;
            }
        }
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let trace_field = Array1::from_iter((0..n).map(|i| sym[(i, i)]));
        let (eigenvalues, eigenfields) = pairs.into_iter().unzip();
        Ok(Self { kernel: sym, dx, eigenvalues, eigenfields, trace_field })
    }

    pub fn from_driver(params: &OuParams) -> Result<Self> {
        Self::assemble(&params.analytic_kernel(), params.grid().dx())
    }

    /// Rank-one model `k(x,y) = q phi(x) phi(y)` for a unit-norm field.
    pub fn rank_one(q: f64, phi: &Array1<f64>, dx: f64) -> Result<Self> {
        let n = phi.len();
        let mut k = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = q * phi[i] * phi[j];
            }
        }
        Self::assemble(&k, dx)
    }

    pub fn kernel(&self) -> &Array2<f64> {
        &self.kernel
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nx(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfield(&self, i: usize) -> &Array1<f64> {
        &self.eigenfields[i]
    }

    /// `F(x) = k(x,x)`.
    pub fn trace_field(&self) -> &Array1<f64> {
        &self.trace_field
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn trace_from_field(&self) -> f64 {
        self.trace_field.sum() * self.dx
    }

    /// Indices of eigenpairs retained for noise synthesis.
    pub fn active_modes(&self, rel_tol: f64) -> Vec<usize> {
        let top = self.eigenvalues.first().copied().unwrap_or(0.0);
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &q)| q > rel_tol * top && q > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// Operator action `(Q g)(x) = int k(x,y) g(y) dy`.
    pub fn apply(&self, g: &Array1<f64>) -> Array1<f64> {
        self.kernel.dot(g) * self.dx
    }

    pub fn quadratic_form(&self, g: &Array1<f64>) -> f64 {
        self.apply(g).dot(g) * self.dx
    }

    /// `sum_i q_i F_i(x) F_i(y)`.
    pub fn mercer_reconstruct(&self) -> Array2<f64> {
        let n = self.nx();
        let mut k = Array2::zeros((n, n));
        for (q, f) in self.eigenvalues.iter().zip(self.eigenfields.iter()) {
            if *q == 0.0 {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    k[(i, j)] += q * f[i] * f[j];
                }
            }
        }
        k
    }

    pub fn mercer_error(&self) -> f64 {
        let rec = self.mercer_reconstruct();
        rec.iter()
            .zip(self.kernel.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
    }

    /// Partial sums of `sum_i q_i ||F_i||_{C^1}^2` in descending eigenvalue
    /// order.
    pub fn c1_summability(&self, grid: &SpectralGrid) -> Vec<f64> {
        let mut partial = Vec::with_capacity(self.eigenvalues.len());
        let mut acc = 0.0;
        for (q, f) in self.eigenvalues.iter().zip(self.eigenfields.iter()) {
            acc += q * grid.c1_norm(f).powi(2);
            partial.push(acc);
        }
        partial
    }
}

/// Monte Carlo estimate of the kernel with per-entry standard errors.
#[derive(Debug, Clone)]
pub struct KernelEstimate {
    pub mean: Array2<f64>,
    pub se: Array2<f64>,
    /// mean of the forward-minus-reversed part; zero in expectation for a
    /// reversible driver (the two resolvent terms of the kernel identity agree)
    pub asym_mean: Array2<f64>,
    pub asym_se: Array2<f64>,
    pub samples: usize,
    pub warnings: Vec<String>,
}

impl KernelEstimate {
    /// Largest entrywise deviation from `reference` in units of the entry SE.
    pub fn max_deviation_in_se(&self, reference: &Array2<f64>) -> f64 {
        self.mean
            .iter()
            .zip(reference.iter())
            .zip(self.se.iter())
            .map(|((m, r), s)| if *s > 0.0 { (m - r).abs() / s } else { (m - r).abs() * 1e300 })
            .fold(0.0f64, f64::max)
    }
}

/// Estimates `k(x,y) = E int_{-T*}^{T*} m(0)(x) m(t)(y) dt` by trapezoidal
/// quadrature over exact OU transitions; the negative-time half is obtained
/// from the forward path by stationarity (it is the transpose contribution).
///
/// Accumulation happens in mode space (the per-sample integral is a rank-one
/// outer product of mode vectors), which keeps the estimator exact while the
/// grid transform is applied once per sample.
pub fn estimate_kernel_mc(
    params: &OuParams,
    t_star: f64,
    dt: f64,
    samples: usize,
    master_seed: u64,
) -> Result<KernelEstimate> {
    if samples < 2 {
        return Err(Error::Config("kernel estimator needs at least 2 samples".into()));
    }
    let mut warnings = Vec::new();
    let tail = (-params.theta() * t_star).exp();
    if tail > 1e-6 {
        warnings.push(format!(
            "tail truncation e^(-theta T*) = {tail:.2e} above 1e-6; kernel tail bias may be visible"
        ));
    }
    if samples < 100 {
        warnings.push(format!("only {samples} samples; entrywise standard errors will be loose"));
    }
    let steps = (t_star / dt).ceil() as usize;
    let nm = params.n_modes();
    let nx = params.grid().nx();

    // per-sample symmetric and antisymmetric grid matrices, accumulated in
    // fixed-size chunks so the reduction order is independent of scheduling
    let chunk = 32usize;
    let n_chunks = samples.div_ceil(chunk);
    struct Acc {
        sum: Array2<f64>,
        sum_sq: Array2<f64>,
        asym_sum: Array2<f64>,
        asym_sum_sq: Array2<f64>,
    }
    let basis = Array2::from_shape_fn((nm, nx), |(i, j)| params.basis_row(i)[j]);
    let partials = ensemble::map(n_chunks, |ci| {
        let mut acc = Acc {
            sum: Array2::zeros((nx, nx)),
            sum_sq: Array2::zeros((nx, nx)),
            asym_sum: Array2::zeros((nx, nx)),
            asym_sum_sq: Array2::zeros((nx, nx)),
        };
        let lo = ci * chunk;
        let hi = ((ci + 1) * chunk).min(samples);
        for s in lo..hi {
            let mut rng = stream(StreamKey::new(master_seed, "estimate-kernel", "driver").with_trajectory(s));
            let mut state = params.stationary_sample(&mut rng);
            let m0 = state.modes.clone();
            // trapezoid weights: dt/2 at the ends, dt inside
            let mut v = m0.mapv(|x| x * dt * 0.5);
            for i in 0..steps {
                params.step(&mut state, dt, &mut rng);
                let w = if i + 1 == steps { dt * 0.5 } else { dt };
                v.scaled_add(w, &state.modes);
            }
            // outer product in mode space, then one grid transform
            let mut outer = Array2::zeros((nm, nm));
            for a in 0..nm {
                for b in 0..nm {
                    outer[(a, b)] = m0[a] * v[b];
                }
            }
            let forward = basis.t().dot(&outer).dot(&basis);
            for i in 0..nx {
                for j in 0..nx {
                    let sym = forward[(i, j)] + forward[(j, i)];
                    let asym = forward[(i, j)] - forward[(j, i)];
                    acc.sum[(i, j)] += sym;
                    acc.sum_sq[(i, j)] += sym * sym;
                    acc.asym_sum[(i, j)] += asym;
                    acc.asym_sum_sq[(i, j)] += asym * asym;
                }
            }
        }
        acc
    });
    let mut sum = Array2::zeros((nx, nx));
    let mut sum_sq = Array2::zeros((nx, nx));
    let mut asym_sum = Array2::zeros((nx, nx));
    let mut asym_sum_sq = Array2::zeros((nx, nx));
    for acc in partials {
        sum += &acc.sum;
        sum_sq += &acc.sum_sq;
        asym_sum += &acc.asym_sum;
        asym_sum_sq += &acc.asym_sum_sq;
    }
    let nf = samples as f64;
    let mean = sum.mapv(|v| v / nf);
    let asym_mean = asym_sum.mapv(|v| v / nf);
    let mut se = Array2::zeros((nx, nx));
    let mut asym_se = Array2::zeros((nx, nx));
    for i in 0..nx {
        for j in 0..nx {
            let var = (sum_sq[(i, j)] / nf - mean[(i, j)].powi(2)).max(0.0) / (nf - 1.0);
            se[(i, j)] = var.sqrt();
            let avar = (asym_sum_sq[(i, j)] / nf - asym_mean[(i, j)].powi(2)).max(0.0) / (nf - 1.0);
            asym_se[(i, j)] = avar.sqrt();
        }
    }
    Ok(KernelEstimate { mean, se, asym_mean, asym_se, samples, warnings })
}
