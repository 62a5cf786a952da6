//! Discrete velocity space: nodes, weights, equilibrium profile and the
//! relaxation operator, together with the derived diffusion matrix.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

const INVARIANT_TOL: f64 = 1e-12;

/// A finite velocity space `(V, mu)` with equilibrium `M` and velocity map `a`.
///
/// Phase-space grids are stored velocity-major: shape `(n_nodes, nx)`.
#[derive(Debug, Clone)]
pub struct VelocityModel {
    labels: Vec<String>,
    weights: Vec<f64>,
    equilibrium: Vec<f64>,
    velocities: Array2<f64>,
    dim: usize,
}

impl VelocityModel {
    pub fn new(
        labels: Vec<String>,
        weights: Vec<f64>,
        equilibrium: Vec<f64>,
        velocities: Array2<f64>,
    ) -> Result<Self> {
        let n = labels.len();
        if weights.len() != n || equilibrium.len() != n || velocities.nrows() != n {
            return Err(Error::Shape(format!(
                "velocity model fields disagree on node count: {} labels, {} weights, {} equilibria, {} velocity rows",
                n,
                weights.len(),
                equilibrium.len(),
                velocities.nrows()
            )));
        }
        let dim = velocities.ncols();
        let model = Self { labels, weights, equilibrium, velocities, dim };
        model.validate()?;
        Ok(model)
    }

    /// Symmetric two-velocity model: `a = +-1`, `M = 1`, uniform weights.
    /// Satisfies every hypothesis exactly in floating point.
    pub fn two_velocity() -> Self {
        Self::new(
            vec!["-".into(), "+".into()],
            vec![0.5, 0.5],
            vec![1.0, 1.0],
            Array2::from_shape_vec((2, 1), vec![-1.0, 1.0]).unwrap(),
        )
        .expect("two-velocity model is valid by construction")
    }

    /// Gauss-Hermite style model with `n` nodes: quadrature nodes rescaled to
    /// `[-1, 1]` and a renormalized Gaussian equilibrium. Node symmetry is
    /// enforced exactly so that the centering identity holds in floating point.
    pub fn gauss_hermite(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config("hermite model needs at least 2 nodes".into()));
        }
        let (mut nodes, mut weights) = hermite_rule(n);
        // symmetrize node/weight pairs so +-v cancel exactly
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let v = 0.5 * (nodes[j] - nodes[i]);
            nodes[i] = -v;
            nodes[j] = v;
            let w = 0.5 * (weights[i] + weights[j]);
            weights[i] = w;
            weights[j] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        let wsum: f64 = weights.iter().sum();
        let mu: Vec<f64> = weights.iter().map(|w| w / wsum).collect();
        let vmax = nodes[n - 1].abs().max(1e-12);
        let a: Vec<f64> = nodes.iter().map(|v| (v / vmax).clamp(-1.0, 1.0)).collect();
        let raw_m: Vec<f64> = a.iter().map(|v| (-0.5 * v * v).exp()).collect();
        let msum: f64 = raw_m.iter().zip(mu.iter()).map(|(m, w)| m * w).sum();
        let m: Vec<f64> = raw_m.iter().map(|v| v / msum).collect();
        Self::new(
            (0..n).map(|i| format!("h{i}")).collect(),
            mu,
            m,
            Array2::from_shape_vec((n, 1), a).unwrap(),
        )
    }

    fn validate(&self) -> Result<()> {
        let wsum: f64 = self.weights.iter().sum();
        if (wsum - 1.0).abs() > INVARIANT_TOL {
            return Err(Error::DegenerateModel(format!("weights sum to {wsum}, expected 1")));
        }
        let msum: f64 = self.weights.iter().zip(self.equilibrium.iter()).map(|(w, m)| w * m).sum();
        if (msum - 1.0).abs() > INVARIANT_TOL {
            return Err(Error::DegenerateModel(format!("equilibrium mass is {msum}, expected 1")));
        }
        if self.equilibrium.iter().any(|&m| m <= 0.0) {
            return Err(Error::DegenerateModel("equilibrium must be strictly positive".into()));
        }
        for c in 0..self.dim {
            let mean: f64 = (0..self.nodes())
                .map(|k| self.velocities[(k, c)] * self.equilibrium[k] * self.weights[k])
                .sum();
            if mean.abs() > INVARIANT_TOL {
                return Err(Error::DegenerateModel(format!(
                    "velocity component {c} not centered for M d mu: mean {mean:e}"
                )));
            }
        }
        self.diffusion_matrix()?;
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn equilibrium(&self) -> &[f64] {
        &self.equilibrium
    }

    /// Velocity component `c` of node `k`.
    pub fn velocity(&self, k: usize, c: usize) -> f64 {
        self.velocities[(k, c)]
    }

    /// Scalar velocities, valid for one-dimensional models.
    pub fn velocities_1d(&self) -> Result<Vec<f64>> {
        if self.dim != 1 {
            return Err(Error::Config(format!("expected 1-d velocities, model has d={}", self.dim)));
        }
        Ok((0..self.nodes()).map(|k| self.velocities[(k, 0)]).collect())
    }

    fn check_shape(&self, f: &Array2<f64>) -> Result<()> {
        if f.nrows() != self.nodes() {
            return Err(Error::Shape(format!(
                "phase-space field has {} velocity rows, model has {} nodes",
                f.nrows(),
                self.nodes()
            )));
        }
        Ok(())
    }

    /// Velocity average `rho(x) = sum_k f(x,k) mu_k`.
    pub fn density(&self, f: &Array2<f64>) -> Result<Array1<f64>> {
        self.check_shape(f)?;
        let nx = f.ncols();
        let mut rho = Array1::zeros(nx);
        for (k, row) in f.rows().into_iter().enumerate() {
            let w = self.weights[k];
            for (r, v) in rho.iter_mut().zip(row.iter()) {
                *r += w * v;
            }
        }
        Ok(rho)
    }

    /// Relaxation operator `Lf = rho M - f`.
    pub fn bgk_apply(&self, f: &Array2<f64>) -> Result<Array2<f64>> {
        let rho = self.density(f)?;
        let mut out = Array2::zeros(f.raw_dim());
        for (k, mut row) in out.rows_mut().into_iter().enumerate() {
            let m = self.equilibrium[k];
            for (j, v) in row.iter_mut().enumerate() {
                *v = rho[j] * m - f[(k, j)];
            }
        }
        Ok(out)
    }

    /// `K = sum_k a_k (x) a_k M_k mu_k`, checked symmetric positive definite.
    pub fn diffusion_matrix(&self) -> Result<Array2<f64>> {
        let d = self.dim;
        let mut k_mat = Array2::zeros((d, d));
        for k in 0..self.nodes() {
            let w = self.equilibrium[k] * self.weights[k];
            for i in 0..d {
                for j in 0..d {
                    k_mat[(i, j)] += self.velocities[(k, i)] * self.velocities[(k, j)] * w;
                }
            }
        }
        let mat = nalgebra::DMatrix::from_fn(d, d, |i, j| k_mat[(i, j)]);
        if nalgebra::Cholesky::new(mat).is_none() {
            return Err(Error::DegenerateModel(
                "diffusion matrix is not positive definite".into(),
            ));
        }
        Ok(k_mat)
    }

    /// Scalar diffusion coefficient for one-dimensional models.
    pub fn diffusion_scalar(&self) -> Result<f64> {
        let k = self.diffusion_matrix()?;
        if self.dim != 1 {
            return Err(Error::Config("diffusion_scalar requires d=1".into()));
        }
        Ok(k[(0, 0)])
    }

    /// Weighted phase-space norm `(sum_x dx sum_k f^2 / M_k mu_k)^{1/2}`.
    pub fn fspace_norm(&self, f: &Array2<f64>, dx: f64) -> f64 {
        self.fspace_norm_sq(f, dx).sqrt()
    }

    pub fn fspace_norm_sq(&self, f: &Array2<f64>, dx: f64) -> f64 {
        let mut total = 0.0;
        for (k, row) in f.rows().into_iter().enumerate() {
            let w = self.weights[k] / self.equilibrium[k];
            total += w * row.iter().map(|v| v * v).sum::<f64>();
        }
        total * dx
    }

    /// `max_k |a_k|`.
    pub fn a_sup_norm(&self) -> f64 {
        (0..self.nodes())
            .map(|k| {
                (0..self.dim)
                    .map(|c| self.velocities[(k, c)].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0f64, f64::max)
    }

    /// `int |a|^2 M d mu`, the trace of the diffusion matrix.
    pub fn a_l2m_norm_sq(&self) -> f64 {
        (0..self.nodes())
            .map(|k| {
                let a2: f64 = (0..self.dim).map(|c| self.velocities[(k, c)].powi(2)).sum();
                a2 * self.equilibrium[k] * self.weights[k]
            })
            .sum()
    }
}

/// Gauss-Hermite nodes and weights for the weight `e^{-t^2}` via the
/// Golub-Welsch eigenvalue problem on the Jacobi matrix.
fn hermite_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let w = std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, i)].powi(2);
            (node, w)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn density_two_velocity_hand_quadrature() {
        let model = VelocityModel::two_velocity();
        let f = array![[1.0], [3.0]];
        let rho = model.density(&f).unwrap();
        assert_abs_diff_eq!(rho[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn density_of_equilibrium_profile() {
        let model = VelocityModel::two_velocity();
        let rho0 = [0.7, -1.2, 3.0];
        let mut f = Array2::zeros((2, 3));
        for k in 0..2 {
            for j in 0..3 {
                f[(k, j)] = rho0[j] * model.equilibrium()[k];
            }
        }
        let rho = model.density(&f).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(rho[j], rho0[j], epsilon = 1e-14);
        }
    }

    #[test]
    fn bgk_two_velocity_example() {
        let model = VelocityModel::two_velocity();
        let f = array![[1.0], [3.0]];
        let lf = model.bgk_apply(&f).unwrap();
        assert_abs_diff_eq!(lf[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lf[(1, 0)], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn bgk_annihilates_equilibrium_and_is_minus_projection() {
        let model = VelocityModel::two_velocity();
        let f = array![[0.3, -2.0], [1.7, 0.4]];
        let lf = model.bgk_apply(&f).unwrap();
        let llf = model.bgk_apply(&lf).unwrap();
        for (a, b) in llf.iter().zip(lf.iter()) {
            assert_abs_diff_eq!(*a, -b, epsilon = 1e-14);
        }
        // mass neutrality
        let rho_l = model.density(&lf).unwrap();
        for v in rho_l.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn diffusion_matrix_two_velocity_is_one() {
        let model = VelocityModel::two_velocity();
        let k = model.diffusion_matrix().unwrap();
        assert_abs_diff_eq!(k[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn diffusion_matrix_four_velocity_2d() {
        // a = (+-1, 0), (0, +-1), M = 1, uniform weights
        let model = VelocityModel::new(
            vec!["e".into(), "w".into(), "n".into(), "s".into()],
            vec![0.25; 4],
            vec![1.0; 4],
            array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
        )
        .unwrap();
        let k = model.diffusion_matrix().unwrap();
        assert_abs_diff_eq!(k[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(k[(1, 1)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(k[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_velocities_rejected() {
        let result = VelocityModel::new(
            vec!["a".into(), "b".into()],
            vec![0.5, 0.5],
            vec![1.0, 1.0],
            array![[0.0], [0.0]],
        );
        assert!(matches!(result, Err(Error::DegenerateModel(_))));
    }

    #[test]
    fn fspace_norm_of_unit_equilibrium() {
        let model = VelocityModel::two_velocity();
        let nx = 16;
        let f = Array2::from_elem((2, nx), 1.0);
        assert_abs_diff_eq!(model.fspace_norm(&f, 1.0 / nx as f64), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn fspace_pythagoras() {
        let model = VelocityModel::two_velocity();
        let dx = 0.125;
        let f = array![[0.4, -1.0, 2.0], [1.1, 0.2, -0.7]];
        let lf = model.bgk_apply(&f).unwrap();
        let rho = model.density(&f).unwrap();
        let mut eq = Array2::zeros(f.raw_dim());
        for k in 0..2 {
            for j in 0..3 {
                eq[(k, j)] = rho[j] * model.equilibrium()[k];
            }
        }
        let total = model.fspace_norm_sq(&f, dx);
        let parts = model.fspace_norm_sq(&eq, dx) + model.fspace_norm_sq(&lf, dx);
        assert_abs_diff_eq!(total, parts, epsilon = 1e-12);
    }

    #[test]
    fn hermite_model_satisfies_invariants() {
        for n in [3, 5, 8] {
            let model = VelocityModel::gauss_hermite(n).unwrap();
            assert!(model.a_sup_norm() <= 1.0 + 1e-12);
            let k = model.diffusion_matrix().unwrap();
            assert!(k[(0, 0)] > 0.0);
        }
    }

    #[test]
    fn diffusion_matrix_invariant_under_relabeling() {
        let model = VelocityModel::gauss_hermite(5).unwrap();
        let n = model.nodes();
        let perm: Vec<usize> = (0..n).rev().collect();
        let permuted = VelocityModel::new(
            perm.iter().map(|&i| model.labels()[i].clone()).collect(),
            perm.iter().map(|&i| model.weights()[i]).collect(),
            perm.iter().map(|&i| model.equilibrium()[i]).collect(),
            Array2::from_shape_fn((n, 1), |(k, _)| model.velocity(perm[k], 0)),
        )
        .unwrap();
        let k0 = model.diffusion_matrix().unwrap();
        let k1 = permuted.diffusion_matrix().unwrap();
        assert_abs_diff_eq!(k0[(0, 0)], k1[(0, 0)], epsilon = 1e-14);
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let model = VelocityModel::two_velocity();
        let f = Array2::zeros((3, 4));
        assert!(matches!(model.density(&f), Err(Error::Shape(_))));
    }
}
