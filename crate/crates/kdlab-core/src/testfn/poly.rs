//! Quadratic polynomials in the driver mode coefficients.
//!
//! The whole corrector family has n-dependence of degree at most two, so the
//! OU semigroup, resolvent, generator and carre du champ act on this family
//! by exact rules: no quadrature against the invariant measure is needed.

use super::dual::Jet;

/// `p(n) = c0 + sum_j lin_j n_j + sum_{j,k} quad_{jk} n_j n_k` with
/// symmetric `quad`, coefficients carried as jets.
#[derive(Debug, Clone)]
pub struct JetPoly {
    pub c0: Jet,
    pub lin: Vec<Jet>,
    pub quad: Vec<Jet>,
}

impl JetPoly {
    pub fn zero(nm: usize) -> Self {
        Self { c0: Jet::ZERO, lin: vec![Jet::ZERO; nm], quad: vec![Jet::ZERO; nm * nm] }
    }

    pub fn nm(&self) -> usize {
        self.lin.len()
    }

    pub fn add(&self, other: &JetPoly) -> JetPoly {
        let mut out = self.clone();
        out.c0 = out.c0 + other.c0;
        for (a, b) in out.lin.iter_mut().zip(other.lin.iter()) {
            *a = *a + *b;
        }
        for (a, b) in out.quad.iter_mut().zip(other.quad.iter()) {
            *a = *a + *b;
        }
        out
    }

    pub fn scale(&self, c: f64) -> JetPoly {
        JetPoly {
            c0: self.c0.scale(c),
            lin: self.lin.iter().map(|j| j.scale(c)).collect(),
            quad: self.quad.iter().map(|j| j.scale(c)).collect(),
        }
    }

    pub fn eval(&self, n: &[f64]) -> Jet {
        let nm = self.nm();
        let mut acc = self.c0;
        for j in 0..nm {
            acc = acc + self.lin[j].scale(n[j]);
        }
        for j in 0..nm {
            for k in 0..nm {
                acc = acc + self.quad[j * nm + k].scale(n[j] * n[k]);
            }
        }
        acc
    }

    pub fn values(&self) -> Poly {
        Poly {
            c0: self.c0.v,
            lin: self.lin.iter().map(|j| j.v).collect(),
            quad: self.quad.iter().map(|j| j.v).collect(),
        }
    }

    /// Mean against the centered Gaussian with per-mode variances `var`.
    pub fn mean_nu(&self, var: &[f64]) -> Jet {
        let nm = self.nm();
        let mut acc = self.c0;
        for j in 0..nm {
            acc = acc + self.quad[j * nm + j].scale(var[j]);
        }
        acc
    }
}

/// Value-level polynomial; hosts the OU generator rules.
#[derive(Debug, Clone)]
pub struct Poly {
    pub c0: f64,
    pub lin: Vec<f64>,
    pub quad: Vec<f64>,
}

impl Poly {
    pub fn nm(&self) -> usize {
        self.lin.len()
    }

    pub fn eval(&self, n: &[f64]) -> f64 {
        let nm = self.nm();
        let mut acc = self.c0;
        for j in 0..nm {
            acc += self.lin[j] * n[j];
        }
        for j in 0..nm {
            for k in 0..nm {
                acc += self.quad[j * nm + k] * n[j] * n[k];
            }
        }
        acc
    }

    /// `d p / d n_j` at `n`.
    pub fn partial(&self, j: usize, n: &[f64]) -> f64 {
        let nm = self.nm();
        let mut acc = self.lin[j];
        for k in 0..nm {
            acc += 2.0 * self.quad[j * nm + k] * n[k];
        }
        acc
    }

    /// OU generator `B p = -theta sum_j n_j dp/dn_j + (1/2) sum_j sigma_j^2 d2p/dn_j^2`.
    pub fn b_apply(&self, n: &[f64], theta: f64, sigma_sq: &[f64]) -> f64 {
        let nm = self.nm();
        let mut acc = 0.0;
        for j in 0..nm {
            acc -= theta * n[j] * self.partial(j, n);
            acc += sigma_sq[j] * self.quad[j * nm + j];
        }
        acc
    }

    /// Carre du champ `Gamma(p) = B(p^2) - 2 p B p = sum_j sigma_j^2 (dp/dn_j)^2`.
    pub fn gamma(&self, n: &[f64], sigma_sq: &[f64]) -> f64 {
        (0..self.nm()).map(|j| sigma_sq[j] * self.partial(j, n).powi(2)).sum()
    }

    /// Mean against the centered Gaussian with variances `var`.
    pub fn mean_nu(&self, var: &[f64]) -> f64 {
        let nm = self.nm();
        self.c0 + (0..nm).map(|j| self.quad[j * nm + j] * var[j]).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn example() -> Poly {
        // p(n) = 1 + 2 n0 - n1 + 3 n0^2 + 2 n0 n1
        let mut quad = vec![0.0; 4];
        quad[0] = 3.0;
        quad[1] = 1.0;
        quad[2] = 1.0;
        Poly { c0: 1.0, lin: vec![2.0, -1.0], quad }
    }

    #[test]
    fn eval_and_partials() {
        let p = example();
        let n = [0.5, -1.0];
        assert_abs_diff_eq!(p.eval(&n), 1.0 + 1.0 + 1.0 + 0.75 - 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.partial(0, &n), 2.0 + 6.0 * 0.5 + 2.0 * -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.partial(1, &n), -1.0 + 2.0 * 0.5, epsilon = 1e-14);
    }

    #[test]
    fn b_on_linear_mode_is_minus_theta_n() {
        // theta n |-> B = -theta n_j
        let p = Poly { c0: 0.0, lin: vec![0.0, 1.0], quad: vec![0.0; 4] };
        let n = [0.3, 2.0];
        assert_abs_diff_eq!(p.b_apply(&n, 1.7, &[0.5, 0.5]), -1.7 * 2.0, epsilon = 1e-14);
    }

    #[test]
    fn gamma_is_weighted_square_of_gradient() {
        let p = example();
        let n = [0.4, 0.9];
        let s2 = [0.7, 0.2];
        let expected: f64 = s2[0] * p.partial(0, &n).powi(2) + s2[1] * p.partial(1, &n).powi(2);
        assert_abs_diff_eq!(p.gamma(&n, &s2), expected, epsilon = 1e-14);
    }

    #[test]
    fn mean_uses_diagonal_variances() {
        let p = example();
        assert_abs_diff_eq!(p.mean_nu(&[0.5, 2.0]), 1.0 + 3.0 * 0.5, epsilon = 1e-14);
    }

    #[test]
    fn jet_poly_eval_carries_derivatives() {
        let mut jp = JetPoly::zero(2);
        jp.c0 = Jet { v: 1.0, d: 0.5 };
        jp.lin[0] = Jet { v: 2.0, d: -1.0 };
        let out = jp.eval(&[3.0, 0.0]);
        assert_abs_diff_eq!(out.v, 7.0);
        assert_abs_diff_eq!(out.d, 0.5 - 3.0);
    }
}
