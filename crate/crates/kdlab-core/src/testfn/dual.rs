//! Forward-mode scalars and dual fields.
//!
//! Every functional in the corrector family is polynomial in the driver
//! modes with coefficients that are smooth in `(f, z)`. Evaluating those
//! coefficients over dual numbers yields exact directional derivatives in
//! `f` and `z`; no finite differencing enters the calculus.

use ndarray::{Array1, Array2};
use std::ops::{Add, Mul, Neg, Sub};

use crate::grid::SpectralGrid;
use crate::velocity::VelocityModel;

/// Value plus directional derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: f64,
}

impl Jet {
    pub const ZERO: Jet = Jet { v: 0.0, d: 0.0 };
    pub const ONE: Jet = Jet { v: 1.0, d: 0.0 };

    pub fn constant(v: f64) -> Self {
        Jet { v, d: 0.0 }
    }

    pub fn scale(self, c: f64) -> Self {
        Jet { v: self.v * c, d: self.d * c }
    }

    pub fn sin(self) -> Self {
        Jet { v: self.v.sin(), d: self.v.cos() * self.d }
    }

    pub fn cos(self) -> Self {
        Jet { v: self.v.cos(), d: -self.v.sin() * self.d }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet { v: self.v * o.v, d: self.v * o.d + self.d * o.v }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { v: -self.v, d: -self.d }
    }
}

/// Grid field with a directional perturbation.
#[derive(Debug, Clone)]
pub struct DualX {
    pub v: Array1<f64>,
    pub d: Array1<f64>,
}

impl DualX {
    pub fn plain(v: Array1<f64>) -> Self {
        let d = Array1::zeros(v.len());
        Self { v, d }
    }

    pub fn inner(&self, w: &Array1<f64>, dx: f64) -> Jet {
        Jet {
            v: self.v.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>() * dx,
            d: self.d.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>() * dx,
        }
    }

    pub fn derivative(&self, grid: &SpectralGrid, order: usize) -> DualX {
        DualX { v: grid.derivative(&self.v, order), d: grid.derivative(&self.d, order) }
    }

    pub fn mul_field(&self, w: &Array1<f64>) -> DualX {
        DualX { v: &self.v * w, d: &self.d * w }
    }

    pub fn add(&self, other: &DualX) -> DualX {
        DualX { v: &self.v + &other.v, d: &self.d + &other.d }
    }
}

/// Phase-space field with a directional perturbation.
#[derive(Debug, Clone)]
pub struct DualPhase {
    pub v: Array2<f64>,
    pub d: Array2<f64>,
}

impl DualPhase {
    pub fn plain(v: Array2<f64>) -> Self {
        let d = Array2::zeros(v.raw_dim());
        Self { v, d }
    }

    pub fn with_direction(v: Array2<f64>, d: Array2<f64>) -> Self {
        assert_eq!(v.raw_dim(), d.raw_dim());
        Self { v, d }
    }

    pub fn density(&self, model: &VelocityModel) -> DualX {
        DualX {
            v: model.density(&self.v).expect("shape checked by caller"),
            d: model.density(&self.d).expect("shape checked by caller"),
        }
    }

    /// Velocity-averaged transport `sum_k mu_k a_k d_x f_k`.
    pub fn abar(&self, model: &VelocityModel, grid: &SpectralGrid) -> DualX {
        self.weighted_derivative(model, grid, 1, |a| a)
    }

    /// Velocity-averaged squared transport `sum_k mu_k a_k^2 d_xx f_k`.
    pub fn abar2(&self, model: &VelocityModel, grid: &SpectralGrid) -> DualX {
        self.weighted_derivative(model, grid, 2, |a| a * a)
    }

    /// Velocity-weighted average without differentiation, `sum_k mu_k a_k f_k`.
    pub fn a_average(&self, model: &VelocityModel) -> DualX {
        let nx = self.v.ncols();
        let mut out = DualX { v: Array1::zeros(nx), d: Array1::zeros(nx) };
        for k in 0..model.nodes() {
            let w = model.weights()[k] * model.velocity(k, 0);
            if w == 0.0 {
                continue;
            }
            out.v.scaled_add(w, &self.v.row(k).to_owned());
            out.d.scaled_add(w, &self.d.row(k).to_owned());
        }
        out
    }

    fn weighted_derivative(
        &self,
        model: &VelocityModel,
        grid: &SpectralGrid,
        order: usize,
        weight: impl Fn(f64) -> f64,
    ) -> DualX {
        let nx = self.v.ncols();
        let mut out = DualX { v: Array1::zeros(nx), d: Array1::zeros(nx) };
        for k in 0..model.nodes() {
            let w = model.weights()[k] * weight(model.velocity(k, 0));
            if w == 0.0 {
                continue;
            }
            let dv = grid.derivative(&self.v.row(k).to_owned(), order);
            let dd = grid.derivative(&self.d.row(k).to_owned(), order);
            out.v.scaled_add(w, &dv);
            out.d.scaled_add(w, &dd);
        }
        out
    }

    /// Rows multiplied pointwise by a spatial field.
    pub fn mul_field(&self, w: &Array1<f64>) -> DualPhase {
        let mut v = self.v.clone();
        let mut d = self.d.clone();
        for mut row in v.rows_mut() {
            for (j, r) in row.iter_mut().enumerate() {
                *r *= w[j];
            }
        }
        for mut row in d.rows_mut() {
            for (j, r) in row.iter_mut().enumerate() {
                *r *= w[j];
            }
        }
        DualPhase { v, d }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn jet_product_rule() {
        let a = Jet { v: 2.0, d: 3.0 };
        let b = Jet { v: -1.0, d: 0.5 };
        let p = a * b;
        assert_abs_diff_eq!(p.v, -2.0);
        assert_abs_diff_eq!(p.d, 2.0 * 0.5 + 3.0 * (-1.0));
    }

    #[test]
    fn jet_trig_chain_rule() {
        let u = Jet { v: 0.3, d: 2.0 };
        let s = u.sin();
        assert_abs_diff_eq!(s.d, 0.3f64.cos() * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn abar_of_equilibrium_is_centered() {
        let grid = SpectralGrid::new(32);
        let model = VelocityModel::two_velocity();
        let rho = grid.points().mapv(|x| (2.0 * std::f64::consts::PI * x).cos());
        let f = crate::kinetic::equilibrium_data(&model, &rho);
        let dual = DualPhase::plain(f);
        let abar = dual.abar(&model, &grid);
        for v in abar.v.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }
}
