//! Periodic grid on the unit torus and the spectral toolbox used by the
//! solvers and norm diagnostics.
//!
//! Fourier coefficients are normalized so that `c[l] = (1/n) sum_j u_j e^{-2pi i l x_j}`,
//! which makes the discrete Parseval identity read `sum_l |c_l|^2 = int u^2 dx`
//! with the trapezoidal measure `dx = 1/n`.

use std::sync::Arc;

use ndarray::Array1;
use rustfft::{num_complex::Complex64, Fft, FftPlanner};

/// Uniform periodic grid on `[0,1)` with cached FFT plans.
#[derive(Clone)]
pub struct SpectralGrid {
    nx: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("nx", &self.nx).finish()
    }
}

impl SpectralGrid {
    pub fn new(nx: usize) -> Self {
        assert!(nx >= 2, "grid needs at least two points");
        let mut planner = FftPlanner::new();
        Self {
            nx,
            forward: planner.plan_fft_forward(nx),
            inverse: planner.plan_fft_inverse(nx),
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    /// Grid points `x_j = j/n`.
    pub fn points(&self) -> Array1<f64> {
        Array1::from_iter((0..self.nx).map(|j| j as f64 / self.nx as f64))
    }

    /// Signed frequency of FFT bin `i` (Nyquist kept positive).
    pub fn frequency(&self, i: usize) -> i64 {
        if i <= self.nx / 2 {
            i as i64
        } else {
            i as i64 - self.nx as i64
        }
    }

    /// Normalized forward transform of a real field.
    pub fn fft(&self, field: &[f64]) -> Vec<Complex64> {
        assert_eq!(field.len(), self.nx);
        let mut buf: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.nx as f64;
        for c in &mut buf {
            *c *= scale;
        }
        buf
    }

    /// Inverse of [`Self::fft`]; imaginary residue of a Hermitian spectrum is dropped.
    pub fn ifft(&self, coeffs: &[Complex64]) -> Array1<f64> {
        assert_eq!(coeffs.len(), self.nx);
        let mut buf = coeffs.to_vec();
        self.inverse.process(&mut buf);
        Array1::from_iter(buf.iter().map(|c| c.re))
    }

    /// Spectral derivative of the given order.
    ///
    /// The Nyquist bin is zeroed for odd orders, the usual convention for
    /// real data; all fields in this crate are band-limited well below it.
    pub fn derivative(&self, field: &Array1<f64>, order: usize) -> Array1<f64> {
        if order == 0 {
            return field.clone();
        }
        let mut coeffs = self.fft(field.as_slice().unwrap());
        for (i, c) in coeffs.iter_mut().enumerate() {
            let l = self.frequency(i);
            if order % 2 == 1 && self.nx % 2 == 0 && i == self.nx / 2 {
                *c = Complex64::new(0.0, 0.0);
                continue;
            }
            let ik = Complex64::new(0.0, 2.0 * std::f64::consts::PI * l as f64);
            *c *= ik.powu(order as u32);
        }
        self.ifft(&coeffs)
    }

    /// Exact shift of a band-limited field: returns `x -> u(x - s)`.
    pub fn shift(&self, field: &Array1<f64>, displacement: f64) -> Array1<f64> {
        let mut coeffs = self.fft(field.as_slice().unwrap());
        self.apply_shift_phases(&mut coeffs, displacement);
        self.ifft(&coeffs)
    }

    /// Multiplies coefficient `l` by `e^{-2 pi i l s}` in place.
    pub fn apply_shift_phases(&self, coeffs: &mut [Complex64], displacement: f64) {
        for (i, c) in coeffs.iter_mut().enumerate() {
            let l = self.frequency(i) as f64;
            let phase = -2.0 * std::f64::consts::PI * l * displacement;
            *c *= Complex64::new(phase.cos(), phase.sin());
        }
    }

    /// `L^2(0,1)` norm with the grid quadrature weight.
    pub fn l2_norm(&self, field: &Array1<f64>) -> f64 {
        (field.iter().map(|v| v * v).sum::<f64>() * self.dx()).sqrt()
    }

    pub fn inner(&self, a: &Array1<f64>, b: &Array1<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>() * self.dx()
    }

    pub fn sup_norm(&self, field: &Array1<f64>) -> f64 {
        field.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `sup |u| + sup |u'|`, the C^1 norm used for hitting times.
    pub fn c1_norm(&self, field: &Array1<f64>) -> f64 {
        self.sup_norm(field) + self.sup_norm(&self.derivative(field, 1))
    }

    /// Squared Sobolev norm `sum_l (1 + (2 pi l)^2)^s |c_l|^2`; `s` may be
    /// negative or fractional.
    pub fn sobolev_norm_sq(&self, field: &Array1<f64>, s: f64) -> f64 {
        let coeffs = self.fft(field.as_slice().unwrap());
        coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let l = self.frequency(i) as f64;
                let w = 1.0 + (2.0 * std::f64::consts::PI * l).powi(2);
                w.powf(s) * c.norm_sqr()
            })
            .sum()
    }
}
