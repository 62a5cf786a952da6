//! Separating test functions `phi(rho, z) = psi(<rho, xi>) chi(z)` and the
//! corrector/generator calculus built on them.

pub mod calculus;
pub mod dual;
pub mod martingale;
pub mod poly;

use ndarray::Array1;

use crate::grid::SpectralGrid;
use dual::Jet;

/// Scalar profile `psi` with analytic derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Psi {
    Linear,
    Quadratic,
    Sine,
}

impl Psi {
    /// `psi^{(order)}(u)` propagated through the jet `u`.
    pub fn derivative_jet(&self, u: Jet, order: usize) -> Jet {
        match self {
            Psi::Linear => match order {
                0 => u,
                1 => Jet::ONE,
                _ => Jet::ZERO,
            },
            Psi::Quadratic => match order {
                0 => u * u,
                1 => u.scale(2.0),
                2 => Jet::constant(2.0),
                _ => Jet::ZERO,
            },
            Psi::Sine => {
                // derivatives of sin cycle with period four
                let f = |v: f64, r: usize| match r % 4 {
                    0 => v.sin(),
                    1 => v.cos(),
                    2 => -v.sin(),
                    _ => -v.cos(),
                };
                Jet { v: f(u.v, order), d: f(u.v, order + 1) * u.d }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Psi::Linear => "linear",
            Psi::Quadratic => "quadratic",
            Psi::Sine => "sine",
        }
    }
}

/// Functional `chi` of the auxiliary-process argument.
#[derive(Debug, Clone)]
pub enum Chi {
    One,
    /// `chi(z) = cos(<z, eta>)`
    CosInner { eta: Array1<f64> },
}

impl Chi {
    pub fn name(&self) -> &'static str {
        match self {
            Chi::One => "one",
            Chi::CosInner { .. } => "cos-inner",
        }
    }
}

/// An element of the separating class: `phi(rho, z) = psi(<rho, xi>) chi(z)`.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub psi: Psi,
    pub xi: Array1<f64>,
    pub chi: Chi,
    pub label: String,
}

impl TestFunction {
    pub fn new(psi: Psi, xi: Array1<f64>, chi: Chi, label: impl Into<String>) -> Self {
        Self { psi, xi, chi, label: label.into() }
    }

    /// Plain evaluation `psi(<rho, xi>) chi(z)`.
    pub fn eval(&self, grid: &SpectralGrid, rho: &Array1<f64>, z: &Array1<f64>) -> f64 {
        let u = grid.inner(rho, &self.xi);
        let psi = self.psi.derivative_jet(Jet::constant(u), 0).v;
        let chi = match &self.chi {
            Chi::One => 1.0,
            Chi::CosInner { eta } => grid.inner(z, eta).cos(),
        };
        psi * chi
    }
}

/// Constant profile `xi = 1`.
pub fn xi_constant(grid: &SpectralGrid) -> Array1<f64> {
    Array1::ones(grid.nx())
}

/// Single cosine mode.
pub fn xi_cos(grid: &SpectralGrid, l: usize) -> Array1<f64> {
    grid.points().mapv(|x| (2.0 * std::f64::consts::PI * l as f64 * x).cos())
}

/// Smooth periodic bump `exp((cos(2 pi (x - c)) - 1)/w^2)`.
pub fn xi_bump(grid: &SpectralGrid, center: f64, width: f64) -> Array1<f64> {
    grid.points().mapv(|x| (((2.0 * std::f64::consts::PI * (x - center)).cos() - 1.0) / (width * width)).exp())
}

/// The six-element battery used by the statistical experiments: psi spans
/// linear/quadratic/bounded, chi spans trivial/nontrivial.
pub fn default_battery(grid: &SpectralGrid) -> Vec<TestFunction> {
    let eta1 = xi_cos(grid, 1);
    let eta2 = xi_constant(grid);
    vec![
        TestFunction::new(Psi::Linear, xi_constant(grid), Chi::One, "lin-mass"),
        TestFunction::new(Psi::Quadratic, xi_constant(grid), Chi::One, "quad-mass"),
        TestFunction::new(Psi::Sine, xi_cos(grid, 1), Chi::One, "sine-cos1"),
        TestFunction::new(Psi::Linear, xi_cos(grid, 1), Chi::CosInner { eta: eta2.clone() }, "lin-cos1-chi"),
        TestFunction::new(Psi::Quadratic, xi_bump(grid, 0.3, 0.8), Chi::CosInner { eta: eta1 }, "quad-bump-chi"),
        TestFunction::new(Psi::Sine, xi_constant(grid), Chi::CosInner { eta: eta2 }, "sine-mass-chi"),
    ]
}
