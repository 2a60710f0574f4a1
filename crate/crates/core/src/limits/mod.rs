//! Deterministic limits: equilibria, monomorphic and dimorphic ODEs, the nonlocal IDE
//! and the reaction-diffusion PDE on a one-dimensional trait grid.

mod field;
mod ode;

use serde::Serialize;
use thiserror::Error;

pub use field::{
    diffusion_coefficient, solve_ide, solve_rd_pde, FieldOptions, FieldSolution, IdeMode,
};
pub use ode::{
    equilibrium_nbar, solve_dimorphic, solve_monomorphic, OdeOptions, PairSeries, TimeSeries,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitError {
    #[error("no positive equilibrium at x = {x}: b(x,0) - d(x,0) = {growth}")]
    NoPositiveEquilibrium { x: f64, growth: f64 },
    #[error("equilibrium search needs monotone rates (set the monotonicity flag)")]
    NotMonotone,
    #[error("clipped negative mass {lost} exceeds 1e-3 of total {total} at t = {t}")]
    NegativeDensityBlowup { lost: f64, total: f64, t: f64 },
    #[error("time step {dt} exceeds the stability bound {bound}")]
    CFLViolation { dt: f64, bound: f64 },
    #[error("step doubling did not reach tolerance {tol} after {steps} steps")]
    NoConvergence { tol: f64, steps: usize },
    #[error("solver needs a one-dimensional bounded trait space")]
    Dimension,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// `N + 1` uniform nodes on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraitGrid {
    lo: f64,
    hi: f64,
    n: usize,
}

impl TraitGrid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self, LimitError> {
        if n < 16 {
            return Err(LimitError::InvalidInput(format!(
                "grid needs at least 16 intervals, got {n}"
            )));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(LimitError::InvalidInput(format!(
                "bad grid interval [{lo}, {hi}]"
            )));
        }
        Ok(TraitGrid { lo, hi, n })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.n {
            self.hi
        } else {
            self.lo + j as f64 * self.dx()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|j| self.node(j)).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        crate::quadrature::trapezoid_weights(self.n, self.dx())
    }

    /// Trapezoid integral of nodal values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let dx = self.dx();
        let n = self.n;
        dx * (values[1..n].iter().sum::<f64>() + 0.5 * (values[0] + values[n]))
    }

    /// Refined grid with twice as many intervals.
    pub fn refined(&self) -> Self {
        TraitGrid {
            lo: self.lo,
            hi: self.hi,
            n: 2 * self.n,
        }
    }
}

/// Nodal density `ξ(x_j) >= 0` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityField {
    pub t: f64,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn new(t: f64, values: Vec<f64>) -> Result<Self, LimitError> {
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(LimitError::InvalidInput(format!(
                "density value {v} is negative or not finite"
            )));
        }
        Ok(DensityField { t, values })
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn<F: Fn(f64) -> f64>(grid: &TraitGrid, f: F) -> Result<Self, LimitError> {
        Self::new(0.0, grid.nodes().into_iter().map(f).collect())
    }

    /// Normalized Gaussian bump of total mass `mass` centred at `x0`.
    pub fn bump(grid: &TraitGrid, x0: f64, width: f64, mass: f64) -> Result<Self, LimitError> {
        let raw = Self::from_fn(grid, |x| (-0.5 * ((x - x0) / width).powi(2)).exp())?;
        let m = grid.integrate(&raw.values);
        Self::new(0.0, raw.values.into_iter().map(|v| v * mass / m).collect())
    }

    pub fn zeros(grid: &TraitGrid) -> Self {
        DensityField {
            t: 0.0,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn mass(&self, grid: &TraitGrid) -> f64 {
        grid.integrate(&self.values)
    }
}
