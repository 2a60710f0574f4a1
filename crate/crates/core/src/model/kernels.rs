use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::space::{TraitSpace, TraitValue, MAX_DIM};
use crate::quadrature::{normal_cdf, normal_pdf};

/// A function of the trait only.
pub type TraitFn = Arc<dyn Fn(TraitValue) -> f64 + Send + Sync>;
/// A per-capita rate depending on the trait and on the interaction value.
pub type RateFn = Arc<dyn Fn(TraitValue, f64) -> f64 + Send + Sync>;

pub fn constant_fn(c: f64) -> TraitFn {
    Arc::new(move |_| c)
}

/// Interaction kernel `U(h)` or `V(h)` evaluated on `h = focal - other`.
///
/// Zero and constant kernels are kept apart from general ones so the simulators and
/// solvers can skip per-pair evaluations.
#[derive(Clone)]
pub enum Kernel {
    Zero,
    Constant(f64),
    Function(Arc<dyn Fn(TraitValue) -> f64 + Send + Sync>),
}

impl Kernel {
    pub fn function<F: Fn(TraitValue) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Kernel::Function(Arc::new(f))
    }

    /// `c * exp(-|h|^2 / (2 w^2))`.
    pub fn gaussian(height: f64, width: f64) -> Self {
        Kernel::function(move |h: TraitValue| height * (-0.5 * h.norm_sq() / (width * width)).exp())
    }

    #[inline]
    pub fn eval(&self, h: TraitValue) -> f64 {
        match self {
            Kernel::Zero => 0.0,
            Kernel::Constant(c) => *c,
            Kernel::Function(f) => f(h),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Kernel::Zero)
    }
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Zero => write!(f, "Kernel::Zero"),
            Kernel::Constant(c) => write!(f, "Kernel::Constant({c})"),
            Kernel::Function(_) => write!(f, "Kernel::Function(..)"),
        }
    }
}

/// Isotropic Gaussian mutation law centred on the parent, conditioned on staying in the
/// trait space.
///
/// Sampling rejects unconditioned draws that leave the box, which realizes the
/// conditioning exactly; the density is the normal density divided by its mass in the box.
#[derive(Debug, Clone)]
pub struct GaussianMutation {
    sigma: f64,
    space: TraitSpace,
}

impl GaussianMutation {
    pub fn new(sigma: f64, space: TraitSpace) -> Self {
        assert!(
            sigma > 0.0 && sigma.is_finite(),
            "mutation sigma must be positive"
        );
        GaussianMutation { sigma, space }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn space(&self) -> &TraitSpace {
        &self.space
    }

    /// Same law with the standard deviation multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        GaussianMutation::new(self.sigma * factor, self.space.clone())
    }

    /// Probability that an unconditioned step from `x` stays in the space.
    pub fn mass(&self, x: &TraitValue) -> f64 {
        match self.space.bounds() {
            None => 1.0,
            Some(b) => b
                .iter()
                .enumerate()
                .map(|(k, &(lo, hi))| {
                    normal_cdf((hi - x.0[k]) / self.sigma) - normal_cdf((lo - x.0[k]) / self.sigma)
                })
                .product(),
        }
    }

    /// Density `M(x, z)`.
    pub fn density(&self, x: &TraitValue, z: &TraitValue) -> f64 {
        if !self.space.contains(z) {
            return 0.0;
        }
        self.envelope_density(&(*z - *x)) / self.mass(x)
    }

    /// Unconditioned step density `M̄(h)`.
    pub fn envelope_density(&self, h: &TraitValue) -> f64 {
        (0..self.space.dim())
            .map(|k| normal_pdf(h.0[k], self.sigma))
            .product()
    }

    /// Constant `C` with `M(x, z) <= C M̄(z - x)`: the inverse of the smallest mass,
    /// attained at a corner of the box.
    pub fn envelope_constant(&self) -> f64 {
        match self.space.bounds() {
            None => 1.0,
            Some(b) => {
                let min_mass: f64 = b
                    .iter()
                    .map(|&(lo, hi)| normal_cdf((hi - lo) / self.sigma) - 0.5)
                    .product();
                1.0 / min_mass
            }
        }
    }

    /// Draws an unconditioned step from `M̄`.
    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> TraitValue {
        let mut c = [0.0; MAX_DIM];
        for v in c.iter_mut().take(self.space.dim()) {
            let z: f64 = rng.sample(StandardNormal);
            *v = self.sigma * z;
        }
        TraitValue(c)
    }

    /// Draws a mutant trait from `M(x, .)` by rejection.
    pub fn sample<R: Rng + ?Sized>(&self, x: &TraitValue, rng: &mut R) -> TraitValue {
        loop {
            let z = *x + self.sample_step(rng);
            if self.space.contains(&z) {
                return z;
            }
        }
    }
}
