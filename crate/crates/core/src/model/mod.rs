//! Trait spaces, demographic rates, interaction and mutation kernels, and the scalings
//! that turn one model into a family indexed by system size.

mod kernels;
mod scaling;
mod space;
mod state;
mod validate;

use std::fmt;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

pub use kernels::{constant_fn, GaussianMutation, Kernel, RateFn, TraitFn};
pub use scaling::{ScaledRates, ScalingMode, ScalingSpec};
pub use space::{TraitSpace, TraitValue, MAX_DIM};
pub use state::{PointMeasureState, TraitClass};
pub use validate::{validate_model, CheckOutcome, ValidationReport};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid trait space: {0}")]
    InvalidSpace(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("assumption violated: {check} at {witness}")]
    HardViolation {
        check: String,
        witness: String,
        report: Box<ValidationReport>,
    },
    #[error("mutation kernel mass {mass} at x = {at} deviates from 1")]
    QuadratureFailure {
        at: String,
        mass: f64,
        report: Box<ValidationReport>,
    },
    #[error("individual index {index} out of range for population of {len}")]
    IndexOutOfRange { index: usize, len: u64 },
}

/// Birth and death rate structure.
#[derive(Clone)]
pub enum Demography {
    /// `b(x, ζ) = b(x)` and `d(x, ζ) = d(x) + α(x) ζ`.
    LinearLogistic {
        birth: TraitFn,
        death: TraitFn,
        alpha: TraitFn,
    },
    General {
        birth: RateFn,
        death: RateFn,
    },
}

/// Constants bounding the rates, kernels and mutation density.
///
/// Death is bounded per interaction value, `d(x, ζ) <= d̄ (1 + ζ / Ū)`, which implies the
/// population-count form `d <= d̄ (1 + I)` because `ζ <= Ū I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelopes {
    pub b_bar: f64,
    pub d_bar: f64,
    pub u_bar: f64,
    pub v_bar: f64,
    /// Mutation density constant `C` in `M(x, z) <= C M̄(z - x)`.
    pub c: f64,
}

/// A complete model. Kernels are stored without any `1/K` factor; those belong to
/// [`ScalingSpec`].
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    space: TraitSpace,
    demography: Demography,
    u: Kernel,
    v: Kernel,
    mu: TraitFn,
    mutation: GaussianMutation,
    envelopes: Envelopes,
    monotone_h5: bool,
    validation: Arc<OnceLock<ValidationReport>>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("space", &self.space)
            .field("linear_logistic", &self.is_linear_logistic())
            .field("u", &self.u)
            .field("v", &self.v)
            .field("sigma", &self.mutation.sigma())
            .field("envelopes", &self.envelopes)
            .field("monotone_h5", &self.monotone_h5)
            .finish()
    }
}

impl ModelSpec {
    pub fn builder(
        name: impl Into<String>,
        space: TraitSpace,
        demography: Demography,
    ) -> ModelBuilder {
        ModelBuilder {
            name: name.into(),
            space,
            demography,
            u: Kernel::Zero,
            v: Kernel::Zero,
            mu: constant_fn(0.0),
            sigma: 0.1,
            envelopes: None,
            c: None,
            monotone_h5: false,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &TraitSpace {
        &self.space
    }

    pub fn demography(&self) -> &Demography {
        &self.demography
    }

    #[inline]
    pub fn birth(&self, x: TraitValue, zeta: f64) -> f64 {
        match &self.demography {
            Demography::LinearLogistic { birth, .. } => birth(x),
            Demography::General { birth, .. } => birth(x, zeta),
        }
    }

    #[inline]
    pub fn death(&self, x: TraitValue, zeta: f64) -> f64 {
        match &self.demography {
            Demography::LinearLogistic { death, alpha, .. } => death(x) + alpha(x) * zeta,
            Demography::General { death, .. } => death(x, zeta),
        }
    }

    #[inline]
    pub fn mu(&self, x: TraitValue) -> f64 {
        (self.mu)(x)
    }

    pub fn mu_fn(&self) -> &TraitFn {
        &self.mu
    }

    pub fn u(&self) -> &Kernel {
        &self.u
    }

    pub fn v(&self) -> &Kernel {
        &self.v
    }

    pub fn mutation(&self) -> &GaussianMutation {
        &self.mutation
    }

    pub fn envelopes(&self) -> Envelopes {
        self.envelopes
    }

    pub fn is_linear_logistic(&self) -> bool {
        matches!(self.demography, Demography::LinearLogistic { .. })
    }

    /// `(b(x), d(x), α(x))` for linear-logistic models.
    pub fn linear_parts(&self, x: TraitValue) -> Option<(f64, f64, f64)> {
        match &self.demography {
            Demography::LinearLogistic {
                birth,
                death,
                alpha,
            } => Some((birth(x), death(x), alpha(x))),
            Demography::General { .. } => None,
        }
    }

    pub fn monotone_h5(&self) -> bool {
        self.monotone_h5
    }

    /// Report of the last successful [`validate_model`] run, if any.
    pub fn validation(&self) -> Option<&ValidationReport> {
        self.validation.get()
    }

    pub(crate) fn mark_validated(&self, report: ValidationReport) {
        let _ = self.validation.set(report);
    }

    /// Copy with a different constant mutation probability. The copy is unvalidated.
    pub fn with_mu(&self, mu: f64) -> ModelSpec {
        let mut m = self.clone();
        m.mu = constant_fn(mu);
        m.validation = Arc::new(OnceLock::new());
        m
    }

    /// Copy with a different mutation standard deviation. The copy is unvalidated.
    pub fn with_sigma(&self, sigma: f64) -> ModelSpec {
        let mut m = self.clone();
        m.mutation = GaussianMutation::new(sigma, self.space.clone());
        m.envelopes.c = m.mutation.envelope_constant();
        m.validation = Arc::new(OnceLock::new());
        m
    }
}

pub struct ModelBuilder {
    name: String,
    space: TraitSpace,
    demography: Demography,
    u: Kernel,
    v: Kernel,
    mu: TraitFn,
    sigma: f64,
    envelopes: Option<(f64, f64, f64, f64)>,
    c: Option<f64>,
    monotone_h5: bool,
}

impl ModelBuilder {
    /// Death interaction kernel `U`.
    pub fn competition(mut self, u: Kernel) -> Self {
        self.u = u;
        self
    }

    /// Birth interaction kernel `V`.
    pub fn birth_interaction(mut self, v: Kernel) -> Self {
        self.v = v;
        self
    }

    pub fn mutation_probability(mut self, mu: TraitFn) -> Self {
        self.mu = mu;
        self
    }

    pub fn mu(self, mu: f64) -> Self {
        self.mutation_probability(constant_fn(mu))
    }

    pub fn mutation_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    /// `b̄, d̄, Ū, V̄`.
    pub fn envelopes(mut self, b_bar: f64, d_bar: f64, u_bar: f64, v_bar: f64) -> Self {
        self.envelopes = Some((b_bar, d_bar, u_bar, v_bar));
        self
    }

    /// Overrides the mutation envelope constant (defaults to the tight value).
    pub fn mutation_envelope_constant(mut self, c: f64) -> Self {
        self.c = Some(c);
        self
    }

    pub fn monotone_h5(mut self, flag: bool) -> Self {
        self.monotone_h5 = flag;
        self
    }

    pub fn build(self) -> Result<ModelSpec, ModelError> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "mutation sigma {} must be positive",
                self.sigma
            )));
        }
        let (b_bar, d_bar, u_bar, v_bar) = self
            .envelopes
            .ok_or_else(|| ModelError::InvalidParameter("envelope constants not set".into()))?;
        for (name, v) in [
            ("b_bar", b_bar),
            ("d_bar", d_bar),
            ("u_bar", u_bar),
            ("v_bar", v_bar),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidParameter(format!(
                    "{name} = {v} must be finite and nonnegative"
                )));
            }
        }
        let mutation = GaussianMutation::new(self.sigma, self.space.clone());
        let c = self.c.unwrap_or_else(|| mutation.envelope_constant());
        Ok(ModelSpec {
            name: self.name,
            space: self.space,
            demography: self.demography,
            u: self.u,
            v: self.v,
            mu: self.mu,
            mutation,
            envelopes: Envelopes {
                b_bar,
                d_bar,
                u_bar,
                v_bar,
                c,
            },
            monotone_h5: self.monotone_h5,
            validation: Arc::new(OnceLock::new()),
        })
    }
}

/// `(b_K, d_K, μ_K)` for individual `i` (in class order) from the cached sums.
pub fn eval_rates(
    state: &PointMeasureState,
    i: u64,
    spec: &ModelSpec,
    scaling: &ScalingSpec,
) -> Result<(f64, f64, f64), ModelError> {
    let k = state.class_of(i)?;
    let c = &state.classes()[k];
    Ok(ScaledRates::new(spec, scaling).rates(c.trait_value, c.su, c.sv))
}

/// Asymmetric competition kernel of the body-size model: `2 (1 - 1/(1 + 1.2 e^{-4h}))`.
pub fn kisdi_competition(h: f64) -> f64 {
    2.0 * (1.0 - 1.0 / (1.0 + 1.2 * (-4.0 * h).exp()))
}

/// Body-size model with asymmetric competition on `[0, 4]`:
/// `b(x) = 4 - x`, `d = 0`, `α = 1`, mutation steps Gaussian conditioned on `[0, 4]`.
/// The mutation probability is 0; use [`ModelSpec::with_mu`] or [`kisdi_model_with_mu`].
pub fn kisdi_model(sigma: f64) -> Result<ModelSpec, ModelError> {
    kisdi_model_with_mu(sigma, 0.0)
}

pub fn kisdi_model_with_mu(sigma: f64, mu: f64) -> Result<ModelSpec, ModelError> {
    let space = TraitSpace::interval(0.0, 4.0)?;
    let demography = Demography::LinearLogistic {
        birth: Arc::new(|x: TraitValue| 4.0 - x.x()),
        death: constant_fn(0.0),
        alpha: constant_fn(1.0),
    };
    ModelSpec::builder("kisdi", space, demography)
        .competition(Kernel::function(|h: TraitValue| kisdi_competition(h.x())))
        .mu(mu)
        .mutation_sigma(sigma)
        // sup U = 2 as h -> -inf; d = ζ <= 2 (1 + ζ / 2).
        .envelopes(4.0, 2.0, 2.0, 0.0)
        .monotone_h5(true)
        .build()
}

/// Competition kernel choices for [`LinearLogisticParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompetitionKernel {
    /// `U ≡ height`.
    Constant { height: f64 },
    /// `U(h) = height * exp(-h^2 / (2 width^2))`.
    Gaussian { height: f64, width: f64 },
    /// The asymmetric sigmoid of [`kisdi_competition`].
    Kisdi,
}

/// One-dimensional linear-logistic model `b(x) = b0 - b1 x`, `d(x) = d0`, `α(x) = alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearLogisticParams {
    pub lo: f64,
    pub hi: f64,
    pub b0: f64,
    pub b1: f64,
    pub d0: f64,
    pub alpha: f64,
    pub kernel: CompetitionKernel,
    pub mu: f64,
    pub sigma: f64,
}

impl Default for LinearLogisticParams {
    fn default() -> Self {
        LinearLogisticParams {
            lo: 0.0,
            hi: 4.0,
            b0: 4.0,
            b1: 1.0,
            d0: 0.0,
            alpha: 1.0,
            kernel: CompetitionKernel::Kisdi,
            mu: 0.0,
            sigma: 0.1,
        }
    }
}

/// Builds a linear-logistic model with envelopes computed from the parameters.
pub fn linear_logistic_model(p: &LinearLogisticParams) -> Result<ModelSpec, ModelError> {
    let space = TraitSpace::interval(p.lo, p.hi)?;
    let (b0, b1, d0, alpha) = (p.b0, p.b1, p.d0, p.alpha);
    let b_bar = (b0 - b1 * p.lo).max(b0 - b1 * p.hi).max(0.0);
    let (u, u_bar) = match p.kernel {
        CompetitionKernel::Constant { height } => (Kernel::Constant(height), height),
        CompetitionKernel::Gaussian { height, width } => (Kernel::gaussian(height, width), height),
        CompetitionKernel::Kisdi => (
            Kernel::function(|h: TraitValue| kisdi_competition(h.x())),
            2.0,
        ),
    };
    let d_bar = if u_bar > 0.0 {
        d0.max(alpha * u_bar)
    } else {
        d0
    };
    let monotone = alpha > 0.0 && u_bar > 0.0;
    ModelSpec::builder(
        "linear-logistic",
        space,
        Demography::LinearLogistic {
            birth: Arc::new(move |x: TraitValue| b0 - b1 * x.x()),
            death: constant_fn(d0),
            alpha: constant_fn(alpha),
        },
    )
    .competition(u)
    .mu(p.mu)
    .mutation_sigma(p.sigma)
    .envelopes(b_bar, d_bar, u_bar, 0.0)
    .monotone_h5(monotone)
    .build()
}
