use std::fmt;

use serde::Serialize;

use super::kernels::{constant_fn, GaussianMutation, TraitFn};
use super::space::TraitValue;
use super::{ModelError, ModelSpec};

/// Which renormalization is applied on top of the `1/K` interaction scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScalingMode {
    /// Interactions scaled by `1/K` only.
    None,
    /// Birth and death accelerated by `K^η r(x)`, mutation steps shrunk by `K^{-η/2}`.
    AccelSmallSteps,
    /// Birth and death accelerated by `K^η r(x)`, mutation probability divided by `K^η`.
    AccelRareMutation,
    /// Mutation probability multiplied by `u_K`, no acceleration.
    RareMutationTss { u_k: f64 },
}

impl ScalingMode {
    pub fn accelerated(&self) -> bool {
        matches!(
            self,
            ScalingMode::AccelSmallSteps | ScalingMode::AccelRareMutation
        )
    }
}

/// System size and scaling regime. Applies to any [`ModelSpec`] without rebuilding it.
#[derive(Clone)]
pub struct ScalingSpec {
    k: u64,
    eta: f64,
    mode: ScalingMode,
    r: TraitFn,
    r_bar: f64,
    warnings: Vec<String>,
}

impl fmt::Debug for ScalingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalingSpec")
            .field("k", &self.k)
            .field("eta", &self.eta)
            .field("mode", &self.mode)
            .field("r_bar", &self.r_bar)
            .finish()
    }
}

impl ScalingSpec {
    pub fn new(k: u64, eta: f64, mode: ScalingMode) -> Result<Self, ModelError> {
        if k == 0 {
            return Err(ModelError::InvalidParameter(
                "K must be a positive integer".into(),
            ));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(ModelError::InvalidParameter(format!(
                "eta = {eta} outside (0, 1]"
            )));
        }
        let mut warnings = Vec::new();
        if let ScalingMode::RareMutationTss { u_k } = mode {
            if !(u_k > 0.0 && u_k.is_finite()) {
                return Err(ModelError::InvalidParameter(format!(
                    "u_K = {u_k} must be positive"
                )));
            }
            let kf = k as f64;
            let window = kf * u_k * kf.ln();
            // u_K = 1/(10 K log K) sits on the threshold; rounding must not flag it.
            if window > 0.1 * (1.0 + 1e-9) {
                let w = format!("K u_K log K = {window:.4} > 0.1: mutations not rare enough for the substitution limit");
                log::warn!("{w}");
                warnings.push(w);
            }
        }
        Ok(ScalingSpec {
            k,
            eta,
            mode,
            r: constant_fn(1.0),
            r_bar: 1.0,
            warnings,
        })
    }

    /// `1/K` interactions only.
    pub fn plain(k: u64) -> Result<Self, ModelError> {
        Self::new(k, 1.0, ScalingMode::None)
    }

    /// Replaces the allometric rate `r` (default `r ≡ 1`); `r_bar` bounds it from above.
    pub fn with_allometry(mut self, r: TraitFn, r_bar: f64) -> Self {
        self.r = r;
        self.r_bar = r_bar;
        self
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn mode(&self) -> ScalingMode {
        self.mode
    }

    pub fn r(&self, x: TraitValue) -> f64 {
        (self.r)(x)
    }

    pub fn r_bar(&self) -> f64 {
        self.r_bar
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// `K^η` when demographic acceleration is on, else 0.
    pub fn acceleration(&self) -> f64 {
        if self.mode.accelerated() {
            (self.k as f64).powf(self.eta)
        } else {
            0.0
        }
    }

    /// Factor multiplying `μ(x)`.
    pub fn mu_factor(&self) -> f64 {
        match self.mode {
            ScalingMode::None | ScalingMode::AccelSmallSteps => 1.0,
            ScalingMode::AccelRareMutation => (self.k as f64).powf(-self.eta),
            ScalingMode::RareMutationTss { u_k } => u_k,
        }
    }

    /// Factor multiplying the mutation standard deviation.
    pub fn sigma_factor(&self) -> f64 {
        match self.mode {
            ScalingMode::AccelSmallSteps => (self.k as f64).powf(-0.5 * self.eta),
            _ => 1.0,
        }
    }
}

/// Per-class constants that do not depend on the interaction sums.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClassConstants {
    pub(crate) birth0: f64,
    pub(crate) death0: f64,
    pub(crate) alpha: f64,
    pub(crate) accel_r: f64,
    pub(crate) mu: f64,
}

/// A model with a scaling applied: the rates `b_K`, `d_K`, `μ_K` and the law `M_K`.
#[derive(Debug, Clone)]
pub struct ScaledRates {
    model: ModelSpec,
    scaling: ScalingSpec,
    inv_k: f64,
    accel: f64,
    mu_factor: f64,
    mutation: GaussianMutation,
    c: f64,
    linear: bool,
}

impl ScaledRates {
    pub fn new(model: &ModelSpec, scaling: &ScalingSpec) -> Self {
        let mutation = model.mutation().rescaled(scaling.sigma_factor());
        let c = if scaling.sigma_factor() == 1.0 {
            model.envelopes().c
        } else {
            mutation.envelope_constant()
        };
        ScaledRates {
            model: model.clone(),
            scaling: scaling.clone(),
            inv_k: 1.0 / scaling.k() as f64,
            accel: scaling.acceleration(),
            mu_factor: scaling.mu_factor(),
            mutation,
            c,
            linear: model.is_linear_logistic(),
        }
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn scaling(&self) -> &ScalingSpec {
        &self.scaling
    }

    pub fn inv_k(&self) -> f64 {
        self.inv_k
    }

    pub fn mutation(&self) -> &GaussianMutation {
        &self.mutation
    }

    /// Envelope constant of the scaled mutation law.
    pub fn mutation_envelope_constant(&self) -> f64 {
        self.c
    }

    pub(crate) fn constants(&self, x: TraitValue) -> ClassConstants {
        let accel_r = if self.accel > 0.0 {
            self.accel * self.scaling.r(x)
        } else {
            0.0
        };
        let mu = self.model.mu(x) * self.mu_factor;
        match self.model.linear_parts(x) {
            Some((b, d, a)) => ClassConstants {
                birth0: b,
                death0: d,
                alpha: a,
                accel_r,
                mu,
            },
            None => ClassConstants {
                birth0: 0.0,
                death0: 0.0,
                alpha: 0.0,
                accel_r,
                mu,
            },
        }
    }

    /// `b_K` for an individual at `x` whose raw birth-interaction sum is `sv`.
    #[inline]
    pub(crate) fn birth_with(&self, x: TraitValue, k: &ClassConstants, sv: f64) -> f64 {
        if self.linear {
            k.accel_r + k.birth0
        } else {
            k.accel_r + self.model.birth(x, sv * self.inv_k)
        }
    }

    /// `d_K` for an individual at `x` whose raw competition sum is `su`.
    #[inline]
    pub(crate) fn death_with(&self, x: TraitValue, k: &ClassConstants, su: f64) -> f64 {
        if self.linear {
            k.accel_r + k.death0 + k.alpha * su * self.inv_k
        } else {
            k.accel_r + self.model.death(x, su * self.inv_k)
        }
    }

    /// `(b_K, d_K, μ_K)` at `x` for raw interaction sums `su`, `sv`.
    pub fn rates(&self, x: TraitValue, su: f64, sv: f64) -> (f64, f64, f64) {
        let k = self.constants(x);
        (self.birth_with(x, &k, sv), self.death_with(x, &k, su), k.mu)
    }

    /// Upper bound on `b_K`.
    pub fn birth_bound(&self) -> f64 {
        self.accel * self.scaling.r_bar() + self.model.envelopes().b_bar
    }

    /// Constant `D` with `d_K <= D (1 + I)` for any population of size `I`.
    ///
    /// From `d(x, ζ) <= d̄ (1 + ζ/Ū)` and `ζ <= Ū I / K` with `K >= 1`.
    pub fn death_bound(&self) -> f64 {
        self.accel * self.scaling.r_bar() + self.model.envelopes().d_bar
    }

    /// Rejection-engine clock rate `C̄ = b̄_K max(C, 1) + D`.
    pub fn rejection_constant(&self) -> f64 {
        self.birth_bound() * self.c.max(1.0) + self.death_bound()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::kisdi_model;

    #[test]
    fn singleton_rates_under_plain_scaling() {
        let m = kisdi_model(0.1).unwrap();
        let s = ScalingSpec::plain(100).unwrap();
        let r = ScaledRates::new(&m, &s);
        let x = TraitValue::scalar(1.2);
        let u0 = m.u().eval(TraitValue::ZERO);
        let (b, d, mu) = r.rates(x, u0, 0.0);
        assert!((b - 2.8).abs() < 1e-14);
        assert!((d - u0 / 100.0).abs() < 1e-15);
        assert_eq!(mu, 0.0);
    }

    #[test]
    fn acceleration_adds_turnover() {
        let m = kisdi_model(0.1).unwrap();
        let s = ScalingSpec::new(10, 1.0, ScalingMode::AccelSmallSteps).unwrap();
        let r = ScaledRates::new(&m, &s);
        let (b, _, _) = r.rates(TraitValue::scalar(1.2), 0.0, 0.0);
        assert!((b - 12.8).abs() < 1e-12);
        assert!((r.mutation().sigma() - 0.1 / 10f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rare_mutation_factors() {
        let s = ScalingSpec::new(100, 0.5, ScalingMode::AccelRareMutation).unwrap();
        assert!((s.mu_factor() - 0.1).abs() < 1e-15);
        let s = ScalingSpec::new(1000, 1.0, ScalingMode::RareMutationTss { u_k: 1e-3 }).unwrap();
        assert_eq!(s.warnings().len(), 1);
        let s = ScalingSpec::new(1000, 1.0, ScalingMode::RareMutationTss { u_k: 1e-6 }).unwrap();
        assert!(s.warnings().is_empty());
        for k in [100u64, 1000, 10_000] {
            let kf = k as f64;
            let u_k = 1.0 / (10.0 * kf * kf.ln());
            let s = ScalingSpec::new(k, 1.0, ScalingMode::RareMutationTss { u_k }).unwrap();
            assert!(s.warnings().is_empty(), "K = {k}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ScalingSpec::plain(0).is_err());
        assert!(ScalingSpec::new(10, 0.0, ScalingMode::None).is_err());
        assert!(ScalingSpec::new(10, 1.5, ScalingMode::None).is_err());
    }
}
