//! Parameter sets of the Kisdi simulations shown in the two figure panels, with reduced
//! desk-scale variants.

use serde::Serialize;

use crate::model::{
    kisdi_model_with_mu, ModelError, ModelSpec, PointMeasureState, ScalingMode, ScalingSpec,
    TraitValue,
};

pub const FIGURE_PRESETS: [&str; 8] = [
    "fig1a", "fig1b", "fig1c", "fig1d", "fig2a", "fig2b", "fig2c", "fig2d",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FigurePreset {
    pub name: &'static str,
    /// Mutation probability before any scaling.
    pub mu: f64,
    /// Mutation step before any scaling.
    pub sigma: f64,
    pub k: u64,
    pub eta: f64,
    pub mode: ScalingMode,
    pub x0: f64,
    pub t_end: f64,
    /// Reduced system size and horizon that fit a desk-scale budget.
    pub desk_k: u64,
    pub desk_t_end: f64,
    /// Offset added to the seed, so that the two samples of one panel differ.
    pub seed_offset: u64,
    pub caption: &'static str,
}

impl FigurePreset {
    pub fn model(&self) -> Result<ModelSpec, ModelError> {
        kisdi_model_with_mu(self.sigma, self.mu)
    }

    pub fn scaling(&self, k: u64) -> Result<ScalingSpec, ModelError> {
        ScalingSpec::new(k, self.eta, self.mode)
    }

    /// `k` individuals at `x0`.
    pub fn initial_state(&self, k: u64, model: &ModelSpec) -> PointMeasureState {
        PointMeasureState::monomorphic(TraitValue::scalar(self.x0), k, model)
    }

    /// Copy running at the desk-scale size and horizon.
    pub fn desk(&self) -> Self {
        FigurePreset {
            k: self.desk_k,
            t_end: self.desk_t_end,
            ..*self
        }
    }
}

pub fn figure_preset(name: &str) -> Option<FigurePreset> {
    let (mu, sigma, k, eta, mode, desk_k, desk_t_end, seed_offset, caption) = match name {
        "fig1a" => (
            0.03,
            0.1,
            100,
            1.0,
            ScalingMode::None,
            100,
            500.0,
            0,
            "mu = 0.03, K = 100, sigma = 0.1",
        ),
        "fig1b" => (
            0.03,
            0.1,
            3000,
            1.0,
            ScalingMode::None,
            1000,
            100.0,
            0,
            "mu = 0.03, K = 3000, sigma = 0.1",
        ),
        "fig1c" => (
            0.03,
            0.1,
            100_000,
            1.0,
            ScalingMode::None,
            3000,
            40.0,
            0,
            "mu = 0.03, K = 100000, sigma = 0.1",
        ),
        "fig1d" => (
            1e-5,
            0.1,
            3000,
            1.0,
            ScalingMode::None,
            3000,
            500.0,
            0,
            "mu = 0.00001, K = 3000, sigma = 0.1",
        ),
        "fig2a" => (
            0.3,
            0.3,
            10_000,
            0.5,
            ScalingMode::AccelSmallSteps,
            400,
            40.0,
            0,
            "mu = 0.3, K = 10000, sigma = 0.3/K^(eta/2), eta = 0.5",
        ),
        "fig2b" => (
            0.1,
            0.1,
            10_000,
            0.5,
            ScalingMode::AccelRareMutation,
            400,
            40.0,
            0,
            "mu = 0.1/K^eta, K = 10000, sigma = 0.1, eta = 0.5",
        ),
        "fig2c" => (
            0.3,
            0.3,
            10_000,
            1.0,
            ScalingMode::AccelSmallSteps,
            400,
            20.0,
            0,
            "mu = 0.3, K = 10000, sigma = 0.3/K^(eta/2), eta = 1",
        ),
        "fig2d" => (
            0.3,
            0.3,
            10_000,
            1.0,
            ScalingMode::AccelSmallSteps,
            400,
            20.0,
            1,
            "mu = 0.3, K = 10000, sigma = 0.3/K^(eta/2), eta = 1",
        ),
        _ => return None,
    };
    let name = FIGURE_PRESETS.iter().find(|n| **n == name)?;
    Some(FigurePreset {
        name,
        mu,
        sigma,
        k,
        eta,
        mode,
        x0: 1.2,
        t_end: 500.0,
        desk_k,
        desk_t_end,
        seed_offset,
        caption,
    })
}
