//! Individual-based simulation of birth, death, mutation and competition in a trait
//! space, with solvers for the deterministic and evolutionary limits of the process.

pub mod diagnostics;
pub mod ensemble;
pub mod limits;
pub mod model;
pub mod presets;
pub mod quadrature;
pub mod sim;
pub mod tss;

pub use diagnostics::{
    martingale_residual, moment_identity_check, scaling_study, wasserstein1, DiagError, Measure1d,
    TestFunction,
};
pub use model::{
    eval_rates, kisdi_model, kisdi_model_with_mu, linear_logistic_model, validate_model,
    Demography, Envelopes, GaussianMutation, Kernel, ModelError, ModelSpec, PointMeasureState,
    ScaledRates, ScalingMode, ScalingSpec, TraitSpace, TraitValue, ValidationReport,
};
pub use sim::{
    simulate, Engine, Event, EventKind, MeasureTrajectory, RecorderConfig, SimConfig, SimError,
    Simulator,
};
