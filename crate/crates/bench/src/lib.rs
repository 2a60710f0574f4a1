//! Fixtures shared by the criterion benchmarks in `benches/`.

use evoibm::limits::{DensityField, TraitGrid};
use evoibm::{
    kisdi_model, validate_model, Engine, ModelSpec, PointMeasureState, RecorderConfig, ScalingSpec,
    SimConfig, TraitValue,
};

/// Validated Kisdi model with mutation step `sigma` and the default mutation probability.
pub fn kisdi(sigma: f64) -> ModelSpec {
    let m = kisdi_model(sigma).expect("kisdi parameters are valid");
    validate_model(&m, 500, 0).expect("kisdi passes validation");
    m
}

/// `K` individuals at one trait, a short horizon and no snapshots beyond the endpoints.
pub fn micro_setup(
    engine: Engine,
    k: u64,
    t_end: f64,
) -> (ModelSpec, ScalingSpec, PointMeasureState, SimConfig) {
    let m = kisdi(0.1);
    let init = PointMeasureState::monomorphic(TraitValue::scalar(1.2), k * 5 / 2, &m);
    let cfg = SimConfig::new(engine, t_end).with_recorder(RecorderConfig {
        bins: None,
        ..Default::default()
    });
    (m, ScalingSpec::plain(k).expect("k > 0"), init, cfg)
}

pub fn bump_on(intervals: usize) -> (TraitGrid, DensityField) {
    let g = TraitGrid::new(0.0, 4.0, intervals).expect("valid grid");
    let f = DensityField::bump(&g, 1.2, 0.2, 1.0).expect("valid bump");
    (g, f)
}
