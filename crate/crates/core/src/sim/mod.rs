//! Exact simulation of the population point process.
//!
//! Two engines share one state type. [`Engine::Rejection`] follows the classical
//! construction with a uniform clock and thinning; [`Engine::Direct`] computes the exact
//! total rate and never proposes null events.

mod engine;
pub mod io;
mod trajectory;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, TraitValue};

pub use engine::{simulate, simulate_with_rng, step_direct, step_rejection, Simulator};
pub use trajectory::{renormalize, Measure, MeasureTrajectory, RecorderConfig, Snapshot};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("population of {count} exceeds the cap at t = {time}")]
    PopulationExplosion { count: u64, time: f64 },
    #[error("model has not passed validate_model")]
    ValidationSkipped,
    #[error("acceptance ratio {ratio} > 1 at {witness}: envelopes are not valid bounds")]
    EnvelopeBreach { ratio: f64, witness: String },
    #[error("initial population is empty and empty starts are not allowed")]
    EmptyInit,
    #[error("trajectory is already renormalized")]
    AlreadyRenormalized,
    #[error("invalid simulation setting: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Direct,
    Rejection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Death,
    ClonalBirth,
    MutantBirth,
    Null,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Death => "death",
            EventKind::ClonalBirth => "clonal_birth",
            EventKind::MutantBirth => "mutant_birth",
            EventKind::Null => "null",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Class of the acting individual at proposal time.
    pub class: usize,
    pub parent: TraitValue,
    pub child: Option<TraitValue>,
}

/// Run settings shared by both engines.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub engine: Engine,
    pub t_end: f64,
    /// Hard cap on the population size.
    pub max_population: u64,
    /// Stop with the current state after this many non-null events.
    pub max_events: Option<u64>,
    pub allow_empty: bool,
    pub recorder: RecorderConfig,
}

impl SimConfig {
    pub fn new(engine: Engine, t_end: f64) -> Self {
        SimConfig {
            engine,
            t_end,
            max_population: 10_000_000,
            max_events: None,
            allow_empty: false,
            recorder: RecorderConfig::default(),
        }
    }

    pub fn with_recorder(mut self, recorder: RecorderConfig) -> Self {
        self.recorder = recorder;
        self
    }
}
