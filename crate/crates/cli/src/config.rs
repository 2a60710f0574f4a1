//! Experiment configuration: a TOML file with strict keys, merged with a figure preset
//! and command-line overrides.

use std::path::Path;

use evoibm::model::{linear_logistic_model, CompetitionKernel, LinearLogisticParams};
use evoibm::presets::{figure_preset, FigurePreset, FIGURE_PRESETS};
use evoibm::{
    kisdi_model_with_mu, Engine, ModelSpec, PointMeasureState, ScalingMode, ScalingSpec, TraitValue,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub scaling: ScalingSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tss: Option<TssSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invade: Option<InvadeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub martingale: Option<MartingaleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Kisdi,
    LinearLogistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    Kisdi,
    Gaussian,
    Constant,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Figure preset, `fig1a` to `fig2d`.
    pub preset: Option<String>,
    pub name: Option<ModelName>,
    pub sigma: Option<f64>,
    pub mu: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub b0: Option<f64>,
    pub b1: Option<f64>,
    pub d0: Option<f64>,
    pub alpha: Option<f64>,
    pub kernel: Option<KernelName>,
    pub kernel_height: Option<f64>,
    pub kernel_width: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    None,
    AccelSmallSteps,
    AccelRareMutation,
    RareMutationTss,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSection {
    pub k: Option<u64>,
    pub eta: Option<f64>,
    pub mode: Option<ModeName>,
    pub u_k: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub snapshot_dt: Option<f64>,
    pub bins: Option<usize>,
    pub engine: Option<Engine>,
    /// Initial monomorphic trait.
    pub x0: Option<f64>,
    /// Initial population in units of `K`.
    pub mass: Option<f64>,
    /// Divide recorded masses by `K`.
    pub renormalize: Option<bool>,
    pub mass_every_event: Option<bool>,
    pub event_log: Option<bool>,
    /// Use the reduced size and horizon of a figure preset.
    pub desk: Option<bool>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSection {
    pub intervals: Option<usize>,
    /// Standard deviation of the initial bump (IDE, PDE).
    pub width: Option<f64>,
    /// Initial mass; for `ode-di` the resident size.
    pub mass: Option<f64>,
    pub samples: Option<usize>,
    /// Constant diffusion coefficient for the PDE, default `σ² μ`.
    pub c: Option<f64>,
    /// IDE with the rare-mutation source term.
    pub rare_mutation: Option<bool>,
    pub y: Option<f64>,
    pub n0y: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TssSection {
    pub x0: Option<f64>,
    pub t_end: Option<f64>,
    pub table_intervals: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvadeSection {
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub k: Option<u64>,
    pub replicates: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub ks: Option<Vec<u64>>,
    pub t_probe: Option<f64>,
    pub replicates: Option<usize>,
    pub ide: Option<bool>,
    pub width: Option<f64>,
    pub intervals: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFn {
    One,
    X,
    X2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormName {
    Exact,
    Superprocess,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleSection {
    pub f: Option<TestFn>,
    pub form: Option<FormName>,
    /// Snapshot after every event.
    pub audit: Option<bool>,
    pub snapshot_dt: Option<f64>,
    pub ratio_lo: Option<f64>,
    pub ratio_hi: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub probes: Option<usize>,
}

/// Reads a config file. Parse errors carry the line and key.
pub fn load(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse(text: &str) -> Result<Config, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

fn required<T: Copy>(v: Option<T>, key: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
}

fn fill<T>(slot: &mut Option<T>, v: T) {
    if slot.is_none() {
        *slot = Some(v);
    }
}

impl Config {
    /// Fills keys left unset from the named figure preset.
    pub fn apply_preset(&mut self, name: &str) -> Result<FigurePreset, CliError> {
        let p = figure_preset(name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown preset `{name}`, expected one of {}",
                FIGURE_PRESETS.join(", ")
            ))
        })?;
        let desk = self.run.desk.unwrap_or(false);
        let p = if desk { p.desk() } else { p };
        self.model.preset = Some(name.to_string());
        fill(&mut self.model.name, ModelName::Kisdi);
        fill(&mut self.model.sigma, p.sigma);
        fill(&mut self.model.mu, p.mu);
        fill(&mut self.scaling.k, p.k);
        fill(&mut self.scaling.eta, p.eta);
        fill(
            &mut self.scaling.mode,
            match p.mode {
                ScalingMode::None => ModeName::None,
                ScalingMode::AccelSmallSteps => ModeName::AccelSmallSteps,
                ScalingMode::AccelRareMutation => ModeName::AccelRareMutation,
                ScalingMode::RareMutationTss { .. } => ModeName::RareMutationTss,
            },
        );
        fill(&mut self.run.x0, p.x0);
        fill(&mut self.run.mass, 1.0);
        fill(&mut self.run.t_end, p.t_end);
        Ok(p)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        required(self.run.seed, "run.seed")
    }

    pub fn t_end(&self) -> Result<f64, CliError> {
        let t = required(self.run.t_end, "run.t_end")?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(CliError::Config(format!(
                "`run.t_end` = {t} must be positive"
            )));
        }
        Ok(t)
    }

    pub fn workers(&self) -> Option<usize> {
        self.run.workers
    }

    pub fn model(&self) -> Result<ModelSpec, CliError> {
        let m = &self.model;
        let name = m.name.unwrap_or(ModelName::Kisdi);
        let sigma = m.sigma.unwrap_or(0.1);
        let mu = m.mu.unwrap_or(0.0);
        let spec = match name {
            ModelName::Kisdi => {
                let extra = [
                    ("lo", m.lo.is_some()),
                    ("hi", m.hi.is_some()),
                    ("b0", m.b0.is_some()),
                    ("b1", m.b1.is_some()),
                    ("d0", m.d0.is_some()),
                    ("alpha", m.alpha.is_some()),
                    ("kernel", m.kernel.is_some()),
                    ("kernel_height", m.kernel_height.is_some()),
                    ("kernel_width", m.kernel_width.is_some()),
                ];
                if let Some((key, _)) = extra.iter().find(|e| e.1) {
                    return Err(CliError::Config(format!(
                        "`model.{key}` only applies to the linear-logistic model"
                    )));
                }
                kisdi_model_with_mu(sigma, mu)
            }
            ModelName::LinearLogistic => {
                let d = LinearLogisticParams::default();
                let height = m.kernel_height.unwrap_or(1.0);
                let kernel = match m.kernel.unwrap_or(KernelName::Kisdi) {
                    KernelName::Kisdi => CompetitionKernel::Kisdi,
                    KernelName::Gaussian => CompetitionKernel::Gaussian {
                        height,
                        width: m.kernel_width.unwrap_or(1.0),
                    },
                    KernelName::Constant => CompetitionKernel::Constant { height },
                };
                linear_logistic_model(&LinearLogisticParams {
                    lo: m.lo.unwrap_or(d.lo),
                    hi: m.hi.unwrap_or(d.hi),
                    b0: m.b0.unwrap_or(d.b0),
                    b1: m.b1.unwrap_or(d.b1),
                    d0: m.d0.unwrap_or(d.d0),
                    alpha: m.alpha.unwrap_or(d.alpha),
                    kernel,
                    mu,
                    sigma,
                })
            }
        };
        spec.map_err(|e| CliError::Config(format!("model: {e}")))
    }

    pub fn scaling(&self) -> Result<ScalingSpec, CliError> {
        let s = &self.scaling;
        let k = required(s.k, "scaling.k")?;
        let mode = match s.mode.unwrap_or(ModeName::None) {
            ModeName::None => ScalingMode::None,
            ModeName::AccelSmallSteps => ScalingMode::AccelSmallSteps,
            ModeName::AccelRareMutation => ScalingMode::AccelRareMutation,
            ModeName::RareMutationTss => ScalingMode::RareMutationTss {
                u_k: required(s.u_k, "scaling.u_k")?,
            },
        };
        ScalingSpec::new(k, s.eta.unwrap_or(1.0), mode)
            .map_err(|e| CliError::Config(format!("scaling: {e}")))
    }

    pub fn x0(&self) -> f64 {
        self.run.x0.unwrap_or(1.2)
    }

    /// `⌊K mass⌋` individuals at `x0`.
    pub fn initial_state(&self, k: u64, model: &ModelSpec) -> PointMeasureState {
        let n = (k as f64 * self.run.mass.unwrap_or(1.0)).floor() as u64;
        PointMeasureState::monomorphic(TraitValue::scalar(self.x0()), n, model)
    }

    pub fn engine(&self) -> Engine {
        self.run.engine.unwrap_or_default()
    }
}
