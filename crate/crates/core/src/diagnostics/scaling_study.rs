use serde::Serialize;

use super::stats::{linear_fit, mean_var};
use super::{wasserstein1, DiagError, Measure1d};
use crate::ensemble::run_replicates;
use crate::limits::{solve_ide, DensityField, FieldOptions, IdeMode, TraitGrid};
use crate::model::{ModelSpec, PointMeasureState, ScalingMode, ScalingSpec, TraitValue};
use crate::sim::{renormalize, simulate_with_rng, Engine, RecorderConfig, SimConfig, SimError};

/// Deterministic initial condition `X^K_0`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// `⌊K mass⌋` individuals at `x`.
    Monomorphic { x: f64, mass: f64 },
    /// `round(K ∫ξ)` individuals at the mid-quantiles of `ξ`.
    Density {
        grid: TraitGrid,
        field: DensityField,
    },
}

impl InitialCondition {
    pub fn state(&self, k: u64, model: &ModelSpec) -> PointMeasureState {
        match self {
            InitialCondition::Monomorphic { x, mass } => PointMeasureState::monomorphic(
                TraitValue::scalar(*x),
                (k as f64 * mass).floor() as u64,
                model,
            ),
            InitialCondition::Density { grid, field } => {
                let Measure1d::Histogram { edges, masses } = Measure1d::from_density(field, grid)
                else {
                    unreachable!()
                };
                let total: f64 = masses.iter().sum();
                let n = (k as f64 * total).round() as usize;
                let mut classes = Vec::with_capacity(n);
                let mut cell = 0;
                let mut below = 0.0;
                for j in 0..n {
                    let target = (j as f64 + 0.5) / n as f64 * total;
                    while cell + 1 < masses.len() && below + masses[cell] < target {
                        below += masses[cell];
                        cell += 1;
                    }
                    let frac = if masses[cell] > 0.0 {
                        ((target - below) / masses[cell]).clamp(0.0, 1.0)
                    } else {
                        0.5
                    };
                    let x = edges[cell] + frac * (edges[cell + 1] - edges[cell]);
                    classes.push((TraitValue::scalar(x), 1));
                }
                PointMeasureState::from_classes(&classes, model)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdeComparison {
    pub options: FieldOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingStudyConfig {
    pub ks: Vec<u64>,
    pub eta: f64,
    pub mode: ScalingMode,
    pub t_probe: f64,
    pub replicates: usize,
    pub seed: u64,
    pub workers: Option<usize>,
    pub engine: Engine,
    pub init: InitialCondition,
    /// Compare the mean normalized empirical measure with the IDE; needs a density
    /// initial condition and the unaccelerated scaling.
    pub ide: Option<IdeComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub k: u64,
    pub replicates: usize,
    pub mean_mass: f64,
    pub var_mass: f64,
    /// `K Var⟨X_t, 1⟩`, flat in `K` under the central-limit scaling.
    pub k_var: f64,
    pub extinct: usize,
    /// W1 between the normalized mean measure and the normalized IDE solution.
    pub w1: Option<f64>,
    /// Relative mass difference between the mean measure and the IDE solution.
    pub mass_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingTable {
    pub t_probe: f64,
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `log Var` on `log K`.
    pub variance_slope: Option<f64>,
}

impl ScalingTable {
    /// W1 decreases along the `K` list, `None` without an IDE comparison.
    pub fn w1_decreasing(&self) -> Option<bool> {
        let w: Option<Vec<f64>> = self.rows.iter().map(|r| r.w1).collect();
        w.map(|w| w.windows(2).all(|p| p[1] < p[0]))
    }
}

/// Ensemble of `replicates` runs per system size, reporting the variance of the total
/// renormalized mass at `t_probe` and, optionally, the distance to the IDE.
pub fn scaling_study(
    spec: &ModelSpec,
    cfg: &ScalingStudyConfig,
) -> Result<ScalingTable, DiagError> {
    if cfg.ks.is_empty() || cfg.replicates < 2 {
        return Err(DiagError::InvalidInput(
            "need at least one K and two replicates".into(),
        ));
    }
    if !(cfg.t_probe > 0.0) {
        return Err(DiagError::InvalidInput(
            "probe time must be positive".into(),
        ));
    }
    let ide = match (&cfg.ide, &cfg.init) {
        (None, _) => None,
        (Some(opts), InitialCondition::Density { grid, field }) => {
            if cfg.mode != ScalingMode::None {
                return Err(DiagError::InvalidInput(
                    "IDE comparison needs the unaccelerated scaling".into(),
                ));
            }
            let sol = solve_ide(
                field,
                cfg.t_probe,
                spec,
                &IdeMode::Standard,
                grid,
                &opts.options,
            )?;
            Some(Measure1d::from_density(sol.last(), grid))
        }
        (Some(_), _) => {
            return Err(DiagError::InvalidInput(
                "IDE comparison needs a density initial condition".into(),
            ))
        }
    };
    let recorder = if ide.is_some() {
        RecorderConfig::atoms(cfg.t_probe)
    } else {
        RecorderConfig::mass_only(cfg.t_probe)
    };
    let sim_cfg = SimConfig::new(cfg.engine, cfg.t_probe).with_recorder(recorder);

    let mut rows = Vec::with_capacity(cfg.ks.len());
    for (i, &k) in cfg.ks.iter().enumerate() {
        let scaling = ScalingSpec::new(k, cfg.eta, cfg.mode)?;
        let init = cfg.init.state(k, spec);
        let seed = cfg.seed.wrapping_add(i as u64);
        let runs = run_replicates(cfg.replicates, seed, cfg.workers, |_, rng| {
            let tr = simulate_with_rng(spec, &scaling, init.clone(), &sim_cfg, rng)?;
            renormalize(&tr, k)
        });
        let runs: Vec<_> = runs.into_iter().collect::<Result<Vec<_>, SimError>>()?;
        let masses: Vec<f64> = runs
            .iter()
            .map(|tr| tr.final_snapshot().map_or(0.0, |s| s.total))
            .collect();
        let (mean_mass, var_mass) = mean_var(&masses);
        let extinct = runs
            .iter()
            .filter(|tr| tr.extinction_time.is_some())
            .count();
        let (w1, mass_gap) = match &ide {
            None => (None, None),
            Some(target) => {
                let r = runs.len() as f64;
                let mut atoms = Vec::new();
                for tr in &runs {
                    if let Some(a) = tr.final_snapshot().and_then(|s| s.atoms.as_ref()) {
                        atoms.extend(a.atoms.iter().map(|&(x, w)| (x.x(), w / r)));
                    }
                }
                let mean = Measure1d::Atoms(atoms);
                let res = wasserstein1(&mean, target, true)?;
                (
                    Some(res.distance),
                    Some((res.mass1 - res.mass2).abs() / res.mass2),
                )
            }
        };
        rows.push(ScalingRow {
            k,
            replicates: cfg.replicates,
            mean_mass,
            var_mass,
            k_var: k as f64 * var_mass,
            extinct,
            w1,
            mass_gap,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.var_mass > 0.0)
        .map(|r| ((r.k as f64).ln(), r.var_mass.ln()))
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let variance_slope = linear_fit(&x, &y).map(|p| p.0);
    Ok(ScalingTable {
        t_probe: cfg.t_probe,
        rows,
        variance_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{kisdi_model, validate_model};

    #[test]
    fn quantile_init_matches_density() {
        let m = kisdi_model(0.1).unwrap();
        let grid = TraitGrid::new(0.0, 4.0, 400).unwrap();
        let field = DensityField::bump(&grid, 1.2, 0.2, 1.0).unwrap();
        let ic = InitialCondition::Density {
            grid: grid.clone(),
            field: field.clone(),
        };
        let st = ic.state(500, &m);
        assert_eq!(st.count(), 500);
        let emp = Measure1d::Atoms(
            st.classes()
                .iter()
                .map(|c| (c.trait_value.x(), c.count as f64 / 500.0))
                .collect(),
        );
        let w = wasserstein1(&emp, &Measure1d::from_density(&field, &grid), false).unwrap();
        assert!(w.distance < 2e-3, "W1 {}", w.distance);
    }

    #[test]
    fn small_study_runs() {
        let m = kisdi_model(0.1).unwrap();
        validate_model(&m, 200, 1).unwrap();
        let cfg = ScalingStudyConfig {
            ks: vec![20, 40],
            eta: 1.0,
            mode: ScalingMode::None,
            t_probe: 1.0,
            replicates: 10,
            seed: 4,
            workers: Some(1),
            engine: Engine::Direct,
            init: InitialCondition::Monomorphic { x: 1.2, mass: 1.0 },
            ide: None,
        };
        let t = scaling_study(&m, &cfg).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.variance_slope.is_some());
        assert_eq!(t.w1_decreasing(), None);
        let bad = ScalingStudyConfig {
            ide: Some(IdeComparison {
                options: FieldOptions::default(),
            }),
            ..cfg
        };
        assert!(scaling_study(&m, &bad).is_err());
    }
}
