//! Checks of simulated ensembles against exact identities and deterministic limits:
//! martingale residuals, the first-moment identity, Wasserstein distances, variance
//! scaling in `K`, and a few statistical tests.

mod martingale;
mod moments;
mod scaling_study;
pub mod stats;
mod wasserstein;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::model::TraitValue;
use crate::sim::{MeasureTrajectory, SimError};
use stats::{mean_var, quantile};

pub use martingale::{martingale_residual, BracketForm, CompensatorMode, MartingaleReport};
pub use moments::{moment_identity_check, MomentReport};
pub use scaling_study::{
    scaling_study, IdeComparison, InitialCondition, ScalingRow, ScalingStudyConfig, ScalingTable,
};
pub use wasserstein::{wasserstein1, Measure1d, W1Result};

#[derive(Debug, Error)]
pub enum DiagError {
    #[error(
        "snapshot cadence too coarse: quadrature error {error:.3e} exceeds 10% of {reference:.3e}"
    )]
    InsufficientCadence { error: f64, reference: f64 },
    #[error("measures carry different masses {m1} and {m2}; enable normalization to compare them")]
    MassMismatch { m1: f64, m2: f64 },
    #[error("diagnostic needs a one-dimensional bounded trait space")]
    Dimension,
    #[error("moment identity needs a linear-logistic model")]
    NotLinearLogistic,
    #[error("empty ensemble")]
    Empty,
    #[error("trajectories must share the same snapshot times")]
    InconsistentGrids,
    #[error("snapshots must carry atoms (record with atoms or audit enabled)")]
    NeedsAtoms,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Limit(#[from] crate::limits::LimitError),
}

/// Test function `f` for `⟨ν, f⟩`.
#[derive(Clone)]
pub enum TestFunction {
    Constant(f64),
    Function(Arc<dyn Fn(TraitValue) -> f64 + Send + Sync>),
}

impl TestFunction {
    pub fn one() -> Self {
        TestFunction::Constant(1.0)
    }

    pub fn function<F: Fn(TraitValue) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        TestFunction::Function(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: TraitValue) -> f64 {
        match self {
            TestFunction::Constant(c) => *c,
            TestFunction::Function(f) => f(x),
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self {
            TestFunction::Constant(c) => Some(*c),
            TestFunction::Function(_) => None,
        }
    }

    /// `f²`.
    pub fn squared(&self) -> Self {
        match self {
            TestFunction::Constant(c) => TestFunction::Constant(c * c),
            TestFunction::Function(f) => {
                let f = f.clone();
                TestFunction::function(move |x| f(x).powi(2))
            }
        }
    }
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Constant(c) => write!(f, "TestFunction::Constant({c})"),
            TestFunction::Function(_) => write!(f, "TestFunction::Function(..)"),
        }
    }
}

fn common_times(trajs: &[MeasureTrajectory]) -> Result<Vec<f64>, DiagError> {
    let first = trajs.first().ok_or(DiagError::Empty)?;
    let times = first.snapshot_times();
    for tr in &trajs[1..] {
        let other = tr.snapshots.iter().map(|s| s.t);
        if tr.snapshots.len() != times.len()
            || times
                .iter()
                .zip(other)
                .any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
        {
            return Err(DiagError::InconsistentGrids);
        }
    }
    Ok(times)
}

/// Per-time statistics of `⟨X_t, f⟩` over an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummarySeries {
    pub name: String,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// One vector per requested quantile level.
    pub quantiles: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub replicates: usize,
    pub levels: Vec<f64>,
    pub series: Vec<SummarySeries>,
    /// Fraction of replicates extinct by each time.
    pub extinct: Vec<f64>,
}

/// Mean, variance and quantiles of `⟨X_t, f⟩` for each named test function.
///
/// Constant functions use the snapshot totals; other functions need atoms.
pub fn ensemble_summary(
    trajs: &[MeasureTrajectory],
    fns: &[(&str, TestFunction)],
    levels: &[f64],
) -> Result<EnsembleSummary, DiagError> {
    let times = common_times(trajs)?;
    let mut series = Vec::with_capacity(fns.len());
    for (name, f) in fns {
        let mut mean = Vec::with_capacity(times.len());
        let mut variance = Vec::with_capacity(times.len());
        let mut qs = vec![Vec::with_capacity(times.len()); levels.len()];
        for k in 0..times.len() {
            let mut vals = Vec::with_capacity(trajs.len());
            for tr in trajs {
                let s = &tr.snapshots[k];
                let v = match f.constant_value() {
                    Some(c) => c * s.total,
                    None => s
                        .atoms
                        .as_ref()
                        .ok_or(DiagError::NeedsAtoms)?
                        .integrate(|x| f.eval(x)),
                };
                vals.push(v);
            }
            let (m, v) = mean_var(&vals);
            mean.push(m);
            variance.push(if trajs.len() < 2 { 0.0 } else { v });
            vals.sort_by(f64::total_cmp);
            for (q, out) in levels.iter().zip(qs.iter_mut()) {
                out.push(quantile(&vals, *q));
            }
        }
        series.push(SummarySeries {
            name: (*name).to_string(),
            mean,
            variance,
            quantiles: qs,
        });
    }
    let extinct = times
        .iter()
        .map(|&t| {
            trajs
                .iter()
                .filter(|tr| tr.extinction_time.is_some_and(|e| e <= t))
                .count() as f64
                / trajs.len() as f64
        })
        .collect();
    Ok(EnsembleSummary {
        times,
        replicates: trajs.len(),
        levels: levels.to_vec(),
        series,
        extinct,
    })
}

/// Shape statistics of one recorded path over a time window, for telling regimes apart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternSummary {
    pub t0: f64,
    pub t1: f64,
    pub snapshots: usize,
    pub mass_mean: f64,
    pub mass_var: f64,
    /// `sd / mean` of the total mass.
    pub mass_cv: f64,
    /// `Σ (ΔX)² / (t1 - t0)` over consecutive snapshots: the bracket rate of the mass,
    /// insensitive to slow trends.
    pub mass_qv_rate: f64,
    /// Median width of the central 98% of the trait distribution.
    pub support_width: f64,
    /// Median of `Σ|h_{i+1} - h_i| / (2 max h)` on histograms coarsened by `coarsen`:
    /// near 1 for a smooth unimodal profile, large for sparse or branched ones.
    pub roughness: f64,
    /// Fraction of consecutive snapshot pairs whose modal bin is unchanged.
    pub mode_stability: f64,
    /// Median total-variation distance between consecutive normalized coarse profiles.
    pub profile_jitter: f64,
    pub extinct: bool,
}

/// Summary of the snapshots with `t0 <= t <= t1` that still carry individuals; needs
/// histograms.
pub fn pattern_summary(
    traj: &MeasureTrajectory,
    t0: f64,
    t1: f64,
    coarsen: usize,
) -> Result<PatternSummary, DiagError> {
    let edges = traj
        .bin_edges
        .as_ref()
        .ok_or_else(|| DiagError::InvalidInput("pattern summary needs histograms".into()))?;
    let coarsen = coarsen.max(1);
    let snaps: Vec<_> = traj
        .snapshots
        .iter()
        .filter(|s| s.t >= t0 && s.t <= t1 && s.total > 0.0 && s.histogram.is_some())
        .collect();
    if snaps.is_empty() {
        return Err(DiagError::InvalidInput(
            "no populated snapshots in the window".into(),
        ));
    }
    let masses: Vec<f64> = snaps.iter().map(|s| s.total).collect();
    let (mass_mean, mass_var) = mean_var(&masses);
    let mass_var = if masses.len() < 2 { 0.0 } else { mass_var };
    let mut widths = Vec::with_capacity(snaps.len());
    let mut rough = Vec::with_capacity(snaps.len());
    let mut modes = Vec::with_capacity(snaps.len());
    let mut profiles: Vec<Vec<f64>> = Vec::with_capacity(snaps.len());
    for s in &snaps {
        let h = s.histogram.as_ref().unwrap();
        let total: f64 = h.iter().sum();
        let q = |level: f64| -> f64 {
            let mut acc = 0.0;
            for (i, v) in h.iter().enumerate() {
                if acc + v >= level * total && *v > 0.0 {
                    let frac = ((level * total - acc) / v).clamp(0.0, 1.0);
                    return edges[i] + frac * (edges[i + 1] - edges[i]);
                }
                acc += v;
            }
            edges[edges.len() - 1]
        };
        widths.push(q(0.99) - q(0.01));
        let coarse: Vec<f64> = h.chunks(coarsen).map(|c| c.iter().sum()).collect();
        let max = coarse.iter().cloned().fold(0.0, f64::max);
        let var: f64 = coarse.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
            + coarse[0]
            + coarse[coarse.len() - 1];
        rough.push(var / (2.0 * max));
        profiles.push(coarse.iter().map(|v| v / total).collect());
        modes.push(
            h.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map_or(0, |m| m.0),
        );
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        quantile(v, 0.5)
    };
    let stable = modes.windows(2).filter(|w| w[0] == w[1]).count();
    let mut jitter: Vec<f64> = profiles
        .windows(2)
        .map(|w| stats::total_variation(&w[0], &w[1]))
        .collect();
    let span = snaps[snaps.len() - 1].t - snaps[0].t;
    let qv: f64 = snaps
        .windows(2)
        .map(|w| (w[1].total - w[0].total).powi(2))
        .sum();
    Ok(PatternSummary {
        t0,
        t1,
        snapshots: snaps.len(),
        mass_mean,
        mass_var,
        mass_cv: mass_var.sqrt() / mass_mean,
        mass_qv_rate: if span > 0.0 { qv / span } else { 0.0 },
        support_width: median(&mut widths),
        roughness: median(&mut rough),
        mode_stability: if modes.len() < 2 {
            1.0
        } else {
            stable as f64 / (modes.len() - 1) as f64
        },
        profile_jitter: if jitter.is_empty() {
            0.0
        } else {
            median(&mut jitter)
        },
        extinct: traj.extinction_time.is_some_and(|e| e <= t1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::run_replicates;
    use crate::model::{kisdi_model, validate_model, PointMeasureState, ScalingSpec};
    use crate::sim::{simulate_with_rng, Engine, RecorderConfig, SimConfig};

    #[test]
    fn summary_over_small_ensemble() {
        let m = kisdi_model(0.1).unwrap();
        validate_model(&m, 200, 1).unwrap();
        let s = ScalingSpec::plain(20).unwrap();
        let init = PointMeasureState::monomorphic(TraitValue::scalar(1.2), 40, &m);
        let cfg = SimConfig::new(Engine::Direct, 2.0).with_recorder(RecorderConfig::atoms(0.5));
        let trajs: Vec<_> = run_replicates(8, 5, Some(1), |_, rng| {
            simulate_with_rng(&m, &s, init.clone(), &cfg, rng).unwrap()
        });
        let fns = [
            ("mass", TestFunction::one()),
            ("trait", TestFunction::function(|x| x.x())),
        ];
        let sum = ensemble_summary(&trajs, &fns, &[0.1, 0.5, 0.9]).unwrap();
        assert_eq!(sum.times.len(), 5);
        assert_eq!(sum.series[0].mean[0], 40.0);
        assert_eq!(sum.series[0].variance[0], 0.0);
        assert!((sum.series[1].mean[0] - 48.0).abs() < 1e-9);
        for k in 0..5 {
            assert!(sum.series[0].quantiles[0][k] <= sum.series[0].quantiles[2][k]);
        }
        assert!(ensemble_summary(&[], &fns, &[]).is_err());
    }
}
