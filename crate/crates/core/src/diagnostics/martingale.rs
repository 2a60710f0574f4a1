use std::collections::HashMap;

use serde::Serialize;

use super::stats::mean_var;
use super::{DiagError, TestFunction};
use crate::model::{ModelSpec, ScaledRates, ScalingSpec, TraitValue};
use crate::quadrature::adaptive_simpson;
use crate::sim::{MeasureTrajectory, Snapshot};

/// Which predicted quadratic variation to compare against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BracketForm {
    /// Finite-`K` bracket of the scaled process.
    Exact,
    /// Leading term under acceleration: `2 K^η ∫ r f² dν`, i.e. `2 ∫ r f² dX` for `η = 1`
    /// on the renormalized measure.
    SuperprocessLimit,
}

/// How the time integrals were evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CompensatorMode {
    /// Snapshot after every event: left Riemann sums are exact.
    Audit,
    /// Trapezoid rule on the snapshot grid with a Richardson error estimate.
    Cadence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub t: f64,
    pub replicates: usize,
    pub mode: CompensatorMode,
    pub form: BracketForm,
    pub mean_residual: f64,
    pub se_residual: f64,
    /// `mean / se`; zero when every residual vanishes.
    pub z: f64,
    pub var_residual: f64,
    pub mean_bracket: f64,
    /// Empirical variance over predicted bracket.
    pub ratio: f64,
    /// Approximate 95% interval of the ratio.
    pub ratio_ci: (f64, f64),
    /// Mean absolute quadrature error estimate of the compensator.
    pub compensator_error: f64,
    /// Mean quadrature error estimate of the bracket integral.
    pub bracket_error: f64,
    pub residuals: Vec<f64>,
    pub brackets: Vec<f64>,
}

impl MartingaleReport {
    /// Mean residual within three standard errors of zero.
    pub fn zero_mean(&self) -> bool {
        self.z.abs() < 3.0
    }
}

struct MutationMoments<'a> {
    rates: &'a ScaledRates,
    f: TestFunction,
    f2: TestFunction,
    cache: HashMap<u64, (f64, f64)>,
}

impl MutationMoments<'_> {
    /// `(∫ f M_K(x, dz), ∫ f² M_K(x, dz))`.
    fn at(&mut self, x: TraitValue) -> Result<(f64, f64), DiagError> {
        if let (Some(a), Some(b)) = (self.f.constant_value(), self.f2.constant_value()) {
            return Ok((a, b));
        }
        let key = x.x().to_bits();
        if let Some(v) = self.cache.get(&key) {
            return Ok(*v);
        }
        let m = self.rates.mutation();
        let (lo, hi) = m.space().range().ok_or(DiagError::Dimension)?;
        if m.space().dim() != 1 {
            return Err(DiagError::Dimension);
        }
        let s = m.sigma();
        let (a, b) = ((x.x() - 10.0 * s).max(lo), (x.x() + 10.0 * s).min(hi));
        let integrate = |g: &TestFunction| {
            adaptive_simpson(
                &|z: f64| g.eval(TraitValue::scalar(z)) * m.density(&x, &TraitValue::scalar(z)),
                a,
                b,
                1e-10,
            )
            .ok_or_else(|| {
                DiagError::InvalidInput(format!("mutation integral failed at x = {}", x.x()))
            })
        };
        let v = (integrate(&self.f)?, integrate(&self.f2)?);
        self.cache.insert(key, v);
        Ok(v)
    }
}

/// Integrands `(⟨ν,f⟩, drift, bracket)` of one snapshot in the units of the trajectory.
fn integrands(
    snap: &Snapshot,
    rates: &ScaledRates,
    weight_to_count: f64,
    form: BracketForm,
    mm: &mut MutationMoments,
) -> Result<(f64, f64, f64), DiagError> {
    let atoms = &snap.atoms.as_ref().ok_or(DiagError::NeedsAtoms)?.atoms;
    let model = rates.model();
    let s = 1.0 / weight_to_count;
    let counts: Vec<f64> = atoms
        .iter()
        .map(|a| (a.1 * weight_to_count).round())
        .collect();
    let k_eta = rates.scaling().acceleration();
    let (mut value, mut drift, mut bracket) = (0.0, 0.0, 0.0);
    for (i, &(x, _)) in atoms.iter().enumerate() {
        let n = counts[i];
        if n == 0.0 {
            continue;
        }
        let fx = mm.f.eval(x);
        value += n * fx;
        let mut su = 0.0;
        let mut sv = 0.0;
        for (j, &(y, _)) in atoms.iter().enumerate() {
            su += counts[j] * model.u().eval(x - y);
            sv += counts[j] * model.v().eval(x - y);
        }
        let (b, d, mu) = rates.rates(x, su, sv);
        let (mf, mf2) = if mu > 0.0 { mm.at(x)? } else { (0.0, 0.0) };
        drift += n * (((1.0 - mu) * b - d) * fx + mu * b * mf);
        bracket += n * match form {
            BracketForm::Exact => ((1.0 - mu) * b + d) * fx * fx + mu * b * mf2,
            BracketForm::SuperprocessLimit => 2.0 * k_eta * rates.scaling().r(x) * fx * fx,
        };
    }
    Ok((s * value, s * drift, s * s * bracket))
}

/// `Σ g_k (t_{k+1} - t_k)`.
fn left_riemann(t: &[f64], g: &[f64]) -> f64 {
    t.windows(2).zip(g).map(|(w, v)| v * (w[1] - w[0])).sum()
}

fn trapezoid_stride(t: &[f64], g: &[f64], stride: usize) -> f64 {
    let n = t.len() - 1;
    let m = n - n % stride;
    let mut acc = 0.0;
    let mut i = 0;
    while i < m {
        acc += 0.5 * (g[i] + g[i + stride]) * (t[i + stride] - t[i]);
        i += stride;
    }
    for j in m..n {
        acc += 0.5 * (g[j] + g[j + 1]) * (t[j + 1] - t[j]);
    }
    acc
}

/// Trapezoid integral and the Richardson estimate `|T_h - T_2h| / 3`.
fn trapezoid_with_error(t: &[f64], g: &[f64]) -> (f64, f64) {
    if t.len() < 2 {
        return (0.0, 0.0);
    }
    let fine = trapezoid_stride(t, g, 1);
    if t.len() < 3 {
        return (fine, fine.abs());
    }
    let coarse = trapezoid_stride(t, g, 2);
    (fine, (fine - coarse).abs() / 3.0)
}

/// Residual `M^f_t = ⟨ν_t,f⟩ - ⟨ν_0,f⟩ - ∫ drift` at the final snapshot of each
/// trajectory, compared against the predicted bracket.
///
/// Renormalized trajectories give the residual of `X^K`, raw ones that of `ν`. Audit
/// trajectories are integrated exactly; for cadence snapshots the run fails with
/// `InsufficientCadence` when the quadrature error of the bracket exceeds 10% of it or
/// the compensator error exceeds 10% of the residual standard deviation.
pub fn martingale_residual(
    trajs: &[MeasureTrajectory],
    f: &TestFunction,
    spec: &ModelSpec,
    scaling: &ScalingSpec,
    form: BracketForm,
) -> Result<MartingaleReport, DiagError> {
    let first = trajs.first().ok_or(DiagError::Empty)?;
    let mode = if trajs.iter().all(|t| t.audit) {
        CompensatorMode::Audit
    } else {
        CompensatorMode::Cadence
    };
    let rates = ScaledRates::new(spec, scaling);
    let mut mm = MutationMoments {
        rates: &rates,
        f: f.clone(),
        f2: f.squared(),
        cache: HashMap::new(),
    };
    let mut residuals = Vec::with_capacity(trajs.len());
    let mut brackets = Vec::with_capacity(trajs.len());
    let (mut comp_err, mut br_err) = (0.0, 0.0);
    for tr in trajs {
        let w2c = if tr.renormalized { tr.k as f64 } else { 1.0 };
        let n = tr.snapshots.len();
        if n == 0 {
            return Err(DiagError::NeedsAtoms);
        }
        let mut ts = Vec::with_capacity(n);
        let mut vals = Vec::with_capacity(n);
        let mut drifts = Vec::with_capacity(n);
        let mut brs = Vec::with_capacity(n);
        for snap in &tr.snapshots {
            let (v, d, b) = integrands(snap, &rates, w2c, form, &mut mm)?;
            ts.push(snap.t);
            vals.push(v);
            drifts.push(d);
            brs.push(b);
        }
        let (comp, bracket) = match mode {
            CompensatorMode::Audit => (left_riemann(&ts, &drifts), left_riemann(&ts, &brs)),
            CompensatorMode::Cadence => {
                let (c, ce) = trapezoid_with_error(&ts, &drifts);
                let (b, be) = trapezoid_with_error(&ts, &brs);
                comp_err += ce;
                br_err += be;
                (c, b)
            }
        };
        residuals.push(vals[n - 1] - vals[0] - comp);
        brackets.push(bracket);
    }
    let r = trajs.len() as f64;
    comp_err /= r;
    br_err /= r;
    let (mean, var) = mean_var(&residuals);
    let var = if trajs.len() < 2 { 0.0 } else { var };
    let (mean_bracket, var_bracket) = mean_var(&brackets);
    let var_bracket = if trajs.len() < 2 { 0.0 } else { var_bracket };
    if mode == CompensatorMode::Cadence {
        if br_err > 0.1 * mean_bracket.abs() {
            return Err(DiagError::InsufficientCadence {
                error: br_err,
                reference: mean_bracket.abs(),
            });
        }
        if comp_err > 0.1 * mean_bracket.abs().sqrt() {
            return Err(DiagError::InsufficientCadence {
                error: comp_err,
                reference: mean_bracket.abs().sqrt(),
            });
        }
    }
    let se = (var / r).sqrt();
    let z = if se > 0.0 {
        mean / se
    } else if mean == 0.0 {
        0.0
    } else {
        f64::INFINITY * mean.signum()
    };
    let ratio = if mean_bracket > 0.0 {
        var / mean_bracket
    } else {
        f64::NAN
    };
    // Delta method on the sample variance (fourth moment) and the bracket mean.
    let m4 = residuals.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / r;
    let rel_var_sd = if var > 0.0 {
        ((m4 / (var * var) - (r - 3.0) / (r - 1.0)).max(0.0) / r).sqrt()
    } else {
        0.0
    };
    let rel_br_sd = if mean_bracket > 0.0 {
        (var_bracket / r).sqrt() / mean_bracket
    } else {
        0.0
    };
    let rel = (rel_var_sd.powi(2) + rel_br_sd.powi(2)).sqrt();
    Ok(MartingaleReport {
        t: first.t_end,
        replicates: trajs.len(),
        mode,
        form,
        mean_residual: mean,
        se_residual: se,
        z,
        var_residual: var,
        mean_bracket,
        ratio,
        ratio_ci: (ratio * (1.0 - 1.96 * rel), ratio * (1.0 + 1.96 * rel)),
        compensator_error: comp_err,
        bracket_error: br_err,
        residuals,
        brackets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::run_replicates;
    use crate::model::{
        linear_logistic_model, validate_model, CompetitionKernel, LinearLogisticParams,
        PointMeasureState,
    };
    use crate::sim::{simulate_with_rng, Engine, RecorderConfig, SimConfig};

    fn yule() -> ModelSpec {
        let p = LinearLogisticParams {
            b0: 1.0,
            b1: 0.0,
            d0: 0.0,
            alpha: 0.0,
            kernel: CompetitionKernel::Constant { height: 0.0 },
            mu: 0.0,
            ..Default::default()
        };
        let m = linear_logistic_model(&p).unwrap();
        validate_model(&m, 100, 0).unwrap();
        m
    }

    #[test]
    fn zero_horizon_gives_zero_residual() {
        let m = yule();
        let s = ScalingSpec::plain(1).unwrap();
        let init = PointMeasureState::monomorphic(TraitValue::scalar(1.0), 10, &m);
        let mut rec = RecorderConfig::atoms(1.0);
        rec.audit = true;
        let cfg = SimConfig::new(Engine::Direct, 0.0).with_recorder(rec);
        let trajs = run_replicates(4, 1, Some(1), |_, rng| {
            simulate_with_rng(&m, &s, init.clone(), &cfg, rng).unwrap()
        });
        let rep =
            martingale_residual(&trajs, &TestFunction::one(), &m, &s, BracketForm::Exact).unwrap();
        assert!(rep.residuals.iter().all(|&r| r == 0.0));
        assert_eq!(rep.z, 0.0);
    }

    #[test]
    fn yule_audit_residual_is_centred() {
        let m = yule();
        let s = ScalingSpec::plain(1).unwrap();
        let init = PointMeasureState::monomorphic(TraitValue::scalar(1.0), 20, &m);
        let mut rec = RecorderConfig::atoms(1.0);
        rec.audit = true;
        let cfg = SimConfig::new(Engine::Direct, 0.5).with_recorder(rec);
        let trajs = run_replicates(400, 3, None, |_, rng| {
            simulate_with_rng(&m, &s, init.clone(), &cfg, rng).unwrap()
        });
        let rep =
            martingale_residual(&trajs, &TestFunction::one(), &m, &s, BracketForm::Exact).unwrap();
        assert_eq!(rep.mode, CompensatorMode::Audit);
        assert!(rep.zero_mean(), "z = {}", rep.z);
        // E ∫ b I ds = I0 (e^{t} - 1).
        let expected = 20.0 * (0.5f64.exp() - 1.0);
        assert!((rep.mean_bracket / expected - 1.0).abs() < 0.05);
        assert!(rep.ratio > 0.75 && rep.ratio < 1.3, "ratio {}", rep.ratio);
    }

    #[test]
    fn coarse_cadence_is_rejected() {
        let m = yule();
        let s = ScalingSpec::plain(1).unwrap();
        let init = PointMeasureState::monomorphic(TraitValue::scalar(1.0), 20, &m);
        let cfg = SimConfig::new(Engine::Direct, 3.0).with_recorder(RecorderConfig::atoms(1.5));
        let trajs = run_replicates(20, 3, Some(1), |_, rng| {
            simulate_with_rng(&m, &s, init.clone(), &cfg, rng).unwrap()
        });
        let err = martingale_residual(&trajs, &TestFunction::one(), &m, &s, BracketForm::Exact)
            .unwrap_err();
        assert!(matches!(err, DiagError::InsufficientCadence { .. }));
    }

    #[test]
    fn quadrature_helpers() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let g = [0.0, 1.0, 4.0, 9.0];
        assert_eq!(left_riemann(&t, &g), 5.0);
        let (v, e) = trapezoid_with_error(&t, &g);
        assert!((v - 9.5).abs() < 1e-14);
        assert!(e > 0.0);
    }
}
