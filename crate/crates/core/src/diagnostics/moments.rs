use serde::Serialize;

use super::{common_times, DiagError};
use crate::model::{Kernel, ModelSpec, ScaledRates, ScalingSpec};
use crate::sim::MeasureTrajectory;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    /// Window centres.
    pub times: Vec<f64>,
    /// `N(t) = E I(t)` at the centres.
    pub n_mean: Vec<f64>,
    /// `(N(t+h) - N(t-h)) / 2h`.
    pub lhs: Vec<f64>,
    /// Window average of `E[Σ_i (b - d)(x_i) - Σ_{i,j} α(x_i) U_K(x_i - x_j)]`.
    pub rhs: Vec<f64>,
    /// Same average through `(b - d) N - α E[I²] / K`, only for constant `U` and traits
    /// sharing `b`, `d`, `α`.
    pub rhs_mean_field: Option<Vec<f64>>,
    /// `max |lhs - rhs| / N` over centres with `N > 0`.
    pub max_rel_mismatch: f64,
    pub replicates: usize,
    pub half_width: f64,
}

fn simpson(g: &[f64], dt: f64) -> f64 {
    let n = g.len() - 1;
    debug_assert!(n % 2 == 0 && n > 0);
    let mut acc = g[0] + g[n];
    for (i, v) in g.iter().enumerate().take(n).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * dt / 3.0
}

/// Checks `dN/dt = E[...]` for a linear-logistic model on a uniformly spaced snapshot
/// grid. Both sides come from the same ensemble: the left side is a central difference
/// over `[t - h, t + h]`, the right side the Simpson average of the ensemble mean over
/// the same window. `h` is rounded to a whole number of snapshot intervals.
pub fn moment_identity_check(
    trajs: &[MeasureTrajectory],
    spec: &ModelSpec,
    scaling: &ScalingSpec,
    half_width: f64,
) -> Result<MomentReport, DiagError> {
    if !spec.is_linear_logistic() {
        return Err(DiagError::NotLinearLogistic);
    }
    let times = common_times(trajs)?;
    if times.len() < 3 {
        return Err(DiagError::InvalidInput(
            "need at least three snapshots".into(),
        ));
    }
    let dt = times[1] - times[0];
    if times
        .windows(2)
        .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0))
    {
        // The final snapshot may close a partial interval; drop it if so.
        if times[..times.len() - 1]
            .windows(2)
            .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0))
        {
            return Err(DiagError::InvalidInput(
                "moment check needs a uniform snapshot grid".into(),
            ));
        }
    }
    let usable =
        if ((times[times.len() - 1] - times[times.len() - 2]) - dt).abs() > 1e-9 * dt.max(1.0) {
            times.len() - 1
        } else {
            times.len()
        };
    let m = ((half_width / dt).round() as usize).max(1);
    if usable < 2 * m + 1 {
        return Err(DiagError::InvalidInput(
            "window wider than the recorded horizon".into(),
        ));
    }
    let rates = ScaledRates::new(spec, scaling);
    let model = rates.model();
    let inv_k = rates.inv_k();
    let r = trajs.len() as f64;

    let mut n_mean = vec![0.0; usable];
    let mut rhs_mean = vec![0.0; usable];
    let mut i2_mean = vec![0.0; usable];
    for tr in trajs {
        let w2c = if tr.renormalized { tr.k as f64 } else { 1.0 };
        for k in 0..usable {
            let atoms = &tr.snapshots[k]
                .atoms
                .as_ref()
                .ok_or(DiagError::NeedsAtoms)?
                .atoms;
            let counts: Vec<f64> = atoms.iter().map(|a| (a.1 * w2c).round()).collect();
            let total: f64 = counts.iter().sum();
            let mut g = 0.0;
            for (i, &(x, _)) in atoms.iter().enumerate() {
                let (b0, d0, alpha) = model.linear_parts(x).ok_or(DiagError::NotLinearLogistic)?;
                let pair: f64 = atoms
                    .iter()
                    .zip(&counts)
                    .map(|(&(y, _), &n)| n * model.u().eval(x - y))
                    .sum();
                g += counts[i] * (b0 - d0 - alpha * pair * inv_k);
            }
            n_mean[k] += total / r;
            rhs_mean[k] += g / r;
            i2_mean[k] += total * total / r;
        }
    }

    // The mean-field form needs a constant kernel and one set of rates for every atom.
    let mean_field = match model.u() {
        Kernel::Constant(u) => {
            let mut parts = trajs
                .iter()
                .flat_map(|tr| &tr.snapshots)
                .flat_map(|s| s.atoms.iter().flat_map(|a| &a.atoms));
            let first = parts.next().and_then(|a| model.linear_parts(a.0));
            match first {
                Some(p) if parts.all(|a| model.linear_parts(a.0) == Some(p)) => {
                    Some((p.0 - p.1, p.2 * u))
                }
                _ => None,
            }
        }
        _ => None,
    };

    let mut centres = Vec::new();
    let (mut nm, mut lhs, mut rhs, mut mf) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut worst: f64 = 0.0;
    for k in m..usable - m {
        let width = times[k + m] - times[k - m];
        let l = (n_mean[k + m] - n_mean[k - m]) / width;
        let rr = simpson(&rhs_mean[k - m..=k + m], dt) / width;
        if let Some((growth, au)) = mean_field {
            let g: Vec<f64> = (k - m..=k + m)
                .map(|j| growth * n_mean[j] - au * i2_mean[j] * inv_k)
                .collect();
            mf.push(simpson(&g, dt) / width);
        }
        if n_mean[k] > 0.0 {
            worst = worst.max((l - rr).abs() / n_mean[k]);
        }
        centres.push(times[k]);
        nm.push(n_mean[k]);
        lhs.push(l);
        rhs.push(rr);
    }
    Ok(MomentReport {
        times: centres,
        n_mean: nm,
        lhs,
        rhs,
        rhs_mean_field: mean_field.map(|_| mf),
        max_rel_mismatch: worst,
        replicates: trajs.len(),
        half_width: m as f64 * dt,
    })
}
