//! Evolutionary timescale: invasion fitness, invasion probability, the trait
//! substitution sequence and the micro-simulation experiments that check them.

mod invasion;
mod table;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;
use thiserror::Error;

use crate::limits::{equilibrium_nbar, LimitError};
use crate::model::{ModelSpec, TraitValue};
use crate::quadrature::adaptive_simpson;
use crate::sim::SimError;

pub use invasion::{
    invasion_experiment, micro_resident_trait, InvasionOptions, InvasionReport, ResidentOutcome,
};
pub use table::NbarTable;

#[derive(Debug, Error)]
pub enum TssError {
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error("mutant birth rate is zero at y = {y} against resident {x} while fitness is positive")]
    DegenerateBirthRate { y: f64, x: f64 },
    #[error("substitution sequence needs the monotonicity flag on the model")]
    NotMonotone,
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// `b(y, V(y - x) n̄(x)) - d(y, U(y - x) n̄(x))` for a known `n̄(x)`.
pub fn fitness_with(y: TraitValue, x: TraitValue, nbar_x: f64, spec: &ModelSpec) -> f64 {
    let h = y - x;
    spec.birth(y, spec.v().eval(h) * nbar_x) - spec.death(y, spec.u().eval(h) * nbar_x)
}

/// Invasion fitness of a rare mutant `y` in a resident population at `x`.
pub fn fitness(y: TraitValue, x: TraitValue, spec: &ModelSpec) -> Result<f64, TssError> {
    let n = equilibrium_nbar(x, spec)?;
    Ok(fitness_with(y, x, n, spec))
}

/// `[f(y, x)]_+ / b(y, V(y - x) n̄(x))` for a known `n̄(x)`.
pub fn invasion_probability_with(
    y: TraitValue,
    x: TraitValue,
    nbar_x: f64,
    spec: &ModelSpec,
) -> Result<f64, TssError> {
    let f = fitness_with(y, x, nbar_x, spec);
    if !(f > 0.0) {
        return Ok(0.0);
    }
    let b = spec.birth(y, spec.v().eval(y - x) * nbar_x);
    if !(b > 0.0) {
        return Err(TssError::DegenerateBirthRate { y: y.x(), x: x.x() });
    }
    // f = b - d <= b since d >= 0.
    debug_assert!(f <= b * (1.0 + 1e-12), "fitness {f} exceeds birth rate {b}");
    Ok((f / b).min(1.0))
}

/// Probability that a single mutant `y` invades a resident population at `x`.
pub fn invasion_probability(
    y: TraitValue,
    x: TraitValue,
    spec: &ModelSpec,
) -> Result<f64, TssError> {
    let n = equilibrium_nbar(x, spec)?;
    invasion_probability_with(y, x, n, spec)
}

/// Rate of mutation events in a resident population at `x`: `μ(x) n̄(x) b(x, V(0) n̄(x))`.
pub fn beta(x: TraitValue, spec: &ModelSpec) -> Result<f64, TssError> {
    let mu = spec.mu(x);
    if mu == 0.0 {
        return Ok(0.0);
    }
    let n = equilibrium_nbar(x, spec)?;
    Ok(mu * n * spec.birth(x, spec.v().eval(TraitValue::ZERO) * n))
}

fn one_dim(spec: &ModelSpec) -> Result<(f64, f64), TssError> {
    match (spec.space().dim(), spec.space().range()) {
        (1, Some(r)) => Ok(r),
        _ => Err(TssError::Limit(LimitError::Dimension)),
    }
}

/// `p_acc(x) = ∫ invasion_probability(y, x) M(x, y) dy`, the chance that a mutation
/// event at resident `x` leads to a substitution.
pub fn acceptance_probability(x: TraitValue, spec: &ModelSpec, tol: f64) -> Result<f64, TssError> {
    let (lo, hi) = one_dim(spec)?;
    let n = equilibrium_nbar(x, spec)?;
    let m = spec.mutation();
    let failed = std::cell::Cell::new(None);
    let g = |y: f64| {
        let yv = TraitValue::scalar(y);
        match invasion_probability_with(yv, x, n, spec) {
            Ok(p) => p * m.density(&x, &yv),
            Err(e) => {
                failed.set(Some(e.to_string()));
                0.0
            }
        }
    };
    let v = adaptive_simpson(&g, lo, hi, tol)
        .ok_or_else(|| TssError::Quadrature("p_acc did not converge".into()))?;
    if let Some(e) = failed.take() {
        return Err(TssError::Quadrature(e));
    }
    Ok(v)
}

/// Post-mutation kernel `κ(x, dy)`: an atom at `x` for failed invasions and the density
/// `invasion_probability(y, x) M(x, y)` for successful ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kappa {
    pub atom: f64,
    /// Mass of the continuous part by an independent trapezoid sum.
    pub continuous: f64,
}

impl Kappa {
    pub fn total(&self) -> f64 {
        self.atom + self.continuous
    }
}

pub fn kappa(x: TraitValue, spec: &ModelSpec) -> Result<Kappa, TssError> {
    let (lo, hi) = one_dim(spec)?;
    let atom = 1.0 - acceptance_probability(x, spec, 1e-10)?;
    let n = equilibrium_nbar(x, spec)?;
    let m = spec.mutation();
    let nodes = 200_000;
    let h = (hi - lo) / nodes as f64;
    let mut cont = 0.0;
    for j in 0..=nodes {
        let y = TraitValue::scalar(if j == nodes { hi } else { lo + j as f64 * h });
        let w = if j == 0 || j == nodes { 0.5 * h } else { h };
        cont += w * invasion_probability_with(y, x, n, spec)? * m.density(&x, &y);
    }
    Ok(Kappa {
        atom,
        continuous: cont,
    })
}

/// Resident trait and jump log of a substitution sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TssState {
    pub x: TraitValue,
    pub t: f64,
    /// `(time, from, to)` for every substitution.
    pub log: Vec<(f64, TraitValue, TraitValue)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TssOutcome {
    pub state: TssState,
    pub candidates: u64,
    pub accepted: u64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TssOptions {
    /// Consecutive rejections that raise a stall warning.
    pub stall_after: u64,
    /// Interpolate `n̄` from a table with this many intervals instead of solving at every jump.
    pub table_intervals: Option<usize>,
}

impl Default for TssOptions {
    fn default() -> Self {
        TssOptions {
            stall_after: 1_000_000,
            table_intervals: None,
        }
    }
}

/// Exact simulation of the substitution sequence on the mutation timescale: mutation
/// events at rate `β(x)`, mutant drawn from `M(x, .)`, accepted with the invasion
/// probability. Rejected candidates realize the atom of `κ` at `x`.
pub fn simulate_tss(
    x0: TraitValue,
    t_end: f64,
    spec: &ModelSpec,
    rng: &mut ChaCha8Rng,
    opts: &TssOptions,
) -> Result<TssOutcome, TssError> {
    if !spec.monotone_h5() {
        return Err(TssError::NotMonotone);
    }
    let table = match opts.table_intervals {
        Some(n) => Some(NbarTable::build(spec, n)?),
        None => None,
    };
    let nbar = |x: TraitValue| -> Result<f64, TssError> {
        match &table {
            Some(t) => Ok(t.eval(x.x())),
            None => Ok(equilibrium_nbar(x, spec)?),
        }
    };
    let mut x = x0;
    let mut t = 0.0;
    let mut log = Vec::new();
    let mut warnings = Vec::new();
    let (mut candidates, mut accepted, mut streak) = (0u64, 0u64, 0u64);
    let mut n = nbar(x)?;
    let v0 = spec.v().eval(TraitValue::ZERO);
    loop {
        let rate = spec.mu(x) * n * spec.birth(x, v0 * n);
        if !(rate > 0.0) {
            break;
        }
        let e: f64 = rng.sample(Exp1);
        t += e / rate;
        if t > t_end {
            break;
        }
        candidates += 1;
        let y = spec.mutation().sample(&x, rng);
        let p = invasion_probability_with(y, x, n, spec)?;
        if rng.random::<f64>() < p {
            log.push((t, x, y));
            x = y;
            n = nbar(x)?;
            accepted += 1;
            streak = 0;
        } else {
            streak += 1;
            if streak == opts.stall_after {
                let w = format!("{streak} consecutive rejected mutants at x = {x}, t = {t}");
                log::warn!("{w}");
                warnings.push(w);
            }
        }
    }
    Ok(TssOutcome {
        state: TssState { x, t: t_end, log },
        candidates,
        accepted,
        warnings,
    })
}

/// Time to the first substitution from resident `x` on the mutation timescale.
pub fn first_substitution_time(
    x: TraitValue,
    spec: &ModelSpec,
    rng: &mut ChaCha8Rng,
    max_candidates: u64,
) -> Result<Option<f64>, TssError> {
    let n = equilibrium_nbar(x, spec)?;
    let rate = beta(x, spec)?;
    if !(rate > 0.0) {
        return Ok(None);
    }
    let mut t = 0.0;
    for _ in 0..max_candidates {
        let e: f64 = rng.sample(Exp1);
        t += e / rate;
        let y = spec.mutation().sample(&x, rng);
        if rng.random::<f64>() < invasion_probability_with(y, x, n, spec)? {
            return Ok(Some(t));
        }
    }
    Ok(None)
}
