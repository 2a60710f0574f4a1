use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{invasion_probability, TssError};
use crate::ensemble::run_replicates;
use crate::limits::equilibrium_nbar;
use crate::model::{
    validate_model, ModelSpec, PointMeasureState, ScalingMode, ScalingSpec, TraitValue,
};
use crate::sim::{Engine, Simulator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvasionOptions {
    /// Event budget per replicate; exhausted replicates count as timeouts.
    pub max_events: u64,
    pub workers: Option<usize>,
    pub engine: Engine,
}

impl Default for InvasionOptions {
    fn default() -> Self {
        InvasionOptions {
            max_events: 50_000_000,
            workers: None,
            engine: Engine::Direct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvasionReport {
    pub y: f64,
    pub x: f64,
    pub k: u64,
    pub replicates: usize,
    /// Replicates that reached a monomorphic state.
    pub completed: usize,
    pub fixations: usize,
    pub timeouts: usize,
    /// Fraction of completed replicates in which the mutant lineage remained.
    pub fix_freq: f64,
    pub predicted: f64,
    /// `sqrt(p (1 - p) / completed)` at the predicted `p`.
    pub binomial_sigma: f64,
    /// Mean time until the population became monomorphic.
    pub mean_theta0: f64,
    pub mean_theta0_fixed: Option<f64>,
}

impl InvasionReport {
    /// `|fix_freq - predicted|` in binomial standard deviations.
    pub fn z_score(&self) -> f64 {
        (self.fix_freq - self.predicted).abs() / self.binomial_sigma.max(f64::MIN_POSITIVE)
    }
}

enum Outcome {
    Mutant(f64),
    Resident(f64),
    Timeout,
}

/// Starts `⌊K n̄(x)⌋` residents at `x` and one mutant at `y` without mutation and runs
/// each replicate until one lineage is gone.
pub fn invasion_experiment(
    spec: &ModelSpec,
    x: TraitValue,
    y: TraitValue,
    k: u64,
    replicates: usize,
    seed: u64,
    opts: &InvasionOptions,
) -> Result<InvasionReport, TssError> {
    let model = spec.with_mu(0.0);
    validate_model(&model, 500, seed).map_err(|e| TssError::Sim(e.into()))?;
    let scaling = ScalingSpec::plain(k).map_err(|e| TssError::Sim(e.into()))?;
    let nbar = equilibrium_nbar(x, &model)?;
    let residents = (k as f64 * nbar).floor() as u64;
    let predicted = invasion_probability(y, x, &model)?;
    let init = PointMeasureState::from_classes(&[(x, residents), (y, 1)], &model);
    let mutant_lineage = init.classes().last().map(|c| c.lineage).unwrap_or(1);

    let outcomes = run_replicates(replicates, seed, opts.workers, |_, rng: ChaCha8Rng| {
        let mut sim = match Simulator::new(&model, &scaling, init.clone(), opts.engine, rng) {
            Ok(s) => s,
            Err(e) => return Err(e),
        };
        loop {
            if sim.state().num_classes() <= 1 {
                let fixed = sim
                    .state()
                    .classes()
                    .first()
                    .is_some_and(|c| c.lineage == mutant_lineage);
                return Ok(if fixed {
                    Outcome::Mutant(sim.time())
                } else {
                    Outcome::Resident(sim.time())
                });
            }
            if sim.events() >= opts.max_events {
                return Ok(Outcome::Timeout);
            }
            if sim.step()?.is_none() {
                return Ok(Outcome::Timeout);
            }
        }
    });

    let (mut fixations, mut timeouts, mut completed) = (0usize, 0usize, 0usize);
    let (mut theta_sum, mut theta_fixed) = (0.0, 0.0);
    for o in outcomes {
        match o? {
            Outcome::Mutant(t) => {
                fixations += 1;
                completed += 1;
                theta_sum += t;
                theta_fixed += t;
            }
            Outcome::Resident(t) => {
                completed += 1;
                theta_sum += t;
            }
            Outcome::Timeout => timeouts += 1,
        }
    }
    let n = completed.max(1) as f64;
    Ok(InvasionReport {
        y: y.x(),
        x: x.x(),
        k,
        replicates,
        completed,
        fixations,
        timeouts,
        fix_freq: fixations as f64 / n,
        predicted,
        binomial_sigma: (predicted * (1.0 - predicted) / n).sqrt(),
        mean_theta0: theta_sum / n,
        mean_theta0_fixed: if fixations > 0 {
            Some(theta_fixed / fixations as f64)
        } else {
            None
        },
    })
}

/// State of a rare-mutation micro-simulation at a mutation-timescale time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidentOutcome {
    /// Trait of the most numerous class, `None` after extinction.
    pub resident: Option<TraitValue>,
    /// Fraction of the population in that class.
    pub share: f64,
    pub classes: usize,
    pub micro_time: f64,
}

/// Runs the micro-model with mutation probability scaled by `u_K` from `⌊K n̄(x0)⌋`
/// individuals at `x0` up to micro time `t / (K u_K)`.
pub fn micro_resident_trait(
    spec: &ModelSpec,
    k: u64,
    u_k: f64,
    x0: TraitValue,
    t: f64,
    rng: ChaCha8Rng,
) -> Result<ResidentOutcome, TssError> {
    let scaling = ScalingSpec::new(k, 1.0, ScalingMode::RareMutationTss { u_k })
        .map_err(|e| TssError::Sim(e.into()))?;
    let n0 = (k as f64 * equilibrium_nbar(x0, spec)?).floor() as u64;
    let init = PointMeasureState::monomorphic(x0, n0, spec);
    let mut sim = Simulator::new(spec, &scaling, init, Engine::Direct, rng)?;
    let micro_time = t / (k as f64 * u_k);
    sim.run_until(micro_time)?;
    let st = sim.state();
    let best = st.classes().iter().max_by_key(|c| c.count);
    Ok(ResidentOutcome {
        resident: best.map(|c| c.trait_value),
        share: best.map_or(0.0, |c| c.count as f64 / st.count() as f64),
        classes: st.num_classes(),
        micro_time,
    })
}
