use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::trajectory::{MeasureTrajectory, Recorder};
use super::{Engine, Event, EventKind, SimConfig, SimError};
use crate::ensemble::stream_rng;
use crate::model::{ModelSpec, PointMeasureState, ScaledRates, ScalingSpec};

/// Rejection-engine acceptance slack for rounding in the thresholds.
const RATIO_SLACK: f64 = 1e-12;

/// One running trajectory: scaled rates, state and random stream.
#[derive(Debug, Clone)]
pub struct Simulator {
    rates: ScaledRates,
    state: PointMeasureState,
    rng: ChaCha8Rng,
    engine: Engine,
    c_bar: f64,
    cap: u64,
    weights: Vec<f64>,
    events: u64,
    proposals: u64,
}

impl Simulator {
    /// Fails with [`SimError::ValidationSkipped`] unless `validate_model` accepted `spec`.
    pub fn new(
        spec: &ModelSpec,
        scaling: &ScalingSpec,
        mut init: PointMeasureState,
        engine: Engine,
        rng: ChaCha8Rng,
    ) -> Result<Self, SimError> {
        if spec.validation().is_none() {
            return Err(SimError::ValidationSkipped);
        }
        let rates = ScaledRates::new(spec, scaling);
        init.attach(&rates);
        let c_bar = rates.rejection_constant();
        Ok(Simulator {
            rates,
            state: init,
            rng,
            engine,
            c_bar,
            cap: 10_000_000,
            weights: Vec::new(),
            events: 0,
            proposals: 0,
        })
    }

    pub fn with_population_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    pub fn state(&self) -> &PointMeasureState {
        &self.state
    }

    pub fn rates(&self) -> &ScaledRates {
        &self.rates
    }

    pub fn engine(&self) -> Engine {
        self.engine
    }

    pub fn time(&self) -> f64 {
        self.state.time()
    }

    /// Rejection clock rate `C̄`.
    pub fn c_bar(&self) -> f64 {
        self.c_bar
    }

    /// Non-null events applied so far.
    pub fn events(&self) -> u64 {
        self.events
    }

    /// Proposals drawn so far, null ones included.
    pub fn proposals(&self) -> u64 {
        self.proposals
    }

    /// Draws the next event without changing the state. `None` when no clock is active.
    pub fn propose(&mut self) -> Result<Option<Event>, SimError> {
        if self.state.is_empty() {
            return Ok(None);
        }
        self.proposals += 1;
        match self.engine {
            Engine::Direct => Ok(propose_direct(
                &self.state,
                &self.rates,
                &mut self.rng,
                &mut self.weights,
            )),
            Engine::Rejection => {
                propose_rejection(&self.state, &self.rates, self.c_bar, &mut self.rng)
            }
        }
    }

    /// Applies a proposal returned by [`Simulator::propose`] on the current state.
    pub fn apply(&mut self, ev: &Event) -> Result<(), SimError> {
        let model = self.rates.model();
        match ev.kind {
            EventKind::Death => self.state.remove_one(ev.class, model),
            EventKind::ClonalBirth | EventKind::MutantBirth => {
                if self.state.count() + 1 > self.cap {
                    return Err(SimError::PopulationExplosion {
                        count: self.state.count() + 1,
                        time: ev.time,
                    });
                }
                if ev.kind == EventKind::ClonalBirth {
                    self.state.add_clone(ev.class, model);
                } else {
                    let y = ev.child.expect("mutant birth carries a trait");
                    self.state.add_mutant(y, &self.rates);
                }
            }
            EventKind::Null => {}
        }
        if ev.kind != EventKind::Null {
            self.events += 1;
        }
        self.state.set_time(ev.time);
        Ok(())
    }

    pub fn step(&mut self) -> Result<Option<Event>, SimError> {
        let ev = self.propose()?;
        if let Some(e) = &ev {
            self.apply(e)?;
        }
        Ok(ev)
    }

    /// Applies all events up to time `t` and leaves the clock at `t`. The proposal that
    /// overshoots is discarded, which is exact because all clocks are memoryless.
    pub fn run_until(&mut self, t: f64) -> Result<(), SimError> {
        while let Some(ev) = self.propose()? {
            if ev.time > t {
                break;
            }
            self.apply(&ev)?;
        }
        if t > self.state.time() {
            self.state.set_time(t);
        }
        Ok(())
    }

    pub fn into_state(self) -> PointMeasureState {
        self.state
    }
}

fn propose_direct<R: Rng + ?Sized>(
    state: &PointMeasureState,
    rates: &ScaledRates,
    rng: &mut R,
    weights: &mut Vec<f64>,
) -> Option<Event> {
    weights.clear();
    let mut total = 0.0;
    for c in state.classes() {
        let b = rates.birth_with(c.trait_value, &c.consts, c.sv);
        let d = rates.death_with(c.trait_value, &c.consts, c.su);
        let w = c.count as f64 * (b + d);
        total += w;
        weights.push(w);
    }
    if !(total > 0.0) {
        return None;
    }
    let e: f64 = rng.sample(Exp1);
    let time = state.time() + e / total;
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut k = weights.iter().rposition(|&w| w > 0.0).unwrap();
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc && w > 0.0 {
            k = i;
            break;
        }
    }
    let c = &state.classes()[k];
    let x = c.trait_value;
    let b = rates.birth_with(x, &c.consts, c.sv);
    let d = rates.death_with(x, &c.consts, c.su);
    let u = rng.random::<f64>() * (b + d);
    if u < d {
        return Some(Event {
            time,
            kind: EventKind::Death,
            class: k,
            parent: x,
            child: None,
        });
    }
    let mu = c.consts.mu;
    if mu > 0.0 && rng.random::<f64>() < mu {
        let y = rates.mutation().sample(&x, rng);
        Some(Event {
            time,
            kind: EventKind::MutantBirth,
            class: k,
            parent: x,
            child: Some(y),
        })
    } else {
        Some(Event {
            time,
            kind: EventKind::ClonalBirth,
            class: k,
            parent: x,
            child: None,
        })
    }
}

fn propose_rejection<R: Rng + ?Sized>(
    state: &PointMeasureState,
    rates: &ScaledRates,
    c_bar: f64,
    rng: &mut R,
) -> Result<Option<Event>, SimError> {
    if !(c_bar > 0.0) {
        return Ok(None);
    }
    let n = state.count();
    let nf = n as f64;
    let tau: f64 = rng.sample(Exp1);
    let time = state.time() + tau / c_bar / (nf * (nf + 1.0));
    let k = state.class_of(rng.random_range(0..n))?;
    let c = &state.classes()[k];
    let x = c.trait_value;
    let b = rates.birth_with(x, &c.consts, c.sv);
    let d = rates.death_with(x, &c.consts, c.su);
    let mu = c.consts.mu;
    let denom = c_bar * (nf + 1.0);
    let w1 = d / denom;
    let w2 = w1 + (1.0 - mu) * b / denom;
    let worst = w2 + mu * b * rates.mutation_envelope_constant() / denom;
    if worst > 1.0 + RATIO_SLACK {
        return Err(SimError::EnvelopeBreach {
            ratio: worst,
            witness: format!("x = {x}, I = {n}, b = {b}, d = {d}, mu = {mu}"),
        });
    }
    let w: f64 = rng.random();
    if w < w1 {
        return Ok(Some(Event {
            time,
            kind: EventKind::Death,
            class: k,
            parent: x,
            child: None,
        }));
    }
    if w < w2 {
        return Ok(Some(Event {
            time,
            kind: EventKind::ClonalBirth,
            class: k,
            parent: x,
            child: None,
        }));
    }
    if mu > 0.0 && b > 0.0 {
        let m = rates.mutation();
        let z = m.sample_step(rng);
        let y = x + z;
        let w3 = w2 + mu * b * m.density(&x, &y) / (m.envelope_density(&z) * denom);
        if w < w3 {
            return Ok(Some(Event {
                time,
                kind: EventKind::MutantBirth,
                class: k,
                parent: x,
                child: Some(y),
            }));
        }
    }
    Ok(Some(Event {
        time,
        kind: EventKind::Null,
        class: k,
        parent: x,
        child: None,
    }))
}

/// One exact direct-method event on `state`. Returns `None` when every rate is zero.
pub fn step_direct<R: Rng + ?Sized>(
    state: &mut PointMeasureState,
    rates: &ScaledRates,
    rng: &mut R,
) -> Option<Event> {
    state.attach(rates);
    let mut w = Vec::new();
    let ev = propose_direct(state, rates, rng, &mut w)?;
    apply_free(state, rates, &ev);
    Some(ev)
}

/// One proposal of the thinning construction on `state`, possibly a null event.
pub fn step_rejection<R: Rng + ?Sized>(
    state: &mut PointMeasureState,
    rates: &ScaledRates,
    rng: &mut R,
) -> Result<Option<Event>, SimError> {
    state.attach(rates);
    let ev = propose_rejection(state, rates, rates.rejection_constant(), rng)?;
    if let Some(e) = &ev {
        apply_free(state, rates, e);
    }
    Ok(ev)
}

fn apply_free(state: &mut PointMeasureState, rates: &ScaledRates, ev: &Event) {
    match ev.kind {
        EventKind::Death => state.remove_one(ev.class, rates.model()),
        EventKind::ClonalBirth => state.add_clone(ev.class, rates.model()),
        EventKind::MutantBirth => {
            state.add_mutant(ev.child.unwrap(), rates);
        }
        EventKind::Null => {}
    }
    state.set_time(ev.time);
}

/// Simulates one trajectory on random stream 0 of `seed`.
pub fn simulate(
    spec: &ModelSpec,
    scaling: &ScalingSpec,
    init: PointMeasureState,
    cfg: &SimConfig,
    seed: u64,
) -> Result<MeasureTrajectory, SimError> {
    simulate_with_rng(spec, scaling, init, cfg, stream_rng(seed, 0))
}

pub fn simulate_with_rng(
    spec: &ModelSpec,
    scaling: &ScalingSpec,
    init: PointMeasureState,
    cfg: &SimConfig,
    rng: ChaCha8Rng,
) -> Result<MeasureTrajectory, SimError> {
    if init.is_empty() && !cfg.allow_empty {
        return Err(SimError::EmptyInit);
    }
    if !(cfg.t_end >= init.time()) || !cfg.t_end.is_finite() {
        return Err(SimError::InvalidConfig(format!(
            "t_end = {} before the initial time",
            cfg.t_end
        )));
    }
    let mut sim = Simulator::new(spec, scaling, init, cfg.engine, rng)?
        .with_population_cap(cfg.max_population);
    let mut rec = Recorder::new(&cfg.recorder, sim.rates(), sim.state(), cfg.t_end)?;
    let mut extinction = if sim.state().is_empty() {
        Some(sim.time())
    } else {
        None
    };
    loop {
        if let Some(cap) = cfg.max_events {
            if sim.events() >= cap {
                break;
            }
        }
        let ev = match sim.propose()? {
            Some(ev) if ev.time <= cfg.t_end => ev,
            _ => break,
        };
        if ev.kind == EventKind::Null {
            sim.state.set_time(ev.time);
            continue;
        }
        rec.flush_before(ev.time, sim.state());
        sim.apply(&ev)?;
        rec.on_event(&ev, sim.state());
        if sim.state().is_empty() {
            extinction = Some(ev.time);
            break;
        }
    }
    let stopped_early = cfg.max_events.is_some_and(|cap| sim.events() >= cap);
    let t_stop = if stopped_early { sim.time() } else { cfg.t_end };
    Ok(rec.finish(
        sim.state(),
        t_stop,
        extinction,
        sim.engine(),
        sim.events(),
        sim.proposals(),
        sim.c_bar(),
    ))
}
