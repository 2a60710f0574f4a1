use serde::Serialize;

use super::{Engine, Event, SimError};
use crate::model::{PointMeasureState, ScaledRates, TraitValue};

/// What the recorder keeps.
#[derive(Debug, Clone, PartialEq)]
pub struct RecorderConfig {
    /// Snapshot spacing; `None` keeps only the initial and final states.
    pub snapshot_dt: Option<f64>,
    /// Histogram bins over the first trait coordinate; `None` disables histograms.
    pub bins: Option<usize>,
    /// Histogram range, defaulting to the trait box. Values outside fall in the edge bins.
    pub hist_range: Option<(f64, f64)>,
    /// Keep the exact atom list (one entry per class) in every snapshot.
    pub atoms: bool,
    /// Additional exact atom dumps.
    pub atom_times: Vec<f64>,
    /// Snapshot after every event, with atoms. For small runs only.
    pub audit: bool,
    /// Record the mass after every event instead of at snapshot times.
    pub mass_every_event: bool,
    pub event_log: bool,
}

impl Default for RecorderConfig {
    fn default() -> Self {
        RecorderConfig {
            snapshot_dt: Some(1.0),
            bins: Some(200),
            hist_range: None,
            atoms: false,
            atom_times: Vec::new(),
            audit: false,
            mass_every_event: true,
            event_log: false,
        }
    }
}

impl RecorderConfig {
    /// Mass track at snapshot times only, no histograms: the cheapest useful recorder.
    pub fn mass_only(dt: f64) -> Self {
        RecorderConfig {
            snapshot_dt: Some(dt),
            bins: None,
            mass_every_event: false,
            ..Default::default()
        }
    }

    /// Atom snapshots at spacing `dt`.
    pub fn atoms(dt: f64) -> Self {
        RecorderConfig {
            snapshot_dt: Some(dt),
            bins: None,
            atoms: true,
            mass_every_event: false,
            ..Default::default()
        }
    }
}

/// A measure `Σ w_k δ_{x_k}`, one atom per lineage class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measure {
    pub atoms: Vec<(TraitValue, f64)>,
}

impl Measure {
    pub fn from_state(state: &PointMeasureState) -> Self {
        Measure {
            atoms: state
                .classes()
                .iter()
                .map(|c| (c.trait_value, c.count as f64))
                .collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// `⟨ν, f⟩`.
    pub fn integrate<F: Fn(TraitValue) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().map(|&(x, w)| w * f(x)).sum()
    }

    fn scale(&mut self, s: f64) {
        for a in &mut self.atoms {
            a.1 *= s;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub total: f64,
    pub histogram: Option<Vec<f64>>,
    pub atoms: Option<Measure>,
}

/// Recorded path of one simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureTrajectory {
    /// System size used by [`renormalize`].
    pub k: u64,
    pub renormalized: bool,
    /// Snapshots were taken after every event.
    pub audit: bool,
    pub t_end: f64,
    pub bin_edges: Option<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
    pub atom_dumps: Vec<Snapshot>,
    /// `(t, mass)`, piecewise constant to the right.
    pub mass: Vec<(f64, f64)>,
    pub extinction_time: Option<f64>,
    pub events: Option<Vec<Event>>,
    pub engine: Engine,
    pub event_count: u64,
    pub proposals: u64,
    /// Clock rate of the rejection engine for this model and scaling.
    pub c_bar: f64,
}

impl MeasureTrajectory {
    /// Mass at time `t` from the mass track.
    pub fn mass_at(&self, t: f64) -> f64 {
        let i = self.mass.partition_point(|&(s, _)| s <= t);
        if i == 0 {
            self.mass.first().map_or(0.0, |m| m.1)
        } else {
            self.mass[i - 1].1
        }
    }

    /// `(1/(t1 - t0)) ∫_{t0}^{t1} mass dt`, exact for a per-event mass track.
    pub fn time_average_mass(&self, t0: f64, t1: f64) -> f64 {
        assert!(t1 > t0);
        let mut acc = 0.0;
        let mut cur = self.mass_at(t0);
        let mut last = t0;
        let start = self.mass.partition_point(|&(s, _)| s <= t0);
        for &(s, m) in &self.mass[start..] {
            if s >= t1 {
                break;
            }
            acc += cur * (s - last);
            cur = m;
            last = s;
        }
        acc += cur * (t1 - last);
        acc / (t1 - t0)
    }

    pub fn final_snapshot(&self) -> Option<&Snapshot> {
        self.snapshots.last()
    }

    /// Latest snapshot at or before `t`.
    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        let i = self
            .snapshots
            .partition_point(|s| s.t <= t * (1.0 + 1e-12) + 1e-12);
        i.checked_sub(1).map(|i| &self.snapshots[i])
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }
}

/// Divides all masses by `k`.
pub fn renormalize(traj: &MeasureTrajectory, k: u64) -> Result<MeasureTrajectory, SimError> {
    if traj.renormalized {
        return Err(SimError::AlreadyRenormalized);
    }
    if k == 0 {
        return Err(SimError::InvalidConfig("K must be positive".into()));
    }
    let s = 1.0 / k as f64;
    let mut out = traj.clone();
    out.k = k;
    out.renormalized = true;
    for snap in out.snapshots.iter_mut().chain(out.atom_dumps.iter_mut()) {
        snap.total *= s;
        if let Some(h) = &mut snap.histogram {
            h.iter_mut().for_each(|v| *v *= s);
        }
        if let Some(a) = &mut snap.atoms {
            a.scale(s);
        }
    }
    out.mass.iter_mut().for_each(|m| m.1 *= s);
    Ok(out)
}

pub(crate) struct Recorder {
    cfg: RecorderConfig,
    k: u64,
    t0: f64,
    t_end: f64,
    edges: Option<(f64, f64, usize)>,
    next_grid: u64,
    atom_times: Vec<f64>,
    next_atom: usize,
    snapshots: Vec<Snapshot>,
    atom_dumps: Vec<Snapshot>,
    mass: Vec<(f64, f64)>,
    events: Option<Vec<Event>>,
}

impl Recorder {
    pub(crate) fn new(
        cfg: &RecorderConfig,
        rates: &ScaledRates,
        state: &PointMeasureState,
        t_end: f64,
    ) -> Result<Self, SimError> {
        if let Some(dt) = cfg.snapshot_dt {
            if !(dt > 0.0) {
                return Err(SimError::InvalidConfig(format!(
                    "snapshot cadence {dt} must be positive"
                )));
            }
        }
        let edges = match cfg.bins {
            None => None,
            Some(0) => {
                return Err(SimError::InvalidConfig(
                    "histogram needs at least one bin".into(),
                ))
            }
            Some(n) => {
                let (lo, hi) = cfg
                    .hist_range
                    .or_else(|| rates.model().space().range())
                    .ok_or_else(|| {
                        SimError::InvalidConfig(
                            "histogram range required for unbounded spaces".into(),
                        )
                    })?;
                Some((lo, hi, n))
            }
        };
        let mut atom_times: Vec<f64> = cfg
            .atom_times
            .iter()
            .copied()
            .filter(|&t| t >= state.time() && t <= t_end)
            .collect();
        atom_times.sort_by(f64::total_cmp);
        let mut r = Recorder {
            cfg: cfg.clone(),
            k: rates.scaling().k(),
            t0: state.time(),
            t_end,
            edges,
            next_grid: 0,
            atom_times,
            next_atom: 0,
            snapshots: Vec::new(),
            atom_dumps: Vec::new(),
            mass: vec![(state.time(), state.count() as f64)],
            events: if cfg.event_log {
                Some(Vec::new())
            } else {
                None
            },
        };
        if r.cfg.audit {
            r.push(state.time(), state);
        }
        Ok(r)
    }

    fn grid_time(&self, i: u64) -> Option<f64> {
        match self.cfg.snapshot_dt {
            Some(dt) => Some(self.t0 + i as f64 * dt),
            None if i == 0 => Some(self.t0),
            None => None,
        }
    }

    fn histogram(&self, state: &PointMeasureState) -> Option<Vec<f64>> {
        let (lo, hi, n) = self.edges?;
        let mut h = vec![0.0; n];
        let w = (hi - lo) / n as f64;
        for c in state.classes() {
            let pos = ((c.trait_value.x() - lo) / w).floor();
            let idx = if pos < 0.0 {
                0
            } else {
                (pos as usize).min(n - 1)
            };
            h[idx] += c.count as f64;
        }
        Some(h)
    }

    fn snapshot(&self, t: f64, state: &PointMeasureState, atoms: bool) -> Snapshot {
        Snapshot {
            t,
            total: state.count() as f64,
            histogram: self.histogram(state),
            atoms: if atoms {
                Some(Measure::from_state(state))
            } else {
                None
            },
        }
    }

    fn push(&mut self, t: f64, state: &PointMeasureState) {
        let s = self.snapshot(t, state, self.cfg.atoms || self.cfg.audit);
        self.snapshots.push(s);
    }

    /// Records every scheduled time strictly before `t`, where `state` is still current.
    pub(crate) fn flush_before(&mut self, t: f64, state: &PointMeasureState) {
        let limit = t.min(self.t_end * (1.0 + 1e-12) + 1e-12);
        if !self.cfg.audit {
            while let Some(g) = self.grid_time(self.next_grid) {
                if g >= t || g > limit {
                    break;
                }
                self.push(g, state);
                if !self.cfg.mass_every_event && g > self.t0 {
                    self.mass.push((g, state.count() as f64));
                }
                self.next_grid += 1;
            }
        }
        while self.next_atom < self.atom_times.len() && self.atom_times[self.next_atom] < t {
            let s = self.snapshot(self.atom_times[self.next_atom], state, true);
            self.atom_dumps.push(s);
            self.next_atom += 1;
        }
    }

    pub(crate) fn on_event(&mut self, ev: &Event, state: &PointMeasureState) {
        if self.cfg.mass_every_event || self.cfg.audit {
            self.mass.push((ev.time, state.count() as f64));
        }
        if self.cfg.audit {
            self.push(ev.time, state);
        }
        if let Some(log) = &mut self.events {
            log.push(*ev);
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn finish(
        mut self,
        state: &PointMeasureState,
        t_stop: f64,
        extinction_time: Option<f64>,
        engine: Engine,
        event_count: u64,
        proposals: u64,
        c_bar: f64,
    ) -> MeasureTrajectory {
        self.flush_before(t_stop * (1.0 + 1e-12) + 1e-12, state);
        let needs_final = self
            .snapshots
            .last()
            .is_none_or(|s| (s.t - t_stop).abs() > 1e-9 * t_stop.abs().max(1.0));
        if needs_final {
            self.push(t_stop, state);
        }
        if self.mass.last().is_some_and(|m| m.0 < t_stop) && !self.cfg.mass_every_event {
            self.mass.push((t_stop, state.count() as f64));
        }
        let bin_edges = self.edges.map(|(lo, hi, n)| {
            (0..=n)
                .map(|i| lo + (hi - lo) * i as f64 / n as f64)
                .collect()
        });
        MeasureTrajectory {
            k: self.k,
            renormalized: false,
            audit: self.cfg.audit,
            t_end: t_stop,
            bin_edges,
            snapshots: self.snapshots,
            atom_dumps: self.atom_dumps,
            mass: self.mass,
            extinction_time,
            events: self.events,
            engine,
            event_count,
            proposals,
            c_bar,
        }
    }
}
