use super::kernels::Kernel;
use super::scaling::{ClassConstants, ScaledRates};
use super::space::TraitValue;
use super::{ModelError, ModelSpec};

/// A lineage class: `count` individuals sharing one trait value.
///
/// Sums are raw (no `1/K`) and include the individual's own contribution
/// `U(0)`, so `su = Σ_j U(x - x_j)` over the whole population.
#[derive(Debug, Clone, PartialEq)]
pub struct TraitClass {
    pub trait_value: TraitValue,
    pub count: u64,
    pub su: f64,
    pub sv: f64,
    /// Identifier unique within the state: initial classes first, then mutants in order.
    pub lineage: u64,
    pub(crate) consts: ClassConstants,
}

/// The population `ν = Σ δ_{x_i}` grouped into lineage classes with cached interaction sums.
///
/// Classes are created per initial trait value and per mutation event and are never
/// merged, so a mutant with the same trait as its parent stays distinguishable.
#[derive(Debug, Clone)]
pub struct PointMeasureState {
    classes: Vec<TraitClass>,
    count: u64,
    time: f64,
    events: u64,
    next_lineage: u64,
    resync_every: u64,
    check_every: u64,
}

const DEFAULT_RESYNC: u64 = 100_000;
const DEFAULT_CHECK: u64 = 10_000;

impl PointMeasureState {
    pub fn empty() -> Self {
        PointMeasureState {
            classes: Vec::new(),
            count: 0,
            time: 0.0,
            events: 0,
            next_lineage: 0,
            resync_every: DEFAULT_RESYNC,
            check_every: DEFAULT_CHECK,
        }
    }

    /// One atom per individual; equal trait values form one class.
    pub fn from_atoms(atoms: &[TraitValue], model: &ModelSpec) -> Self {
        let mut pairs: Vec<(TraitValue, u64)> = Vec::new();
        for a in atoms {
            match pairs.iter_mut().find(|(t, _)| t == a) {
                Some(p) => p.1 += 1,
                None => pairs.push((*a, 1)),
            }
        }
        Self::from_classes(&pairs, model)
    }

    /// Explicit classes `(trait, count)`; classes with zero count are dropped.
    pub fn from_classes(classes: &[(TraitValue, u64)], model: &ModelSpec) -> Self {
        let mut s = Self::empty();
        s.classes = classes
            .iter()
            .filter(|(_, n)| *n > 0)
            .enumerate()
            .map(|(i, &(t, n))| TraitClass {
                trait_value: t,
                count: n,
                su: 0.0,
                sv: 0.0,
                lineage: i as u64,
                consts: ClassConstants::default(),
            })
            .collect();
        s.next_lineage = s.classes.len() as u64;
        s.count = s.classes.iter().map(|c| c.count).sum();
        s.resync(model);
        s
    }

    /// `n` individuals at `x`.
    pub fn monomorphic(x: TraitValue, n: u64, model: &ModelSpec) -> Self {
        Self::from_classes(&[(x, n)], model)
    }

    /// Sets how often (in events) the cached sums are recomputed from scratch and, in
    /// debug builds, how often they are checked against a direct recomputation.
    pub fn with_cache_policy(mut self, resync_every: u64, check_every: u64) -> Self {
        self.resync_every = resync_every.max(1);
        self.check_every = check_every.max(1);
        self
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub(crate) fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn classes(&self) -> &[TraitClass] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Every individual's trait, class by class.
    pub fn atoms(&self) -> Vec<TraitValue> {
        let mut out = Vec::with_capacity(self.count as usize);
        for c in &self.classes {
            out.extend(std::iter::repeat_n(c.trait_value, c.count as usize));
        }
        out
    }

    /// Class holding individual `i` in class order.
    pub fn class_of(&self, i: u64) -> Result<usize, ModelError> {
        let mut acc = 0;
        for (k, c) in self.classes.iter().enumerate() {
            acc += c.count;
            if i < acc {
                return Ok(k);
            }
        }
        Err(ModelError::IndexOutOfRange {
            index: i as usize,
            len: self.count,
        })
    }

    /// Fills per-class constants for the given scaled rates.
    pub(crate) fn attach(&mut self, rates: &ScaledRates) {
        for c in &mut self.classes {
            c.consts = rates.constants(c.trait_value);
        }
    }

    /// Recomputes every cached sum directly, `O(C^2)`.
    pub fn resync(&mut self, model: &ModelSpec) {
        let (u, v) = (model.u(), model.v());
        let sums: Vec<(f64, f64)> = (0..self.classes.len())
            .map(|k| self.direct_sums(k, u, v))
            .collect();
        for (c, (su, sv)) in self.classes.iter_mut().zip(sums) {
            c.su = su;
            c.sv = sv;
        }
    }

    fn direct_sums(&self, k: usize, u: &Kernel, v: &Kernel) -> (f64, f64) {
        let x = self.classes[k].trait_value;
        let mut su = 0.0;
        let mut sv = 0.0;
        for c in &self.classes {
            let n = c.count as f64;
            let h = x - c.trait_value;
            su += n * u.eval(h);
            sv += n * v.eval(h);
        }
        (su, sv)
    }

    /// Largest relative deviation between cached and directly recomputed sums. The
    /// scale for each sum is the sum of absolute contributions.
    pub fn cache_error(&self, model: &ModelSpec) -> f64 {
        let (u, v) = (model.u(), model.v());
        let mut worst: f64 = 0.0;
        for (k, c) in self.classes.iter().enumerate() {
            let (su, sv) = self.direct_sums(k, u, v);
            let (mut au, mut av) = (0.0, 0.0);
            for o in &self.classes {
                let h = c.trait_value - o.trait_value;
                au += o.count as f64 * u.eval(h).abs();
                av += o.count as f64 * v.eval(h).abs();
            }
            if au > 0.0 {
                worst = worst.max((c.su - su).abs() / au);
            } else if c.su != 0.0 {
                worst = f64::INFINITY;
            }
            if av > 0.0 {
                worst = worst.max((c.sv - sv).abs() / av);
            } else if c.sv != 0.0 {
                worst = f64::INFINITY;
            }
        }
        worst
    }

    /// Adds `sign` copies of the kernel contributions of an individual at `y` to every class.
    #[inline]
    fn spread(&mut self, y: TraitValue, sign: f64, u: &Kernel, v: &Kernel) {
        match (u, v) {
            (Kernel::Zero, Kernel::Zero) => {}
            (_, Kernel::Zero) => {
                for c in &mut self.classes {
                    c.su += sign * u.eval(c.trait_value - y);
                }
            }
            _ => {
                for c in &mut self.classes {
                    let h = c.trait_value - y;
                    c.su += sign * u.eval(h);
                    c.sv += sign * v.eval(h);
                }
            }
        }
    }

    /// One more individual in class `k`.
    pub(crate) fn add_clone(&mut self, k: usize, model: &ModelSpec) {
        let y = self.classes[k].trait_value;
        self.classes[k].count += 1;
        self.count += 1;
        self.spread(y, 1.0, model.u(), model.v());
        self.after_event(model);
    }

    /// New class with one individual at `y`. Returns its index.
    pub(crate) fn add_mutant(&mut self, y: TraitValue, rates: &ScaledRates) -> usize {
        let model = rates.model();
        let lineage = self.next_lineage;
        self.next_lineage += 1;
        self.classes.push(TraitClass {
            trait_value: y,
            count: 1,
            su: 0.0,
            sv: 0.0,
            lineage,
            consts: rates.constants(y),
        });
        self.count += 1;
        let k = self.classes.len() - 1;
        // The new class sees everyone else plus itself; the others gain its contribution.
        let (su, sv) = {
            let (u, v) = (model.u(), model.v());
            let mut su = 0.0;
            let mut sv = 0.0;
            for c in &self.classes[..k] {
                let n = c.count as f64;
                let h = y - c.trait_value;
                su += n * u.eval(h);
                sv += n * v.eval(h);
            }
            (su, sv)
        };
        self.classes[k].su = su;
        self.classes[k].sv = sv;
        self.spread(y, 1.0, model.u(), model.v());
        self.after_event(model);
        k
    }

    /// Removes one individual from class `k`; an emptied class is dropped by swap-removal.
    pub(crate) fn remove_one(&mut self, k: usize, model: &ModelSpec) {
        let y = self.classes[k].trait_value;
        self.classes[k].count -= 1;
        self.count -= 1;
        if self.classes[k].count == 0 {
            self.classes.swap_remove(k);
        }
        if self.count == 0 {
            self.classes.clear();
        } else {
            self.spread(y, -1.0, model.u(), model.v());
        }
        self.after_event(model);
    }

    fn after_event(&mut self, model: &ModelSpec) {
        self.events += 1;
        #[cfg(debug_assertions)]
        if self.events % self.check_every == 0 {
            let e = self.cache_error(model);
            assert!(
                e <= 1e-9,
                "cached interaction sums drifted: relative error {e:e}"
            );
        }
        if self.events % self.resync_every == 0 {
            self.resync(model);
        }
    }
}
