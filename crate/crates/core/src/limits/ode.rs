use serde::Serialize;

use super::LimitError;
use crate::model::{ModelSpec, TraitValue};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    /// Output intervals on `[0, t_end]`.
    pub samples: usize,
    /// Relative endpoint change allowed between a step count and its double.
    pub rtol: f64,
    pub max_doublings: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            samples: 200,
            rtol: 1e-8,
            max_doublings: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub n: Vec<f64>,
    /// RK4 steps used on the whole interval.
    pub steps: usize,
}

impl TimeSeries {
    pub fn last(&self) -> f64 {
        *self.n.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSeries {
    pub t: Vec<f64>,
    pub nx: Vec<f64>,
    pub ny: Vec<f64>,
    pub steps: usize,
}

/// Monomorphic equilibrium `n̄(x)`: the positive root of `b(x, V(0) n) = d(x, U(0) n)`.
pub fn equilibrium_nbar(x: TraitValue, spec: &ModelSpec) -> Result<f64, LimitError> {
    let g0 = spec.birth(x, 0.0) - spec.death(x, 0.0);
    if !(g0 > 0.0) {
        return Err(LimitError::NoPositiveEquilibrium {
            x: x.x(),
            growth: g0,
        });
    }
    let u0 = spec.u().eval(TraitValue::ZERO);
    let v0 = spec.v().eval(TraitValue::ZERO);
    if let Some((b, d, a)) = spec.linear_parts(x) {
        let k = a * u0;
        if !(k > 0.0) {
            return Err(LimitError::NoPositiveEquilibrium {
                x: x.x(),
                growth: g0,
            });
        }
        return Ok((b - d) / k);
    }
    if !spec.monotone_h5() {
        return Err(LimitError::NotMonotone);
    }
    let g = |n: f64| spec.birth(x, v0 * n) - spec.death(x, u0 * n);
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut grown = 0;
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        grown += 1;
        if grown > 1100 || !hi.is_finite() {
            return Err(LimitError::NoPositiveEquilibrium {
                x: x.x(),
                growth: g0,
            });
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() < 1e-12 || hi - lo <= 4.0 * f64::EPSILON * mid {
            return Ok(mid);
        }
        if gm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn rk4_step<const N: usize, F: Fn(&[f64; N]) -> [f64; N]>(f: &F, y: &[f64; N], h: f64) -> [f64; N] {
    let add = |a: &[f64; N], b: &[f64; N], s: f64| {
        let mut o = *a;
        for i in 0..N {
            o[i] += s * b[i];
        }
        o
    };
    let k1 = f(y);
    let k2 = f(&add(y, &k1, 0.5 * h));
    let k3 = f(&add(y, &k2, 0.5 * h));
    let k4 = f(&add(y, &k3, h));
    let mut o = *y;
    for i in 0..N {
        o[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    o
}

/// Fixed-step RK4 with `samples * m` steps, recording every `m` steps.
fn rk4_sampled<const N: usize, F: Fn(&[f64; N]) -> [f64; N]>(
    f: &F,
    y0: [f64; N],
    t_end: f64,
    samples: usize,
    m: usize,
) -> Vec<[f64; N]> {
    let steps = samples * m;
    let h = t_end / steps as f64;
    let mut out = Vec::with_capacity(samples + 1);
    out.push(y0);
    let mut y = y0;
    for s in 1..=steps {
        y = rk4_step(f, &y, h);
        if s % m == 0 {
            out.push(y);
        }
    }
    out
}

/// Doubles the step count until the endpoint is stable to `rtol`.
fn integrate<const N: usize, F: Fn(&[f64; N]) -> [f64; N]>(
    f: &F,
    y0: [f64; N],
    t_end: f64,
    opts: &OdeOptions,
) -> Result<(Vec<[f64; N]>, usize), LimitError> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(LimitError::InvalidInput(format!("t_end = {t_end}")));
    }
    let samples = opts.samples.max(1);
    let base = ((4.0 * t_end).ceil() as usize).div_ceil(samples).max(1);
    let mut m = base;
    let mut coarse = rk4_sampled(f, y0, t_end, samples, m);
    for _ in 0..opts.max_doublings {
        let fine = rk4_sampled(f, y0, t_end, samples, 2 * m);
        let (a, b) = (coarse.last().unwrap(), fine.last().unwrap());
        let ok = (0..N)
            .all(|i| (a[i] - b[i]).abs() <= opts.rtol * b[i].abs().max(1e-300) || a[i] == b[i]);
        if ok {
            return Ok((fine, samples * 2 * m));
        }
        coarse = fine;
        m *= 2;
    }
    Err(LimitError::NoConvergence {
        tol: opts.rtol,
        steps: samples * m,
    })
}

fn times(t_end: f64, samples: usize) -> Vec<f64> {
    (0..=samples)
        .map(|i| t_end * i as f64 / samples as f64)
        .collect()
}

/// `dn/dt = n (b(x, V(0) n) - d(x, U(0) n))`.
pub fn solve_monomorphic(
    x: TraitValue,
    n0: f64,
    t_end: f64,
    spec: &ModelSpec,
    opts: &OdeOptions,
) -> Result<TimeSeries, LimitError> {
    if !(n0 >= 0.0) {
        return Err(LimitError::InvalidInput(format!(
            "n0 = {n0} must be nonnegative"
        )));
    }
    let u0 = spec.u().eval(TraitValue::ZERO);
    let v0 = spec.v().eval(TraitValue::ZERO);
    let f = |y: &[f64; 1]| [y[0] * (spec.birth(x, v0 * y[0]) - spec.death(x, u0 * y[0]))];
    let (path, steps) = integrate(&f, [n0], t_end, opts)?;
    Ok(TimeSeries {
        t: times(t_end, opts.samples.max(1)),
        n: path.iter().map(|y| y[0]).collect(),
        steps,
    })
}

/// Coupled two-trait system with cross interactions `U(x - y)`, `V(x - y)` and their mirrors.
pub fn solve_dimorphic(
    x: TraitValue,
    y: TraitValue,
    n0x: f64,
    n0y: f64,
    t_end: f64,
    spec: &ModelSpec,
    opts: &OdeOptions,
) -> Result<PairSeries, LimitError> {
    if !(n0x >= 0.0 && n0y >= 0.0) {
        return Err(LimitError::InvalidInput(format!(
            "initial sizes ({n0x}, {n0y}) must be nonnegative"
        )));
    }
    let (u, v) = (spec.u(), spec.v());
    let (u0, v0) = (u.eval(TraitValue::ZERO), v.eval(TraitValue::ZERO));
    let (uxy, vxy) = (u.eval(x - y), v.eval(x - y));
    let (uyx, vyx) = (u.eval(y - x), v.eval(y - x));
    let f = |s: &[f64; 2]| {
        let (a, b) = (s[0], s[1]);
        [
            a * (spec.birth(x, v0 * a + vxy * b) - spec.death(x, u0 * a + uxy * b)),
            b * (spec.birth(y, vyx * a + v0 * b) - spec.death(y, uyx * a + u0 * b)),
        ]
    };
    let (path, steps) = integrate(&f, [n0x, n0y], t_end, opts)?;
    Ok(PairSeries {
        t: times(t_end, opts.samples.max(1)),
        nx: path.iter().map(|s| s[0]).collect(),
        ny: path.iter().map(|s| s[1]).collect(),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{constant_fn, kisdi_model, Demography, Kernel, ModelSpec, TraitSpace};
    use std::sync::Arc;

    fn logistic(b: f64, d: f64) -> ModelSpec {
        ModelSpec::builder(
            "logistic",
            TraitSpace::interval(0.0, 1.0).unwrap(),
            Demography::LinearLogistic {
                birth: constant_fn(b),
                death: constant_fn(d),
                alpha: constant_fn(1.0),
            },
        )
        .competition(Kernel::Constant(1.0))
        .envelopes(b, d.max(1.0), 1.0, 0.0)
        .build()
        .unwrap()
    }

    #[test]
    fn kisdi_equilibrium() {
        let m = kisdi_model(0.1).unwrap();
        let n = equilibrium_nbar(TraitValue::scalar(1.2), &m).unwrap();
        assert!((n - 2.8 / (2.0 * (1.0 - 1.0 / 2.2))).abs() < 1e-12);
        assert!((n - 2.56667).abs() < 1e-5);
        assert!(matches!(
            equilibrium_nbar(TraitValue::scalar(4.0), &m),
            Err(LimitError::NoPositiveEquilibrium { .. })
        ));
    }

    #[test]
    fn bisection_on_saturating_birth() {
        let m = ModelSpec::builder(
            "sat",
            TraitSpace::interval(0.0, 1.0).unwrap(),
            Demography::General {
                birth: Arc::new(|_, z| 2.0 / (1.0 + z)),
                death: Arc::new(|_, _| 1.0),
            },
        )
        .competition(Kernel::Constant(1.0))
        .birth_interaction(Kernel::Constant(1.0))
        .envelopes(2.0, 1.0, 1.0, 1.0)
        .monotone_h5(true)
        .build()
        .unwrap();
        let x = TraitValue::scalar(0.5);
        let n = equilibrium_nbar(x, &m).unwrap();
        assert!((n - 1.0).abs() < 1e-10);
        assert!((m.birth(x, n) - m.death(x, n)).abs() < 1e-9);
    }

    #[test]
    fn logistic_closed_form() {
        let m = logistic(1.0, 0.0);
        let s = solve_monomorphic(
            TraitValue::scalar(0.5),
            0.5,
            2.0,
            &m,
            &OdeOptions::default(),
        )
        .unwrap();
        let exact = 2f64.exp() / (1.0 + 2f64.exp());
        assert!((s.last() - exact).abs() < 1e-6);
        let z = solve_monomorphic(
            TraitValue::scalar(0.5),
            0.0,
            2.0,
            &m,
            &OdeOptions::default(),
        )
        .unwrap();
        assert!(z.n.iter().all(|&v| v == 0.0));
        let e = solve_monomorphic(
            TraitValue::scalar(0.5),
            1.0,
            10.0,
            &m,
            &OdeOptions::default(),
        )
        .unwrap();
        assert!(e.n.iter().all(|&v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn dimorphic_decouples_without_second_trait() {
        let m = kisdi_model(0.1).unwrap();
        let (x, y) = (TraitValue::scalar(1.2), TraitValue::scalar(1.3));
        let o = OdeOptions::default();
        let mono = solve_monomorphic(x, 0.3, 5.0, &m, &o).unwrap();
        let di = solve_dimorphic(x, y, 0.3, 0.0, 5.0, &m, &o).unwrap();
        assert!(di.ny.iter().all(|&v| v == 0.0));
        for (a, b) in mono.n.iter().zip(&di.nx) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn equal_starts_stay_equal_for_even_kernels() {
        let m = logistic(2.0, 0.5);
        let x = TraitValue::scalar(0.3);
        let s = solve_dimorphic(x, x, 0.2, 0.2, 10.0, &m, &OdeOptions::default()).unwrap();
        for (a, b) in s.nx.iter().zip(&s.ny) {
            assert_eq!(a, b);
        }
        assert!((s.nx.last().unwrap() - 0.75).abs() < 1e-6);
    }
}
