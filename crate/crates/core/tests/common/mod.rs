//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use evoibm::model::{linear_logistic_model, CompetitionKernel, LinearLogisticParams};
use evoibm::{validate_model, ModelSpec, TraitValue};

/// Parameters of a two-trait logistic birth-death chain without mutation.
#[derive(Debug, Clone, Copy)]
pub struct TwoTrait {
    pub b: [f64; 2],
    pub d: [f64; 2],
    pub alpha: f64,
    /// `U` between the two traits; `U(0) = 1`.
    pub u_cross: f64,
    pub k: f64,
    pub traits: [f64; 2],
}

impl TwoTrait {
    /// The oracle chain: `b0 - b1 x` births, constant death, Gaussian competition of unit
    /// height and unit width.
    pub fn high_turnover() -> Self {
        let traits = [1.0, 2.0];
        let (b0, b1, d0) = (1.0, 0.25, 3.0);
        let h: f64 = traits[0] - traits[1];
        TwoTrait {
            b: [b0 - b1 * traits[0], b0 - b1 * traits[1]],
            d: [d0, d0],
            alpha: 0.5,
            u_cross: (-0.5 * h * h).exp(),
            k: 1.0,
            traits,
        }
    }

    /// The same chain as a model for the simulators.
    pub fn model(&self) -> ModelSpec {
        let p = LinearLogisticParams {
            lo: 0.0,
            hi: 4.0,
            b0: 1.0,
            b1: 0.25,
            d0: 3.0,
            alpha: self.alpha,
            kernel: CompetitionKernel::Gaussian {
                height: 1.0,
                width: 1.0,
            },
            mu: 0.0,
            sigma: 0.1,
        };
        let m = linear_logistic_model(&p).unwrap();
        validate_model(&m, 500, 7).unwrap();
        m
    }

    pub fn trait_values(&self) -> [TraitValue; 2] {
        [
            TraitValue::scalar(self.traits[0]),
            TraitValue::scalar(self.traits[1]),
        ]
    }

    fn death(&self, i: usize, n: [usize; 2]) -> f64 {
        let j = 1 - i;
        self.d[i] + self.alpha * (n[i] as f64 + self.u_cross * n[j] as f64) / self.k
    }
}

/// Law of `(n1, n2)` at time `t` for the chain truncated at `cap` per trait (births at
/// the cap are suppressed), by uniformization. Index `n1 * (cap + 1) + n2`.
pub fn two_trait_law(p: &TwoTrait, init: [usize; 2], cap: usize, t: f64) -> Vec<f64> {
    let side = cap + 1;
    let idx = |a: usize, b: usize| a * side + b;
    let states = side * side;
    // Outgoing transitions per state.
    let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); states];
    let mut exit = vec![0.0; states];
    for a in 0..side {
        for b in 0..side {
            let n = [a, b];
            let s = idx(a, b);
            for i in 0..2 {
                if n[i] == 0 {
                    continue;
                }
                let mut up = n;
                up[i] += 1;
                if up[i] <= cap {
                    let r = n[i] as f64 * p.b[i];
                    out[s].push((idx(up[0], up[1]), r));
                    exit[s] += r;
                }
                let mut down = n;
                down[i] -= 1;
                let r = n[i] as f64 * p.death(i, n);
                out[s].push((idx(down[0], down[1]), r));
                exit[s] += r;
            }
        }
    }
    let lambda = exit.iter().cloned().fold(0.0, f64::max);
    let mut v = vec![0.0; states];
    v[idx(init[0], init[1])] = 1.0;
    let mut result = vec![0.0; states];
    // Poisson weights computed iteratively in log space.
    let lt = lambda * t;
    let mut log_w = -lt;
    let mut acc = 0.0;
    let mut k = 0usize;
    loop {
        let w = log_w.exp();
        for s in 0..states {
            result[s] += w * v[s];
        }
        acc += w;
        // Past the mode the Poisson weights decay faster than geometrically.
        if ((1.0 - acc) < 1e-14 || w < 1e-18) && k as f64 > lt {
            break;
        }
        let mut next = vec![0.0; states];
        for s in 0..states {
            if v[s] == 0.0 {
                continue;
            }
            next[s] += v[s] * (1.0 - exit[s] / lambda);
            for &(dst, r) in &out[s] {
                next[dst] += v[s] * r / lambda;
            }
        }
        v = next;
        k += 1;
        log_w += lt.ln() - (k as f64).ln();
        if k > 100_000 {
            panic!("uniformization did not converge");
        }
    }
    result
}

/// `E I(t)` and `Var I(t)` of a Yule process with rate `b` started from `i0`.
pub fn yule_moments(i0: f64, b: f64, t: f64) -> (f64, f64) {
    let e = (b * t).exp();
    (i0 * e, i0 * e * (e - 1.0))
}

/// `E ∫_0^t b I ds` for the Yule process.
pub fn yule_bracket(i0: f64, b: f64, t: f64) -> f64 {
    i0 * ((b * t).exp() - 1.0)
}

/// Expected total-variation distance between an `n`-sample empirical law and `p`,
/// to leading order.
pub fn tv_noise_floor(p: &[f64], n: usize) -> f64 {
    let c = (2.0 / (std::f64::consts::PI * n as f64)).sqrt();
    0.5 * c * p.iter().map(|&q| (q * (1.0 - q)).sqrt()).sum::<f64>()
}

/// Pure-birth model on `[0, 4]` with rate `b`.
pub fn yule_model(b: f64) -> ModelSpec {
    let p = LinearLogisticParams {
        b0: b,
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
