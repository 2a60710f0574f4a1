use super::{one_dim, TssError};
use crate::limits::{equilibrium_nbar, LimitError};
use crate::model::{ModelSpec, TraitValue};

/// `n̄` on a uniform grid over the trait interval with four-point cubic interpolation.
/// Nodes without a positive equilibrium hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NbarTable {
    lo: f64,
    h: f64,
    values: Vec<f64>,
}

impl NbarTable {
    pub fn build(spec: &ModelSpec, intervals: usize) -> Result<Self, TssError> {
        let (lo, hi) = one_dim(spec)?;
        let n = intervals.max(3);
        let h = (hi - lo) / n as f64;
        let values = (0..=n)
            .map(
                |j| match equilibrium_nbar(TraitValue::scalar(lo + j as f64 * h), spec) {
                    Ok(v) => Ok(v),
                    Err(LimitError::NoPositiveEquilibrium { .. }) => Ok(0.0),
                    Err(e) => Err(e),
                },
            )
            .collect::<Result<Vec<_>, _>>()?;
        Ok(NbarTable { lo, h, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len() - 1;
        let s = ((x - self.lo) / self.h).clamp(0.0, n as f64);
        let i = (s.floor() as usize).clamp(1, n - 2);
        let u = s - i as f64;
        let (p0, p1, p2, p3) = (
            self.values[i - 1],
            self.values[i],
            self.values[i + 1],
            self.values[i + 2],
        );
        // Lagrange weights on nodes -1, 0, 1, 2.
        let w0 = -u * (u - 1.0) * (u - 2.0) / 6.0;
        let w1 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
        let w2 = -(u + 1.0) * u * (u - 2.0) / 2.0;
        let w3 = (u + 1.0) * u * (u - 1.0) / 6.0;
        (w0 * p0 + w1 * p1 + w2 * p2 + w3 * p3).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{linear_logistic_model, CompetitionKernel, LinearLogisticParams};

    #[test]
    fn interpolation_error_is_small() {
        let p = LinearLogisticParams {
            b0: 3.0,
            b1: 0.5,
            d0: 0.2,
            kernel: CompetitionKernel::Gaussian {
                height: 1.0,
                width: 1.0,
            },
            ..Default::default()
        };
        let m = linear_logistic_model(&p).unwrap();
        let t = NbarTable::build(&m, 2000).unwrap();
        for k in 0..997 {
            let x = 0.003 + k as f64 * 0.004;
            let exact = equilibrium_nbar(TraitValue::scalar(x), &m).unwrap();
            assert!((t.eval(x) - exact).abs() < 1e-6);
        }
    }
}
