use std::fmt;
use std::ops::{Add, Index, Sub};

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Largest supported trait dimension.
pub const MAX_DIM: usize = 3;

/// A point of the trait space. Coordinates beyond the space dimension are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TraitValue(pub [f64; MAX_DIM]);

impl TraitValue {
    pub const ZERO: TraitValue = TraitValue([0.0; MAX_DIM]);

    pub fn scalar(x: f64) -> Self {
        TraitValue([x, 0.0, 0.0])
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        TraitValue(c)
    }

    /// First coordinate; the whole value for one-dimensional spaces.
    #[inline]
    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }
}

impl Sub for TraitValue {
    type Output = TraitValue;
    #[inline]
    fn sub(self, rhs: TraitValue) -> TraitValue {
        TraitValue([
            self.0[0] - rhs.0[0],
            self.0[1] - rhs.0[1],
            self.0[2] - rhs.0[2],
        ])
    }
}

impl Add for TraitValue {
    type Output = TraitValue;
    #[inline]
    fn add(self, rhs: TraitValue) -> TraitValue {
        TraitValue([
            self.0[0] + rhs.0[0],
            self.0[1] + rhs.0[1],
            self.0[2] + rhs.0[2],
        ])
    }
}

impl Index<usize> for TraitValue {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

impl From<f64> for TraitValue {
    fn from(x: f64) -> Self {
        TraitValue::scalar(x)
    }
}

impl fmt::Display for TraitValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0[1] == 0.0 && self.0[2] == 0.0 {
            write!(f, "{}", self.0[0])
        } else {
            write!(f, "({} {} {})", self.0[0], self.0[1], self.0[2])
        }
    }
}

/// Closed box `[lo_1,hi_1] x ... x [lo_d,hi_d]`, or all of R^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitSpace {
    dim: usize,
    bounds: Option<Vec<(f64, f64)>>,
}

impl TraitSpace {
    pub fn interval(lo: f64, hi: f64) -> Result<Self, ModelError> {
        Self::boxed(&[(lo, hi)])
    }

    pub fn boxed(bounds: &[(f64, f64)]) -> Result<Self, ModelError> {
        check_dim(bounds.len())?;
        for &(lo, hi) in bounds {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(ModelError::InvalidSpace(format!(
                    "empty or infinite side [{lo}, {hi}]"
                )));
            }
        }
        Ok(TraitSpace {
            dim: bounds.len(),
            bounds: Some(bounds.to_vec()),
        })
    }

    pub fn unbounded(dim: usize) -> Result<Self, ModelError> {
        check_dim(dim)?;
        Ok(TraitSpace { dim, bounds: None })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> Option<&[(f64, f64)]> {
        self.bounds.as_deref()
    }

    /// Bounds of the first coordinate, when bounded.
    pub fn range(&self) -> Option<(f64, f64)> {
        self.bounds.as_ref().map(|b| b[0])
    }

    pub fn contains(&self, x: &TraitValue) -> bool {
        match &self.bounds {
            None => x.0.iter().all(|c| c.is_finite()),
            Some(b) => b
                .iter()
                .enumerate()
                .all(|(k, &(lo, hi))| x.0[k] >= lo && x.0[k] <= hi),
        }
    }

    /// Maps `u` in the unit cube onto the box (or onto `[-span, span]^d` when unbounded).
    pub fn from_unit(&self, u: &[f64], span: f64) -> TraitValue {
        let mut c = [0.0; MAX_DIM];
        for k in 0..self.dim {
            c[k] = match &self.bounds {
                Some(b) => b[k].0 + u[k] * (b[k].1 - b[k].0),
                None => -span + 2.0 * span * u[k],
            };
        }
        TraitValue(c)
    }
}

fn check_dim(d: usize) -> Result<(), ModelError> {
    if d == 0 || d > MAX_DIM {
        return Err(ModelError::InvalidSpace(format!(
            "dimension {d} not in 1..={MAX_DIM}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(TraitSpace::interval(1.0, 1.0).is_err());
        assert!(TraitSpace::interval(2.0, 1.0).is_err());
        assert!(TraitSpace::unbounded(4).is_err());
        assert!(TraitSpace::boxed(&[]).is_err());
    }

    #[test]
    fn containment_is_closed() {
        let s = TraitSpace::interval(0.0, 4.0).unwrap();
        assert!(s.contains(&TraitValue::scalar(0.0)));
        assert!(s.contains(&TraitValue::scalar(4.0)));
        assert!(!s.contains(&TraitValue::scalar(4.0 + 1e-12)));
    }
}
