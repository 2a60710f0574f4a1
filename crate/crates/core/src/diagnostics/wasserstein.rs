use serde::Serialize;

use super::DiagError;
use crate::limits::{DensityField, TraitGrid};
use crate::sim::{Measure, MeasureTrajectory, Snapshot};

/// A finite measure on the line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Measure1d {
    /// `(position, weight)` pairs.
    Atoms(Vec<(f64, f64)>),
    /// Mass spread uniformly within each bin.
    Histogram { edges: Vec<f64>, masses: Vec<f64> },
}

impl Measure1d {
    pub fn from_measure(m: &Measure) -> Self {
        Measure1d::Atoms(m.atoms.iter().map(|&(x, w)| (x.x(), w)).collect())
    }

    /// Histogram of a snapshot, or its atoms when no histogram was recorded.
    pub fn from_snapshot(traj: &MeasureTrajectory, snap: &Snapshot) -> Option<Self> {
        match (&traj.bin_edges, &snap.histogram, &snap.atoms) {
            (Some(e), Some(h), _) => Some(Measure1d::Histogram {
                edges: e.clone(),
                masses: h.clone(),
            }),
            (_, _, Some(a)) => Some(Self::from_measure(a)),
            _ => None,
        }
    }

    /// Cell masses of a nodal density: trapezoid rule on every grid interval.
    pub fn from_density(field: &DensityField, grid: &TraitGrid) -> Self {
        let dx = grid.dx();
        let v = &field.values;
        Measure1d::Histogram {
            edges: grid.nodes(),
            masses: v.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dx).collect(),
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            Measure1d::Atoms(a) => a.iter().map(|p| p.1).sum(),
            Measure1d::Histogram { masses, .. } => masses.iter().sum(),
        }
    }

    fn scaled(&self, s: f64) -> Self {
        match self {
            Measure1d::Atoms(a) => Measure1d::Atoms(a.iter().map(|&(x, w)| (x, w * s)).collect()),
            Measure1d::Histogram { edges, masses } => Measure1d::Histogram {
                edges: edges.clone(),
                masses: masses.iter().map(|m| m * s).collect(),
            },
        }
    }

    fn validate(&self) -> Result<(), DiagError> {
        let bad = |w: f64| !(w >= 0.0) || !w.is_finite();
        match self {
            Measure1d::Atoms(a) => {
                if a.iter().any(|&(x, w)| !x.is_finite() || bad(w)) {
                    return Err(DiagError::InvalidInput(
                        "atoms need finite positions and nonnegative weights".into(),
                    ));
                }
            }
            Measure1d::Histogram { edges, masses } => {
                if edges.len() != masses.len() + 1 || edges.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(DiagError::InvalidInput(
                        "histogram edges must be increasing, one more than bins".into(),
                    ));
                }
                if masses.iter().any(|&w| bad(w)) {
                    return Err(DiagError::InvalidInput(
                        "histogram masses must be nonnegative".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Right-continuous CDF with left limits, evaluated at sorted query points.
struct Cdf {
    kind: CdfKind,
}

enum CdfKind {
    Atoms { xs: Vec<f64>, cum: Vec<f64> },
    Hist { edges: Vec<f64>, cum: Vec<f64> },
}

impl Cdf {
    fn new(m: &Measure1d) -> Self {
        match m {
            Measure1d::Atoms(a) => {
                let mut a = a.clone();
                a.sort_by(|p, q| p.0.total_cmp(&q.0));
                let mut xs = Vec::with_capacity(a.len());
                let mut cum = Vec::with_capacity(a.len());
                let mut acc = 0.0;
                for (x, w) in a {
                    acc += w;
                    if xs.last() == Some(&x) {
                        *cum.last_mut().unwrap() = acc;
                    } else {
                        xs.push(x);
                        cum.push(acc);
                    }
                }
                Cdf {
                    kind: CdfKind::Atoms { xs, cum },
                }
            }
            Measure1d::Histogram { edges, masses } => {
                let mut cum = vec![0.0];
                let mut acc = 0.0;
                for m in masses {
                    acc += m;
                    cum.push(acc);
                }
                Cdf {
                    kind: CdfKind::Hist {
                        edges: edges.clone(),
                        cum,
                    },
                }
            }
        }
    }

    fn breakpoints(&self) -> &[f64] {
        match &self.kind {
            CdfKind::Atoms { xs, .. } => xs,
            CdfKind::Hist { edges, .. } => edges,
        }
    }

    /// `F(x)`.
    fn right(&self, x: f64) -> f64 {
        match &self.kind {
            CdfKind::Atoms { xs, cum } => {
                let i = xs.partition_point(|&p| p <= x);
                if i == 0 {
                    0.0
                } else {
                    cum[i - 1]
                }
            }
            CdfKind::Hist { .. } => self.left(x),
        }
    }

    /// `F(x-)`.
    fn left(&self, x: f64) -> f64 {
        match &self.kind {
            CdfKind::Atoms { xs, cum } => {
                let i = xs.partition_point(|&p| p < x);
                if i == 0 {
                    0.0
                } else {
                    cum[i - 1]
                }
            }
            CdfKind::Hist { edges, cum } => {
                let n = edges.len() - 1;
                if x <= edges[0] {
                    return 0.0;
                }
                if x >= edges[n] {
                    return cum[n];
                }
                let j = edges.partition_point(|&e| e <= x) - 1;
                let frac = (x - edges[j]) / (edges[j + 1] - edges[j]);
                cum[j] + frac * (cum[j + 1] - cum[j])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct W1Result {
    pub distance: f64,
    /// Both measures were divided by their masses before comparison.
    pub normalized: bool,
    pub mass1: f64,
    pub mass2: f64,
}

/// `∫ |F₁ - F₂| dx`, exact for atoms and piecewise-uniform histograms.
///
/// Measures whose masses agree to a relative `1e-9` are compared as they are. Otherwise
/// they are normalized when `normalize` is set and rejected with `MassMismatch` if not.
pub fn wasserstein1(
    m1: &Measure1d,
    m2: &Measure1d,
    normalize: bool,
) -> Result<W1Result, DiagError> {
    m1.validate()?;
    m2.validate()?;
    let (a, b) = (m1.mass(), m2.mass());
    let scale = a.abs().max(b.abs());
    let same = (a - b).abs() <= 1e-9 * scale;
    let (p, q, normalized) = if same {
        (m1.clone(), m2.clone(), false)
    } else if normalize {
        if a <= 0.0 || b <= 0.0 {
            return Err(DiagError::MassMismatch { m1: a, m2: b });
        }
        (m1.scaled(1.0 / a), m2.scaled(1.0 / b), true)
    } else {
        return Err(DiagError::MassMismatch { m1: a, m2: b });
    };
    let (f1, f2) = (Cdf::new(&p), Cdf::new(&q));
    let mut pts: Vec<f64> = f1
        .breakpoints()
        .iter()
        .chain(f2.breakpoints())
        .copied()
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut dist = 0.0;
    for w in pts.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        // On (x0, x1) both CDFs are affine.
        let g0 = f1.right(x0) - f2.right(x0);
        let g1 = f1.left(x1) - f2.left(x1);
        let len = x1 - x0;
        dist += if g0 * g1 >= 0.0 {
            0.5 * len * (g0.abs() + g1.abs())
        } else {
            0.5 * len * (g0 * g0 + g1 * g1) / (g0.abs() + g1.abs())
        };
    }
    Ok(W1Result {
        distance: dist,
        normalized,
        mass1: a,
        mass2: b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atoms(v: &[(f64, f64)]) -> Measure1d {
        Measure1d::Atoms(v.to_vec())
    }

    #[test]
    fn dirac_distance() {
        let r = wasserstein1(&atoms(&[(0.0, 1.0)]), &atoms(&[(1.5, 1.0)]), false).unwrap();
        assert!((r.distance - 1.5).abs() < 1e-15);
        assert!(!r.normalized);
    }

    #[test]
    fn uniform_bin_versus_centre() {
        let h = Measure1d::Histogram {
            edges: vec![0.0, 1.0],
            masses: vec![1.0],
        };
        let r = wasserstein1(&h, &atoms(&[(0.5, 1.0)]), false).unwrap();
        assert!((r.distance - 0.25).abs() < 1e-15);
        let r = wasserstein1(&h, &atoms(&[(0.0, 1.0)]), false).unwrap();
        assert!((r.distance - 0.5).abs() < 1e-15);
    }

    #[test]
    fn shifted_uniforms() {
        let a = Measure1d::Histogram {
            edges: vec![0.0, 1.0],
            masses: vec![2.0],
        };
        let b = Measure1d::Histogram {
            edges: vec![0.3, 1.3],
            masses: vec![2.0],
        };
        let r = wasserstein1(&a, &b, false).unwrap();
        assert!((r.distance - 0.6).abs() < 1e-14);
    }

    #[test]
    fn mass_mismatch_policy() {
        let a = atoms(&[(0.0, 1.0)]);
        let b = atoms(&[(1.0, 2.0)]);
        assert!(matches!(
            wasserstein1(&a, &b, false),
            Err(DiagError::MassMismatch { .. })
        ));
        let r = wasserstein1(&a, &b, true).unwrap();
        assert!(r.normalized);
        assert!((r.distance - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identical_measures_are_zero() {
        let a = atoms(&[(0.2, 0.5), (0.9, 1.5), (0.2, 0.1)]);
        assert_eq!(wasserstein1(&a, &a, false).unwrap().distance, 0.0);
    }
}
