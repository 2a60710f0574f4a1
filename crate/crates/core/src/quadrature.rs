//! Numerical integration helpers shared by the model checks and the solvers.

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Returns `None` when the recursion depth is exhausted before the tolerance is met.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Option<f64> {
    if a == b {
        return Some(0.0);
    }
    // Pre-split so that narrow peaks are not skipped by the first coarse estimate.
    const PANELS: usize = 16;
    let h = (b - a) / PANELS as f64;
    let mut total = 0.0;
    for k in 0..PANELS {
        let lo = a + k as f64 * h;
        let hi = if k + 1 == PANELS { b } else { lo + h };
        let fa = f(lo);
        let fb = f(hi);
        let m = 0.5 * (lo + hi);
        let fm = f(m);
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        total += simpson_rec(f, lo, hi, fa, fm, fb, whole, tol / PANELS as f64, 48)?;
    }
    Some(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Option<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    Some(
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
    )
}

/// Nested adaptive Simpson over a box of dimension `bounds.len()` (at most 3).
pub fn adaptive_simpson_box<F: Fn(&[f64]) -> f64>(
    f: &F,
    bounds: &[(f64, f64)],
    tol: f64,
) -> Option<f64> {
    let mut point = vec![0.0; bounds.len()];
    nested(f, bounds, 0, &mut point, tol)
}

fn nested<F: Fn(&[f64]) -> f64>(
    f: &F,
    bounds: &[(f64, f64)],
    level: usize,
    point: &mut Vec<f64>,
    tol: f64,
) -> Option<f64> {
    let (a, b) = bounds[level];
    if level + 1 == bounds.len() {
        let g = |x: f64| {
            let mut p = point.clone();
            p[level] = x;
            f(&p)
        };
        return adaptive_simpson(&g, a, b, tol);
    }
    let failed = std::cell::Cell::new(false);
    let g = |x: f64| {
        let mut p = point.clone();
        p[level] = x;
        match nested(f, bounds, level + 1, &mut p, tol / (b - a).max(1.0)) {
            Some(v) => v,
            None => {
                failed.set(true);
                0.0
            }
        }
    };
    let v = adaptive_simpson(&g, a, b, tol)?;
    if failed.get() {
        None
    } else {
        Some(v)
    }
}

/// Composite trapezoid weights for `n + 1` uniform nodes with spacing `dx`.
pub fn trapezoid_weights(n: usize, dx: f64) -> Vec<f64> {
    let mut w = vec![dx; n + 1];
    w[0] = 0.5 * dx;
    w[n] = 0.5 * dx;
    w
}

/// Trapezoid rule over possibly non-uniform abscissae.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Normal density with mean 0 and standard deviation `sigma`.
pub fn normal_pdf(h: f64, sigma: f64) -> f64 {
    let z = h / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_gaussian_mass() {
        let v = adaptive_simpson(&|x| normal_pdf(x, 0.1), -2.0, 2.0, 1e-12).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn box_integration_matches_product() {
        let v = adaptive_simpson_box(&|p: &[f64]| p[0] * p[1], &[(0.0, 1.0), (0.0, 2.0)], 1e-10)
            .unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn trapezoid_on_linear_is_exact() {
        let xs = [0.0, 0.5, 2.0];
        let ys = [1.0, 2.0, 5.0];
        assert!((trapezoid(&xs, &ys) - 6.0).abs() < 1e-14);
        let w = trapezoid_weights(4, 0.25);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cdf_symmetry() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.3) + normal_cdf(-1.3) - 1.0).abs() < 1e-15);
    }
}
