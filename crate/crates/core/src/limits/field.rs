use serde::Serialize;

use super::{DensityField, LimitError, TraitGrid};
use crate::model::{Kernel, ModelSpec, TraitFn, TraitValue};
use crate::quadrature::normal_pdf;

/// Which mutation term the IDE carries.
#[derive(Clone)]
pub enum IdeMode {
    /// Reaction `(1 - μ) b - d` plus redistribution `∫ M(y, x) μ(y) b(y, V∗ξ(y)) ξ(y) dy`.
    Standard,
    /// Reaction `b - d` plus source `∫ M(y, x) μ(y) r(y) ξ(y) dy` of accelerated births.
    RareMutation { r: TraitFn },
}

impl std::fmt::Debug for IdeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IdeMode::Standard => write!(f, "Standard"),
            IdeMode::RareMutation { .. } => write!(f, "RareMutation"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldOptions {
    /// Output intervals on `[0, t_end]`.
    pub samples: usize,
    /// Relative endpoint-mass change allowed between a step size and its half.
    pub rtol: f64,
    /// Forces a step size and skips step doubling.
    pub dt: Option<f64>,
    /// Largest initial step.
    pub dt_max: f64,
    pub max_doublings: usize,
    /// Clipped mass tolerated as a fraction of the current mass.
    pub clip_tol: f64,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions {
            samples: 100,
            rtol: 1e-6,
            dt: None,
            dt_max: 0.05,
            max_doublings: 12,
            clip_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSolution {
    pub grid: TraitGrid,
    pub frames: Vec<DensityField>,
    pub dt: f64,
    pub steps: usize,
    /// Total mass removed by clipping negative values.
    pub clipped: f64,
}

impl FieldSolution {
    pub fn last(&self) -> &DensityField {
        self.frames.last().unwrap()
    }

    pub fn masses(&self) -> Vec<(f64, f64)> {
        self.frames
            .iter()
            .map(|f| (f.t, self.grid.integrate(&f.values)))
            .collect()
    }
}

/// Discretized interaction: `(K ∗ ξ)(x_i) = Σ_j w_j K(x_i - x_j) ξ_j`.
enum Conv {
    Zero,
    Constant(f64),
    Matrix(Vec<f64>),
}

impl Conv {
    fn new(k: &Kernel, nodes: &[f64], w: &[f64]) -> Self {
        match k {
            Kernel::Zero => Conv::Zero,
            Kernel::Constant(c) => Conv::Constant(*c),
            Kernel::Function(_) => {
                let n = nodes.len();
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        m[i * n + j] = w[j] * k.eval(TraitValue::scalar(nodes[i] - nodes[j]));
                    }
                }
                Conv::Matrix(m)
            }
        }
    }

    fn apply(&self, xi: &[f64], w: &[f64], out: &mut [f64]) {
        match self {
            Conv::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Conv::Constant(c) => {
                let m: f64 = xi.iter().zip(w).map(|(a, b)| a * b).sum();
                out.iter_mut().for_each(|o| *o = c * m);
            }
            Conv::Matrix(mat) => {
                let n = xi.len();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = mat[i * n..(i + 1) * n]
                        .iter()
                        .zip(xi)
                        .map(|(a, b)| a * b)
                        .sum();
                }
            }
        }
    }
}

enum Source {
    None,
    /// Standard mode: mutant births at rate `μ_j b_j`.
    Births {
        mw: Vec<f64>,
        mu: Vec<f64>,
    },
    /// Rare-mutation mode: mutant births at rate `μ_j r_j`.
    Fixed {
        mw: Vec<f64>,
        rate: Vec<f64>,
    },
}

struct Operator<'a> {
    spec: &'a ModelSpec,
    traits: Vec<TraitValue>,
    w: Vec<f64>,
    u: Conv,
    v: Conv,
    source: Source,
    /// `c_j / 2` for the diffusion term.
    half_c: Option<Vec<f64>>,
    dx: f64,
}

/// Mutation matrix with quadrature weights, column-normalized on the grid so that
/// `Σ_i w_i M_ij = 1`: redistribution conserves the discrete mass exactly.
fn mutation_matrix(sigma: f64, nodes: &[f64], w: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut m = vec![0.0; n * n];
    for j in 0..n {
        let col: Vec<f64> = (0..n)
            .map(|i| normal_pdf(nodes[i] - nodes[j], sigma))
            .collect();
        let norm: f64 = col.iter().zip(w).map(|(a, b)| a * b).sum();
        for i in 0..n {
            m[i * n + j] = w[j] * col[i] / norm;
        }
    }
    m
}

impl<'a> Operator<'a> {
    fn new(
        spec: &'a ModelSpec,
        grid: &TraitGrid,
        mode: Option<&IdeMode>,
        c: Option<&[f64]>,
    ) -> Self {
        let nodes = grid.nodes();
        let w = grid.weights();
        let traits: Vec<TraitValue> = nodes.iter().map(|&x| TraitValue::scalar(x)).collect();
        let mu: Vec<f64> = traits.iter().map(|&x| spec.mu(x)).collect();
        let sigma = spec.mutation().sigma();
        let source = match mode {
            None => Source::None,
            Some(_) if mu.iter().all(|&m| m == 0.0) => Source::None,
            Some(IdeMode::Standard) => Source::Births {
                mw: mutation_matrix(sigma, &nodes, &w),
                mu,
            },
            Some(IdeMode::RareMutation { r }) => {
                let rate = traits.iter().zip(&mu).map(|(&x, m)| m * r(x)).collect();
                Source::Fixed {
                    mw: mutation_matrix(sigma, &nodes, &w),
                    rate,
                }
            }
        };
        let half_c = c
            .filter(|c| c.iter().any(|&v| v != 0.0))
            .map(|c| c.iter().map(|v| 0.5 * v).collect());
        Operator {
            spec,
            u: Conv::new(spec.u(), &nodes, &w),
            v: Conv::new(spec.v(), &nodes, &w),
            traits,
            w,
            source,
            half_c,
            dx: grid.dx(),
        }
    }

    fn rhs(&self, xi: &[f64], out: &mut [f64], su: &mut [f64], sv: &mut [f64], births: &mut [f64]) {
        let n = xi.len();
        self.u.apply(xi, &self.w, su);
        self.v.apply(xi, &self.w, sv);
        for i in 0..n {
            births[i] = self.spec.birth(self.traits[i], sv[i]);
            out[i] = (births[i] - self.spec.death(self.traits[i], su[i])) * xi[i];
        }
        let (mw, per_capita): (&[f64], Vec<f64>) = match &self.source {
            Source::None => (&[], Vec::new()),
            Source::Births { mw, mu } => {
                for i in 0..n {
                    out[i] -= mu[i] * births[i] * xi[i];
                }
                (mw, (0..n).map(|j| mu[j] * births[j] * xi[j]).collect())
            }
            Source::Fixed { mw, rate } => (mw, (0..n).map(|j| rate[j] * xi[j]).collect()),
        };
        if !mw.is_empty() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += mw[i * n..(i + 1) * n]
                    .iter()
                    .zip(&per_capita)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            }
        }
        if let Some(hc) = &self.half_c {
            // Second difference of c ξ with mirrored ghost nodes (no flux at the ends).
            let g = |j: usize| hc[j] * xi[j];
            let h2 = self.dx * self.dx;
            out[0] += 2.0 * (g(1) - g(0)) / h2;
            for i in 1..n - 1 {
                out[i] += (g(i + 1) - 2.0 * g(i) + g(i - 1)) / h2;
            }
            out[n - 1] += 2.0 * (g(n - 2) - g(n - 1)) / h2;
        }
    }

    fn stability_bound(&self) -> Option<f64> {
        let hc = self.half_c.as_ref()?;
        let cmax = hc.iter().fold(0.0f64, |a, &b| a.max(2.0 * b));
        Some(0.4 * self.dx * self.dx / cmax)
    }
}

struct Stepper<'a, 'b> {
    op: &'b Operator<'a>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    su: Vec<f64>,
    sv: Vec<f64>,
    births: Vec<f64>,
}

impl<'a, 'b> Stepper<'a, 'b> {
    fn new(op: &'b Operator<'a>, n: usize) -> Self {
        Stepper {
            op,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
            su: vec![0.0; n],
            sv: vec![0.0; n],
            births: vec![0.0; n],
        }
    }

    fn step(&mut self, xi: &mut [f64], h: f64) {
        let n = xi.len();
        let coef = [0.5, 0.5, 1.0];
        self.op.rhs(
            xi,
            &mut self.k[0],
            &mut self.su,
            &mut self.sv,
            &mut self.births,
        );
        for s in 0..3 {
            for i in 0..n {
                self.tmp[i] = xi[i] + coef[s] * h * self.k[s][i];
            }
            let (head, tail) = self.k.split_at_mut(s + 1);
            let _ = head;
            self.op.rhs(
                &self.tmp,
                &mut tail[0],
                &mut self.su,
                &mut self.sv,
                &mut self.births,
            );
        }
        for i in 0..n {
            xi[i] +=
                h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
    }
}

fn run(
    op: &Operator,
    grid: &TraitGrid,
    init: &DensityField,
    t_end: f64,
    samples: usize,
    m: usize,
    clip_tol: f64,
) -> Result<(Vec<DensityField>, f64), LimitError> {
    let steps = samples * m;
    let h = t_end / steps as f64;
    let mut xi = init.values.clone();
    let mut frames = vec![DensityField {
        t: init.t,
        values: xi.clone(),
    }];
    let mut stepper = Stepper::new(op, xi.len());
    let mut clipped = 0.0;
    for s in 1..=steps {
        stepper.step(&mut xi, h);
        let mut lost = 0.0;
        for (v, w) in xi.iter_mut().zip(&op.w) {
            if *v < 0.0 {
                lost -= *w * *v;
                *v = 0.0;
            }
        }
        if lost > 0.0 {
            clipped += lost;
            let total = grid.integrate(&xi);
            if clipped > clip_tol * total.max(f64::MIN_POSITIVE) {
                return Err(LimitError::NegativeDensityBlowup {
                    lost: clipped,
                    total,
                    t: init.t + s as f64 * h,
                });
            }
        }
        if !xi.iter().all(|v| v.is_finite()) {
            return Err(LimitError::InvalidInput(format!(
                "density diverged at t = {}",
                init.t + s as f64 * h
            )));
        }
        if s % m == 0 {
            frames.push(DensityField {
                t: init.t + s as f64 * h,
                values: xi.clone(),
            });
        }
    }
    Ok((frames, clipped))
}

fn solve(
    op: &Operator,
    grid: &TraitGrid,
    init: &DensityField,
    t_end: f64,
    opts: &FieldOptions,
) -> Result<FieldSolution, LimitError> {
    if init.values.len() != grid.len() {
        return Err(LimitError::InvalidInput(format!(
            "initial field has {} values for {} nodes",
            init.values.len(),
            grid.len()
        )));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(LimitError::InvalidInput(format!("t_end = {t_end}")));
    }
    let samples = opts.samples.max(1);
    let bound = op.stability_bound();
    if let Some(dt) = opts.dt {
        if let Some(b) = bound {
            if dt > b {
                return Err(LimitError::CFLViolation { dt, bound: b });
            }
        }
        let m = ((t_end / dt / samples as f64).round() as usize).max(1);
        let (frames, clipped) = run(op, grid, init, t_end, samples, m, opts.clip_tol)?;
        return Ok(FieldSolution {
            grid: grid.clone(),
            frames,
            dt: t_end / (samples * m) as f64,
            steps: samples * m,
            clipped,
        });
    }
    let dt0 = bound.map_or(opts.dt_max, |b| b.min(opts.dt_max));
    let mut m = ((t_end / dt0) / samples as f64).ceil().max(1.0) as usize;
    let mut coarse = run(op, grid, init, t_end, samples, m, opts.clip_tol)?;
    for _ in 0..opts.max_doublings {
        let fine = run(op, grid, init, t_end, samples, 2 * m, opts.clip_tol)?;
        let a = grid.integrate(&coarse.0.last().unwrap().values);
        let b = grid.integrate(&fine.0.last().unwrap().values);
        if (a - b).abs() <= opts.rtol * b.abs() || a == b {
            return Ok(FieldSolution {
                grid: grid.clone(),
                frames: fine.0,
                dt: t_end / (samples * 2 * m) as f64,
                steps: samples * 2 * m,
                clipped: fine.1,
            });
        }
        coarse = fine;
        m *= 2;
    }
    Err(LimitError::NoConvergence {
        tol: opts.rtol,
        steps: samples * m,
    })
}

fn check_space(spec: &ModelSpec) -> Result<(), LimitError> {
    if spec.space().dim() != 1 {
        return Err(LimitError::Dimension);
    }
    Ok(())
}

/// Method-of-lines solution of the large-population integro-differential equation.
pub fn solve_ide(
    init: &DensityField,
    t_end: f64,
    spec: &ModelSpec,
    mode: &IdeMode,
    grid: &TraitGrid,
    opts: &FieldOptions,
) -> Result<FieldSolution, LimitError> {
    check_space(spec)?;
    let op = Operator::new(spec, grid, Some(mode), None);
    solve(&op, grid, init, t_end, opts)
}

/// `∂t ξ = (b - d) ξ + ½ ∂xx(c ξ)` with no-flux ends; `c` holds nodal diffusion values.
///
/// For the accelerated small-step limit `c = σ² r μ`, see [`diffusion_coefficient`].
pub fn solve_rd_pde(
    init: &DensityField,
    t_end: f64,
    spec: &ModelSpec,
    c: &[f64],
    grid: &TraitGrid,
    opts: &FieldOptions,
) -> Result<FieldSolution, LimitError> {
    check_space(spec)?;
    if c.len() != grid.len() {
        return Err(LimitError::InvalidInput(format!(
            "{} diffusion values for {} nodes",
            c.len(),
            grid.len()
        )));
    }
    if let Some(v) = c.iter().find(|v| !(**v >= 0.0)) {
        return Err(LimitError::InvalidInput(format!(
            "diffusion coefficient {v} is negative"
        )));
    }
    let op = Operator::new(spec, grid, None, Some(c));
    solve(&op, grid, init, t_end, opts)
}

/// Nodal `σ² r(x) μ(x)`.
pub fn diffusion_coefficient(spec: &ModelSpec, r: &TraitFn, grid: &TraitGrid) -> Vec<f64> {
    let s2 = spec.mutation().sigma().powi(2);
    grid.nodes()
        .into_iter()
        .map(|x| s2 * r(TraitValue::scalar(x)) * spec.mu(TraitValue::scalar(x)))
        .collect()
}
