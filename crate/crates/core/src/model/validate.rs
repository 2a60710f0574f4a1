use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::space::TraitValue;
use super::{ModelError, ModelSpec};
use crate::quadrature::{adaptive_simpson, adaptive_simpson_box};

/// Result of one probed inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub probes: usize,
    /// Largest violation seen (0 when passed).
    pub worst: f64,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub seed: u64,
    pub probes: usize,
    pub checks: Vec<CheckOutcome>,
    /// Largest `|∫ M(x, z) dz - 1|` over the quadrature probes.
    pub max_mass_error: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Probe {
    name: &'static str,
    probes: usize,
    worst: f64,
    witness: Option<String>,
}

impl Probe {
    fn new(name: &'static str) -> Self {
        Probe {
            name,
            probes: 0,
            worst: 0.0,
            witness: None,
        }
    }

    /// Records `excess` (positive means violated) at the described point.
    fn record(&mut self, excess: f64, at: impl FnOnce() -> String) {
        self.probes += 1;
        let excess = if excess.is_nan() {
            f64::INFINITY
        } else {
            excess
        };
        if excess > self.worst {
            self.worst = excess;
            self.witness = Some(at());
        }
    }

    fn finish(self) -> CheckOutcome {
        CheckOutcome {
            name: self.name.to_string(),
            passed: self.worst == 0.0,
            probes: self.probes,
            worst: self.worst,
            witness: self.witness,
        }
    }
}

/// Relative slack on envelope inequalities, covering rounding in the rate functions.
const SLACK: f64 = 1e-12;
const MASS_TOL: f64 = 1e-6;

/// Probes the envelope inequalities, rate ranges and mutation normalization with
/// `probes` random points drawn from `seed`. On success the report is stored on the
/// model, which is what allows it to be simulated.
pub fn validate_model(
    spec: &ModelSpec,
    probes: usize,
    seed: u64,
) -> Result<ValidationReport, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = spec.space();
    let dim = space.dim();
    let env = spec.envelopes();
    let m = spec.mutation();
    let span = 10.0 * m.sigma().max(1.0);
    let draw = |rng: &mut ChaCha8Rng| {
        let u: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        space.from_unit(&u, span)
    };
    // Interaction values up to a few hundred individuals' worth, half of them small.
    let draw_zeta = |rng: &mut ChaCha8Rng, bar: f64| {
        let scale = if bar > 0.0 { bar } else { 1.0 };
        if rng.random_bool(0.5) {
            rng.random::<f64>() * 2.0 * scale
        } else {
            rng.random::<f64>() * 500.0 * scale
        }
    };

    let mut mu_range = Probe::new("mu_range");
    let mut birth_nonneg = Probe::new("birth_nonnegative");
    let mut death_nonneg = Probe::new("death_nonnegative");
    let mut birth_env = Probe::new("birth_envelope");
    let mut death_env = Probe::new("death_envelope");
    let mut u_env = Probe::new("u_envelope");
    let mut v_env = Probe::new("v_envelope");
    let mut m_env = Probe::new("mutation_envelope");

    for _ in 0..probes {
        let x = draw(&mut rng);
        let mu = spec.mu(x);
        mu_range.record(
            if (0.0..=1.0).contains(&mu) {
                0.0
            } else {
                (mu - mu.clamp(0.0, 1.0)).abs()
            },
            || format!("x = {x}, mu = {mu}"),
        );

        let zv = draw_zeta(&mut rng, env.v_bar);
        let b = spec.birth(x, zv);
        birth_nonneg.record(-b, || format!("x = {x}, zeta = {zv}, b = {b}"));
        birth_env.record(b - env.b_bar * (1.0 + SLACK), || {
            format!("x = {x}, zeta = {zv}, b = {b} > {}", env.b_bar)
        });

        let zu = draw_zeta(&mut rng, env.u_bar);
        let d = spec.death(x, zu);
        let d_cap = if env.u_bar > 0.0 {
            env.d_bar * (1.0 + zu / env.u_bar)
        } else {
            env.d_bar
        };
        death_nonneg.record(-d, || format!("x = {x}, zeta = {zu}, d = {d}"));
        death_env.record(d - d_cap * (1.0 + SLACK), || {
            format!("x = {x}, zeta = {zu}, d = {d} > {d_cap}")
        });

        let y = draw(&mut rng);
        let h = x - y;
        let uh = spec.u().eval(h);
        let vh = spec.v().eval(h);
        u_env.record((uh - env.u_bar * (1.0 + SLACK)).max(-uh), || {
            format!("h = {h}, U = {uh}")
        });
        v_env.record((vh - env.v_bar * (1.0 + SLACK)).max(-vh), || {
            format!("h = {h}, V = {vh}")
        });

        // Mutants near the parent and anywhere in the space.
        let z = if rng.random_bool(0.5) {
            m.sample(&x, &mut rng)
        } else {
            y
        };
        let dens = m.density(&x, &z);
        let cap = env.c * m.envelope_density(&(z - x));
        m_env.record(dens - cap * (1.0 + 1e-10), || {
            format!("x = {x}, z = {z}, M = {dens} > C M̄ = {cap}")
        });
    }

    let mut checks: Vec<CheckOutcome> = [
        mu_range,
        birth_nonneg,
        death_nonneg,
        birth_env,
        death_env,
        u_env,
        v_env,
        m_env,
    ]
    .into_iter()
    .map(Probe::finish)
    .collect();

    if spec.monotone_h5() {
        let mut mono = Probe::new("h5_monotone");
        let mut viable = Probe::new("h5_viable");
        // Interior points: at the box faces a viable trait may degenerate to b = d.
        let interior = |rng: &mut ChaCha8Rng| {
            let u: Vec<f64> = (0..dim)
                .map(|_| 0.01 + 0.98 * rng.random::<f64>())
                .collect();
            space.from_unit(&u, span)
        };
        for _ in 0..probes {
            let x = interior(&mut rng);
            let z1 = draw_zeta(&mut rng, env.u_bar.max(env.v_bar));
            let z2 = z1 + rng.random::<f64>() * (1.0 + z1);
            let db = spec.birth(x, z2) - spec.birth(x, z1);
            let dd = spec.death(x, z1) - spec.death(x, z2);
            let tol = SLACK * (1.0 + spec.birth(x, z1).abs() + spec.death(x, z2).abs());
            mono.record((db.max(dd) - tol).max(0.0), || {
                format!("x = {x}, zeta in [{z1}, {z2}]")
            });
            let g = spec.birth(x, 0.0) - spec.death(x, 0.0);
            viable.record(
                if g > 0.0 {
                    0.0
                } else {
                    f64::MIN_POSITIVE.max(-g)
                },
                || format!("x = {x}, b - d = {g}"),
            );
        }
        checks.push(mono.finish());
        checks.push(viable.finish());
    }

    // Mutation normalization, at the lower corner, the centre and random points.
    let mut max_mass_error: f64 = 0.0;
    let mut mass_witness = None;
    if let Some(bounds) = space.bounds() {
        let mut pts = vec![
            space.from_unit(&vec![0.0; dim], span),
            space.from_unit(&vec![0.5; dim], span),
        ];
        for _ in 0..probes.clamp(1, 8) {
            pts.push(draw(&mut rng));
        }
        for x in pts {
            let mass = if dim == 1 {
                adaptive_simpson(
                    &|z| m.density(&x, &TraitValue::scalar(z)),
                    bounds[0].0,
                    bounds[0].1,
                    1e-10,
                )
            } else {
                adaptive_simpson_box(
                    &|p: &[f64]| m.density(&x, &TraitValue::from_slice(p)),
                    bounds,
                    1e-8,
                )
            };
            let err = mass.map(|v| (v - 1.0).abs()).unwrap_or(f64::INFINITY);
            if err > max_mass_error {
                max_mass_error = err;
                mass_witness = Some((x, mass.unwrap_or(f64::NAN)));
            }
        }
    }
    checks.push(CheckOutcome {
        name: "mutation_mass".into(),
        passed: max_mass_error <= MASS_TOL,
        probes: probes.clamp(1, 8) + 2,
        worst: max_mass_error,
        witness: mass_witness.map(|(x, v)| format!("x = {x}, mass = {v}")),
    });

    let report = ValidationReport {
        model: spec.name().to_string(),
        seed,
        probes,
        checks,
        max_mass_error,
    };
    // The H5 probes are reported but do not refuse simulation; only the TSS layer needs them.
    if let Some(bad) = report
        .checks
        .iter()
        .find(|c| !c.passed && c.name != "mutation_mass" && !c.name.starts_with("h5_"))
    {
        return Err(ModelError::HardViolation {
            check: bad.name.clone(),
            witness: bad.witness.clone().unwrap_or_default(),
            report: Box::new(report.clone()),
        });
    }
    if max_mass_error > MASS_TOL {
        let (x, mass) = mass_witness.unwrap();
        return Err(ModelError::QuadratureFailure {
            at: x.to_string(),
            mass,
            report: Box::new(report),
        });
    }
    spec.mark_validated(report.clone());
    Ok(report)
}
