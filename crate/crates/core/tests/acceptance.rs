//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero on any
//! failure. Statistical checks that fail are rerun once with a second seed; both results
//! are printed.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{tv_noise_floor, two_trait_law, yule_bracket, yule_model, TwoTrait};
use evoibm::diagnostics::stats::{binomial_z, total_variation};
use evoibm::diagnostics::{
    martingale_residual, pattern_summary, scaling_study, BracketForm, CompensatorMode,
    InitialCondition, PatternSummary, ScalingStudyConfig, TestFunction,
};
use evoibm::ensemble::{run_replicates, stream_rng};
use evoibm::limits::{
    equilibrium_nbar, solve_ide, solve_monomorphic, solve_rd_pde, DensityField, FieldOptions,
    IdeMode, OdeOptions, TraitGrid,
};
use evoibm::model::{constant_fn, Demography, Kernel, ModelSpec, TraitSpace};
use evoibm::presets::figure_preset;
use evoibm::sim::{renormalize, simulate_with_rng};
use evoibm::tss::{
    invasion_experiment, micro_resident_trait, simulate_tss, InvasionOptions, TssOptions,
};
use evoibm::{
    kisdi_model, kisdi_model_with_mu, validate_model, wasserstein1, Engine, Measure1d,
    PointMeasureState, RecorderConfig, ScalingMode, ScalingSpec, SimConfig, Simulator, TraitValue,
};

/// Outcome of one statistical attempt.
struct Attempt {
    pass: bool,
    detail: String,
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn report(&mut self, name: &str, pass: bool, detail: &str, secs: f64) {
        if !pass {
            self.failures += 1;
        }
        println!(
            "{} {name}: {detail} [{secs:.1}s]",
            if pass { "PASS" } else { "FAIL" }
        );
    }

    /// Runs `f` with `seeds[0]`, and again with `seeds[1]` if the first attempt fails.
    fn statistical<F: Fn(u64) -> Attempt>(&mut self, name: &str, seeds: [u64; 2], f: F) {
        let start = Instant::now();
        let first = f(seeds[0]);
        if first.pass {
            self.report(
                name,
                true,
                &format!("seed {}: {}", seeds[0], first.detail),
                start.elapsed().as_secs_f64(),
            );
            return;
        }
        let second = f(seeds[1]);
        let detail = format!(
            "seed {}: {}; rerun seed {}: {}",
            seeds[0], first.detail, seeds[1], second.detail
        );
        self.report(name, second.pass, &detail, start.elapsed().as_secs_f64());
    }

    fn deterministic<F: FnOnce() -> Attempt>(&mut self, name: &str, f: F) {
        let start = Instant::now();
        let a = f();
        self.report(name, a.pass, &a.detail, start.elapsed().as_secs_f64());
    }
}

fn kisdi(sigma: f64, mu: f64, seed: u64) -> ModelSpec {
    let m = kisdi_model_with_mu(sigma, mu).unwrap();
    validate_model(&m, 500, seed).unwrap();
    m
}

// Criterion 1: both engines against the truncated two-trait chain.
const CAP: usize = 30;

fn oracle_equivalence(engine: Engine, seed: u64) -> Attempt {
    let p = TwoTrait::high_turnover();
    let model = p.model();
    let law = two_trait_law(&p, [3, 2], CAP, 1.0);
    let tr = p.trait_values();
    let scaling = ScalingSpec::plain(1).unwrap();
    let init = PointMeasureState::from_classes(&[(tr[0], 3), (tr[1], 2)], &model);
    let n = 10_000;
    let states = run_replicates(n, seed, None, |_, rng| {
        let mut sim = Simulator::new(&model, &scaling, init.clone(), engine, rng).unwrap();
        sim.run_until(1.0).unwrap();
        let mut c = [0usize; 2];
        for cl in sim.state().classes() {
            let i = if cl.trait_value == tr[0] { 0 } else { 1 };
            c[i] += cl.count as usize;
        }
        c
    });
    let side = CAP + 1;
    let mut emp = vec![0.0; side * side + 1];
    for c in states {
        if c[0] > CAP || c[1] > CAP {
            emp[side * side] += 1.0 / n as f64;
        } else {
            emp[c[0] * side + c[1]] += 1.0 / n as f64;
        }
    }
    let mut law = law;
    law.push(0.0);
    let tv = total_variation(&emp, &law);
    Attempt {
        pass: tv <= 0.01,
        detail: format!(
            "TV {tv:.4} <= 0.01 (sampling floor {:.4})",
            tv_noise_floor(&law, n)
        ),
    }
}

// Criterion 2: time-averaged density against the monomorphic equilibrium.
fn equilibrium_tracking(seed: u64) -> Attempt {
    let m = kisdi(0.1, 0.0, seed);
    let nbar = equilibrium_nbar(TraitValue::scalar(1.2), &m).unwrap();
    let k = 1000;
    let cfg = SimConfig::new(Engine::Direct, 150.0).with_recorder(RecorderConfig {
        bins: None,
        ..Default::default()
    });
    let init = PointMeasureState::monomorphic(TraitValue::scalar(1.2), k, &m);
    let tr = simulate_with_rng(
        &m,
        &ScalingSpec::plain(k).unwrap(),
        init,
        &cfg,
        stream_rng(seed, 0),
    )
    .unwrap();
    let avg = tr.time_average_mass(50.0, 150.0) / k as f64;
    let target = 2.5667;
    let rel = (avg / target - 1.0).abs();
    Attempt {
        pass: rel <= 0.05 && (nbar - 2.566_666_7).abs() < 1e-4,
        detail: format!("mean I/K on [50, 150] = {avg:.4}, target {target} +/- 5% (rel {rel:.4}); nbar(1.2) = {nbar:.6}"),
    }
}

// Criterion 3: Var <X^K_t, 1> ~ 1/K.
fn fluctuation_scaling(seed: u64) -> Attempt {
    let m = kisdi(0.1, 0.03, seed);
    let cfg = ScalingStudyConfig {
        ks: vec![50, 100, 200, 400],
        eta: 1.0,
        mode: ScalingMode::None,
        t_probe: 10.0,
        replicates: 200,
        seed,
        workers: None,
        engine: Engine::Direct,
        init: InitialCondition::Monomorphic { x: 1.2, mass: 1.0 },
        ide: None,
    };
    let t = scaling_study(&m, &cfg).unwrap();
    let slope = t.variance_slope.unwrap_or(f64::NAN);
    let kv: Vec<String> = t.rows.iter().map(|r| format!("{:.3}", r.k_var)).collect();
    Attempt {
        pass: (-1.35..=-0.65).contains(&slope),
        detail: format!(
            "slope {slope:.3} in [-1.35, -0.65]; K Var = [{}]",
            kv.join(", ")
        ),
    }
}

// Criterion 4: martingale residual and bracket for the Yule process.
fn yule_martingale(seed: u64) -> Attempt {
    let (i0, b, t) = (50u64, 1.0, 0.5);
    let m = yule_model(b);
    let scaling = ScalingSpec::plain(1).unwrap();
    let cfg = SimConfig::new(Engine::Direct, t).with_recorder(RecorderConfig {
        audit: true,
        bins: None,
        ..Default::default()
    });
    let init = PointMeasureState::monomorphic(TraitValue::scalar(1.0), i0, &m);
    let trajs: Vec<_> = run_replicates(1000, seed, None, |_, rng| {
        simulate_with_rng(&m, &scaling, init.clone(), &cfg, rng).unwrap()
    });
    let r = martingale_residual(
        &trajs,
        &TestFunction::one(),
        &m,
        &scaling,
        BracketForm::Exact,
    )
    .unwrap();
    let oracle = yule_bracket(i0 as f64, b, t);
    let vs_oracle = r.var_residual / oracle;
    let pass = r.mode == CompensatorMode::Audit
        && r.zero_mean()
        && (0.9..=1.1).contains(&r.ratio)
        && (0.9..=1.1).contains(&vs_oracle);
    Attempt {
        pass,
        detail: format!(
            "z {:.2} (|z| < 3); Var M / E<M> = {:.3}, Var M / analytic {:.3} in [0.9, 1.1]",
            r.z, r.ratio, vs_oracle
        ),
    }
}

// Criterion 4, eta = 1: bracket of the superprocess limit.
fn superprocess_bracket(seed: u64) -> Attempt {
    let m = kisdi(0.1, 0.0, seed);
    let k = 1000;
    let scaling = ScalingSpec::new(k, 1.0, ScalingMode::AccelSmallSteps).unwrap();
    let nbar = equilibrium_nbar(TraitValue::scalar(1.2), &m).unwrap();
    let init = PointMeasureState::monomorphic(
        TraitValue::scalar(1.2),
        (k as f64 * nbar).floor() as u64,
        &m,
    );
    let cfg = SimConfig::new(Engine::Direct, 0.1).with_recorder(RecorderConfig::atoms(0.001));
    let trajs: Vec<_> = run_replicates(500, seed, None, |_, rng| {
        renormalize(
            &simulate_with_rng(&m, &scaling, init.clone(), &cfg, rng).unwrap(),
            k,
        )
        .unwrap()
    });
    match martingale_residual(
        &trajs,
        &TestFunction::one(),
        &m,
        &scaling,
        BracketForm::SuperprocessLimit,
    ) {
        Ok(r) => Attempt {
            pass: (0.8..=1.25).contains(&r.ratio),
            detail: format!(
                "ratio {:.3} in [0.8, 1.25] (CI {:.3}..{:.3}), z {:.2}",
                r.ratio, r.ratio_ci.0, r.ratio_ci.1, r.z
            ),
        },
        Err(e) => Attempt {
            pass: false,
            detail: format!("diagnostic failed: {e}"),
        },
    }
}

// Criterion 5: fixation frequency of a mutant against the branching approximation.
fn invasion(seed: u64) -> Attempt {
    let m = kisdi_model(0.1).unwrap();
    let (x, y) = (TraitValue::scalar(1.2), TraitValue::scalar(1.3));
    let r = invasion_experiment(&m, x, y, 1000, 2000, seed, &InvasionOptions::default()).unwrap();
    let z = binomial_z(r.fixations, r.completed, 0.15244);
    Attempt {
        pass: z.abs() < 3.0 && r.timeouts == 0 && (r.predicted - 0.15244).abs() < 1e-4,
        detail: format!(
            "{} / {} fixed = {:.4}, predicted {:.5}, z {:.2} (< 3), timeouts {}",
            r.fixations, r.completed, r.fix_freq, r.predicted, z, r.timeouts
        ),
    }
}

// Criterion 6: resident trait after one unit of mutation time.
fn tss_consistency(seed: u64) -> Attempt {
    let m = kisdi(0.1, 1.0, seed);
    let k = 1000u64;
    let u_k = 1.0 / (10.0 * k as f64 * (k as f64).ln());
    let x0 = TraitValue::scalar(1.2);
    let n = 200;
    let micro = run_replicates(n, seed, None, |_, rng| {
        micro_resident_trait(&m, k, u_k, x0, 1.0, rng).unwrap()
    });
    let extinct = micro.iter().filter(|o| o.resident.is_none()).count();
    let w = 1.0 / (n - extinct) as f64;
    let micro: Vec<(f64, f64)> = micro
        .iter()
        .filter_map(|o| o.resident)
        .map(|x| (x.x(), w))
        .collect();
    let macro_: Vec<(f64, f64)> = run_replicates(n, seed.wrapping_add(1), None, |_, mut rng| {
        simulate_tss(x0, 1.0, &m, &mut rng, &TssOptions::default())
            .unwrap()
            .state
            .x
            .x()
    })
    .into_iter()
    .map(|x| (x, 1.0 / n as f64))
    .collect();
    let jumped = macro_.iter().filter(|p| p.0 != 1.2).count();
    let w = wasserstein1(&Measure1d::Atoms(micro), &Measure1d::Atoms(macro_), true).unwrap();
    Attempt {
        pass: w.distance <= 0.1,
        detail: format!(
            "W1 {:.4} <= 0.1; micro extinct {extinct}, TSS paths with a substitution {jumped} / {n}",
            w.distance
        ),
    }
}

// Criterion 7: deterministic solvers.
fn mean_field_model(b: f64, d: f64) -> ModelSpec {
    ModelSpec::builder(
        "mean-field",
        TraitSpace::interval(0.0, 4.0).unwrap(),
        Demography::LinearLogistic {
            birth: constant_fn(b),
            death: constant_fn(d),
            alpha: constant_fn(1.0),
        },
    )
    .competition(Kernel::Constant(1.0))
    .birth_interaction(Kernel::Constant(1.0))
    .envelopes(b, d.max(1.0), 1.0, 1.0)
    .build()
    .unwrap()
}

fn neutral_model() -> ModelSpec {
    ModelSpec::builder(
        "neutral",
        TraitSpace::interval(0.0, 4.0).unwrap(),
        Demography::LinearLogistic {
            birth: constant_fn(1.0),
            death: constant_fn(1.0),
            alpha: constant_fn(0.0),
        },
    )
    .envelopes(1.0, 1.0, 0.0, 0.0)
    .build()
    .unwrap()
}

fn variance(g: &TraitGrid, v: &[f64]) -> f64 {
    let x = g.nodes();
    let mass = g.integrate(v);
    let mean = g.integrate(&v.iter().zip(&x).map(|(a, x)| a * x).collect::<Vec<_>>()) / mass;
    g.integrate(
        &v.iter()
            .zip(&x)
            .map(|(a, x)| a * (x - mean).powi(2))
            .collect::<Vec<_>>(),
    ) / mass
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn mean_field_mass() -> Attempt {
    let (b, d, n0) = (2.0, 0.5, 0.1);
    let m = mean_field_model(b, d);
    let g = TraitGrid::new(0.0, 4.0, 64).unwrap();
    let init = DensityField::bump(&g, 2.0, 0.5, n0).unwrap();
    let s = solve_ide(
        &init,
        5.0,
        &m,
        &IdeMode::Standard,
        &g,
        &FieldOptions::default(),
    )
    .unwrap();
    let r = b - d;
    let worst = s
        .masses()
        .into_iter()
        .map(|(t, mass)| rel(mass, r * n0 / (n0 + (r - n0) * (-r * t).exp())))
        .fold(0.0, f64::max);
    Attempt {
        pass: worst <= 1e-5,
        detail: format!("max relative error {worst:.2e} <= 1e-5"),
    }
}

fn heat_variance() -> Attempt {
    let m = neutral_model();
    let g = TraitGrid::new(0.0, 4.0, 200).unwrap();
    let c = 0.01;
    let init = DensityField::bump(&g, 2.0, 0.1, 1.0).unwrap();
    let s = solve_rd_pde(
        &init,
        1.0,
        &m,
        &vec![c; g.len()],
        &g,
        &FieldOptions::default(),
    )
    .unwrap();
    let growth = variance(&g, &s.last().values) - variance(&g, &init.values);
    let err = growth / c - 1.0;
    Attempt {
        pass: err.abs() <= 0.01,
        detail: format!(
            "variance growth {growth:.6} vs c t = {c}, error {:.2}%",
            100.0 * err
        ),
    }
}

/// Spatial tolerance for `Δx` halving of field solutions.
const SPACE_RTOL: f64 = 1e-4;

fn self_convergence() -> Attempt {
    let mut notes = Vec::new();
    let mut pass = true;
    let mut check = |name: &str, change: f64, tol: f64| {
        pass &= change <= tol;
        notes.push(format!("{name} {change:.1e} (< {tol:.0e})"));
    };

    let m = kisdi_model_with_mu(0.1, 0.0).unwrap();
    let x = TraitValue::scalar(1.2);
    let o = OdeOptions::default();
    let a = solve_monomorphic(x, 0.1, 2.0, &m, &o).unwrap();
    let b = solve_monomorphic(
        x,
        0.1,
        2.0,
        &m,
        &OdeOptions {
            rtol: o.rtol * 1e-2,
            ..o
        },
    )
    .unwrap();
    check("ODE dt", rel(a.last(), b.last()), o.rtol);
    // dn/dt = n (r - c n) in closed form, for reference.
    let (r, c) = (2.8, m.u().eval(TraitValue::ZERO));
    let exact = r * 0.1 / (0.1 * c + (r - 0.1 * c) * (-r * 2.0f64).exp());
    let ode_exact = rel(a.last(), exact);

    let m = kisdi_model_with_mu(0.1, 0.1).unwrap();
    let fo = FieldOptions::default();
    let ide_mass = |g: &TraitGrid, opts: &FieldOptions| {
        let init = DensityField::bump(g, 1.2, 0.2, 1.0).unwrap();
        let s = solve_ide(&init, 5.0, &m, &IdeMode::Standard, g, opts).unwrap();
        (g.integrate(&s.last().values), s.dt)
    };
    let g = TraitGrid::new(0.0, 4.0, 200).unwrap();
    let (coarse, dt) = ide_mass(&g, &fo);
    let (half, _) = ide_mass(
        &g,
        &FieldOptions {
            dt: Some(dt / 2.0),
            ..fo.clone()
        },
    );
    check("IDE dt", rel(coarse, half), fo.rtol);
    let (fine, _) = ide_mass(&g.refined(), &fo);
    check("IDE dx", rel(coarse, fine), SPACE_RTOL);

    let pm = neutral_model();
    let heat = |g: &TraitGrid, opts: &FieldOptions| {
        let init = DensityField::bump(g, 2.0, 0.1, 1.0).unwrap();
        let s = solve_rd_pde(&init, 1.0, &pm, &vec![0.01; g.len()], g, opts).unwrap();
        (variance(g, &s.last().values), s.dt)
    };
    let (coarse, dt) = heat(&g, &fo);
    let (half, _) = heat(
        &g,
        &FieldOptions {
            dt: Some(dt / 2.0),
            ..fo.clone()
        },
    );
    check("PDE dt", rel(coarse, half), fo.rtol);
    let (fine, _) = heat(&g.refined(), &fo);
    check("PDE dx", rel(coarse, fine), SPACE_RTOL);
    notes.push(format!("ODE vs closed form {ode_exact:.1e}"));
    Attempt {
        pass,
        detail: notes.join(", "),
    }
}

// Criterion 8: desk-scale figure presets.
fn desk_summary(name: &str, seed: u64) -> PatternSummary {
    let p = figure_preset(name).unwrap().desk();
    let m = p.model().unwrap();
    validate_model(&m, 500, seed).unwrap();
    let scaling = p.scaling(p.k).unwrap();
    let cfg = SimConfig::new(Engine::Direct, p.t_end).with_recorder(RecorderConfig {
        snapshot_dt: Some(p.t_end / 400.0),
        mass_every_event: false,
        ..Default::default()
    });
    let tr = simulate_with_rng(
        &m,
        &scaling,
        p.initial_state(p.k, &m),
        &cfg,
        stream_rng(seed + p.seed_offset, 0),
    )
    .unwrap();
    let tr = renormalize(&tr, p.k).unwrap();
    pattern_summary(&tr, 0.0, p.t_end, 5).unwrap()
}

fn figure_regimes(seed: u64) -> Attempt {
    let s: Vec<(&str, PatternSummary)> = [
        "fig1a", "fig1b", "fig1c", "fig1d", "fig2a", "fig2b", "fig2c", "fig2d",
    ]
    .iter()
    .map(|n| (*n, desk_summary(n, seed)))
    .collect();
    let get = |n: &str| &s.iter().find(|p| p.0 == n).unwrap().1;
    let noise = |p: &PatternSummary| p.mass_qv_rate / p.mass_mean;
    let (a, c, d) = (get("fig1a"), get("fig1c"), get("fig1d"));
    let smooth = c.profile_jitter < 0.5 * a.profile_jitter && c.support_width > a.support_width;
    let jumpy = d.support_width < 0.05 && d.mode_stability >= 0.95;
    let base = noise(get("fig2a"));
    let branched = ["fig2c", "fig2d"]
        .iter()
        .all(|n| noise(get(n)) > 5.0 * base);
    let mut detail = format!(
        "smooth at large K: jitter {:.3} vs {:.3}, width {:.3} vs {:.3} [{}]; monomorphic at tiny mu: width {:.4}, mode stability {:.2} [{}]; eta = 1 noise ratio {:.1} and {:.1} over fig2a [{}]",
        c.profile_jitter,
        a.profile_jitter,
        c.support_width,
        a.support_width,
        ok(smooth),
        d.support_width,
        d.mode_stability,
        ok(jumpy),
        noise(get("fig2c")) / base,
        noise(get("fig2d")) / base,
        ok(branched),
    );
    let ext: Vec<&str> = s.iter().filter(|p| p.1.extinct).map(|p| p.0).collect();
    if !ext.is_empty() {
        detail.push_str(&format!("; extinct: {}", ext.join(", ")));
    }
    Attempt {
        pass: smooth && jumpy && branched,
        detail,
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "no"
    }
}

fn main() -> ExitCode {
    let mut suite = Suite { failures: 0 };
    // Under `cargo test` a filter argument may be passed; the suite always runs in full.
    suite.statistical("1 oracle equivalence (direct engine)", [11, 12], |s| {
        oracle_equivalence(Engine::Direct, s)
    });
    suite.statistical("1 oracle equivalence (rejection engine)", [21, 22], |s| {
        oracle_equivalence(Engine::Rejection, s)
    });
    suite.statistical("2 equilibrium tracking", [31, 32], equilibrium_tracking);
    suite.statistical("3 fluctuation scaling", [41, 42], fluctuation_scaling);
    suite.statistical("4 martingale identity (Yule)", [51, 52], yule_martingale);
    suite.statistical(
        "4 martingale bracket (eta = 1)",
        [53, 54],
        superprocess_bracket,
    );
    suite.statistical("5 invasion probability", [61, 62], invasion);
    suite.statistical("6 TSS consistency", [71, 72], tss_consistency);
    suite.deterministic("7 mean-field IDE mass", mean_field_mass);
    suite.deterministic("7 heat variance growth", heat_variance);
    suite.deterministic("7 self-convergence", self_convergence);
    suite.statistical("8 figure regimes", [81, 82], figure_regimes);
    println!("{} failure(s)", suite.failures);
    if suite.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
