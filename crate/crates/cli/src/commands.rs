use std::path::PathBuf;

use evoibm::diagnostics::{
    martingale_residual, scaling_study, BracketForm, IdeComparison, InitialCondition,
    ScalingStudyConfig, TestFunction,
};
use evoibm::ensemble::{run_replicates, stream_rng};
use evoibm::limits::{
    diffusion_coefficient, equilibrium_nbar, solve_dimorphic, solve_ide, solve_monomorphic,
    solve_rd_pde, DensityField, FieldOptions, FieldSolution, IdeMode, OdeOptions, TraitGrid,
};
use evoibm::model::constant_fn;
use evoibm::presets::FigurePreset;
use evoibm::sim::io::{write_event_log, write_heatmap, write_mass, write_trajectory_heatmap};
use evoibm::sim::{renormalize, simulate_with_rng};
use evoibm::tss::{invasion_experiment, simulate_tss, InvasionOptions, TssOptions};
use evoibm::{
    validate_model, ModelError, ModelSpec, RecorderConfig, ScalingSpec, SimConfig, TraitValue,
};
use serde_json::{json, Value};

use crate::config::{CompareSection, Config, FormName, LimitsSection, MartingaleSection, TestFn};
use crate::output::{object, Out};
use crate::{CliError, Limit};

pub struct Context {
    pub cfg: Config,
    pub preset: Option<FigurePreset>,
    pub out: PathBuf,
}

fn other<E: std::error::Error + Send + Sync + 'static>(e: E) -> CliError {
    CliError::Other(e.into())
}

/// Validates with 500 probes; envelope failures map to exit code 3.
fn validated(cfg: &Config, seed: u64) -> Result<ModelSpec, CliError> {
    let m = cfg.model()?;
    match validate_model(&m, 500, seed) {
        Ok(_) => Ok(m),
        Err(e @ (ModelError::HardViolation { .. } | ModelError::QuadratureFailure { .. })) => {
            Err(CliError::Validation(e.to_string()))
        }
        Err(e) => Err(other(e)),
    }
}

fn scaling_json(s: &ScalingSpec) -> Value {
    json!({
        "k": s.k(),
        "eta": s.eta(),
        "mode": s.mode(),
        "sigma_factor": s.sigma_factor(),
        "mu_factor": s.mu_factor(),
        "warnings": s.warnings(),
    })
}

fn seed_offset(ctx: &Context) -> u64 {
    ctx.preset.map_or(0, |p| p.seed_offset)
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let seed = cfg.seed()?;
    let t_end = cfg.t_end()?;
    let scaling = cfg.scaling()?;
    let m = validated(cfg, seed)?;
    let r = &cfg.run;
    let recorder = RecorderConfig {
        snapshot_dt: Some(r.snapshot_dt.unwrap_or(t_end / 200.0)),
        bins: Some(r.bins.unwrap_or(200)),
        mass_every_event: r.mass_every_event.unwrap_or(false),
        event_log: r.event_log.unwrap_or(false),
        ..Default::default()
    };
    let sim_cfg = SimConfig::new(cfg.engine(), t_end).with_recorder(recorder);
    let k = scaling.k();
    let init = cfg.initial_state(k, &m);
    let replicates = r.replicates.unwrap_or(1).max(1);
    let renorm = r.renormalize.unwrap_or(true);
    let stream_seed = seed.wrapping_add(seed_offset(ctx));
    let runs = run_replicates(replicates, stream_seed, cfg.workers(), |_, rng| {
        let tr = simulate_with_rng(&m, &scaling, init.clone(), &sim_cfg, rng)?;
        if renorm {
            renormalize(&tr, k)
        } else {
            Ok(tr)
        }
    });
    let out = Out::new(&ctx.out)?;
    let mut results = Vec::with_capacity(replicates);
    for (i, tr) in runs.into_iter().enumerate() {
        let tr = tr.map_err(other)?;
        let suffix = if replicates == 1 {
            String::new()
        } else {
            format!("_{i:03}")
        };
        out.write(&format!("heatmap{suffix}.csv"), |mut w| {
            write_trajectory_heatmap(&mut w, &tr)
        })?;
        out.write(&format!("mass{suffix}.csv"), |mut w| {
            write_mass(&mut w, &tr)
        })?;
        if let Some(ev) = &tr.events {
            out.write(&format!("events{suffix}.csv"), |mut w| {
                write_event_log(&mut w, ev)
            })?;
        }
        let final_mass = tr.final_snapshot().map_or(0.0, |s| s.total);
        println!(
            "replicate {i}: {} events, final mass {final_mass}{}",
            tr.event_count,
            tr.extinction_time
                .map_or(String::new(), |t| format!(", extinct at t = {t}"))
        );
        results.push(object([
            ("replicate", json!(i)),
            ("events", json!(tr.event_count)),
            ("proposals", json!(tr.proposals)),
            ("c_bar", json!(tr.c_bar)),
            ("final_mass", json!(final_mass)),
            ("extinction_time", json!(tr.extinction_time)),
        ]));
        if i == 0 {
            results.push(object([("bin_edges", json!(tr.bin_edges))]));
        }
    }
    out.sidecar(
        "simulate",
        cfg,
        &object([
            ("seed", json!(seed)),
            ("stream_seed", json!(stream_seed)),
            ("spec", json!(m.name())),
            ("engine", json!(cfg.engine())),
            ("scaling", scaling_json(&scaling)),
            ("renormalized", json!(renorm)),
            ("replicates", json!(results)),
        ]),
    )?;
    Ok(())
}

fn grid_for(m: &ModelSpec, intervals: usize) -> Result<TraitGrid, CliError> {
    let (lo, hi) = m
        .space()
        .range()
        .ok_or_else(|| CliError::Config("limits need a bounded trait interval".into()))?;
    TraitGrid::new(lo, hi, intervals).map_err(|e| CliError::Config(e.to_string()))
}

fn write_field(out: &Out, sol: &FieldSolution) -> Result<(), CliError> {
    let rows: Vec<(f64, &[f64])> = sol
        .frames
        .iter()
        .map(|f| (f.t, f.values.as_slice()))
        .collect();
    out.write("heatmap.csv", |mut w| {
        write_heatmap(&mut w, &sol.grid.nodes(), &rows)
    })?;
    out.write("series.csv", |w| {
        writeln!(w, "t,mass")?;
        for (t, m) in sol.masses() {
            writeln!(w, "{t},{m}")?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn limits(ctx: &Context, which: Limit) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let t_end = cfg.t_end()?;
    let m = cfg.model()?;
    let l = cfg.limits.clone().unwrap_or(LimitsSection::default());
    let x0 = cfg.x0();
    let out = Out::new(&ctx.out)?;
    let fo = FieldOptions {
        samples: l.samples.unwrap_or(100),
        ..Default::default()
    };
    let results = match which {
        Limit::Ide | Limit::Pde => {
            let grid = grid_for(&m, l.intervals.unwrap_or(400))?;
            let init =
                DensityField::bump(&grid, x0, l.width.unwrap_or(0.05), l.mass.unwrap_or(1.0))
                    .map_err(other)?;
            let sol = if which == Limit::Ide {
                let mode = if l.rare_mutation.unwrap_or(false) {
                    IdeMode::RareMutation {
                        r: constant_fn(1.0),
                    }
                } else {
                    IdeMode::Standard
                };
                solve_ide(&init, t_end, &m, &mode, &grid, &fo).map_err(other)?
            } else {
                let c = match l.c {
                    Some(c) => vec![c; grid.len()],
                    None => diffusion_coefficient(&m, &constant_fn(1.0), &grid),
                };
                solve_rd_pde(&init, t_end, &m, &c, &grid, &fo).map_err(other)?
            };
            write_field(&out, &sol)?;
            let masses = sol.masses();
            let (m0, m1) = (masses[0].1, masses.last().unwrap().1);
            println!(
                "mass {m0} -> {m1} (relative change {}), clipped {}",
                (m1 - m0) / m0,
                sol.clipped
            );
            object([
                ("initial_mass", json!(m0)),
                ("final_mass", json!(m1)),
                ("relative_mass_change", json!((m1 - m0) / m0)),
                ("clipped", json!(sol.clipped)),
                ("dt", json!(sol.dt)),
                ("steps", json!(sol.steps)),
            ])
        }
        Limit::OdeMono => {
            let x = TraitValue::scalar(x0);
            let s = solve_monomorphic(x, l.mass.unwrap_or(1.0), t_end, &m, &OdeOptions::default())
                .map_err(other)?;
            out.write("series.csv", |w| {
                writeln!(w, "t,mass")?;
                for (t, n) in s.t.iter().zip(&s.n) {
                    writeln!(w, "{t},{n}")?;
                }
                Ok(())
            })?;
            let nbar = equilibrium_nbar(x, &m).ok();
            println!("n({t_end}) = {}, equilibrium {nbar:?}", s.last());
            object([
                ("final", json!(s.last())),
                ("nbar", json!(nbar)),
                ("steps", json!(s.steps)),
            ])
        }
        Limit::OdeDi => {
            let (x, y) = (
                TraitValue::scalar(x0),
                TraitValue::scalar(l.y.unwrap_or(x0 + 0.1)),
            );
            let nx = match l.mass {
                Some(v) => v,
                None => equilibrium_nbar(x, &m).map_err(other)?,
            };
            let s = solve_dimorphic(
                x,
                y,
                nx,
                l.n0y.unwrap_or(1e-3),
                t_end,
                &m,
                &OdeOptions::default(),
            )
            .map_err(other)?;
            out.write("series.csv", |w| {
                writeln!(w, "t,mass,n_x,n_y")?;
                for i in 0..s.t.len() {
                    writeln!(
                        w,
                        "{},{},{},{}",
                        s.t[i],
                        s.nx[i] + s.ny[i],
                        s.nx[i],
                        s.ny[i]
                    )?;
                }
                Ok(())
            })?;
            let (ex, ey) = (*s.nx.last().unwrap(), *s.ny.last().unwrap());
            println!("(n_x, n_y)({t_end}) = ({ex}, {ey})");
            object([
                ("final_nx", json!(ex)),
                ("final_ny", json!(ey)),
                ("steps", json!(s.steps)),
            ])
        }
    };
    let name = match which {
        Limit::Ide => "limits-ide",
        Limit::Pde => "limits-pde",
        Limit::OdeMono => "limits-ode-mono",
        Limit::OdeDi => "limits-ode-di",
    };
    out.sidecar(name, cfg, &results)?;
    Ok(())
}

pub fn tss(ctx: &Context, x0: Option<f64>, t_end: Option<f64>) -> Result<(), CliError> {
    let mut cfg = ctx.cfg.clone();
    let sec = cfg.tss.get_or_insert_with(Default::default);
    if x0.is_some() {
        sec.x0 = x0;
    }
    if t_end.is_some() {
        sec.t_end = t_end;
    }
    let sec = sec.clone();
    let seed = cfg.seed()?;
    let t_end = match sec.t_end {
        Some(t) => t,
        None => cfg.t_end()?,
    };
    let x0 = sec.x0.unwrap_or(cfg.x0());
    let m = validated(&cfg, seed)?;
    let mut rng = stream_rng(seed.wrapping_add(seed_offset(ctx)), 0);
    let opts = TssOptions {
        table_intervals: sec.table_intervals,
        ..Default::default()
    };
    let o = simulate_tss(TraitValue::scalar(x0), t_end, &m, &mut rng, &opts).map_err(other)?;
    let out = Out::new(&ctx.out)?;
    out.write("tss_log.csv", |w| {
        writeln!(w, "t,from,to")?;
        for (t, a, b) in &o.state.log {
            writeln!(w, "{t},{},{}", a.x(), b.x())?;
        }
        Ok(())
    })?;
    println!(
        "{} substitutions from {} candidates, resident {} at t = {t_end}",
        o.accepted,
        o.candidates,
        o.state.x.x()
    );
    for w in &o.warnings {
        eprintln!("warning: {w}");
    }
    out.sidecar(
        "tss",
        &cfg,
        &object([
            ("seed", json!(seed)),
            ("resident", json!(o.state.x.x())),
            ("candidates", json!(o.candidates)),
            ("accepted", json!(o.accepted)),
            ("warnings", json!(o.warnings)),
        ]),
    )?;
    Ok(())
}

pub fn invade(
    ctx: &Context,
    x: Option<f64>,
    y: Option<f64>,
    k: Option<u64>,
    reps: Option<usize>,
) -> Result<(), CliError> {
    let mut cfg = ctx.cfg.clone();
    let sec = cfg.invade.get_or_insert_with(Default::default);
    sec.x = x.or(sec.x);
    sec.y = y.or(sec.y);
    sec.k = k.or(sec.k);
    sec.replicates = reps.or(sec.replicates);
    let sec = sec.clone();
    let seed = cfg.seed()?;
    let x = sec.x.unwrap_or(cfg.x0());
    let y = sec
        .y
        .ok_or_else(|| CliError::Config("missing required key `invade.y`".into()))?;
    let k = match sec.k {
        Some(k) => k,
        None => cfg
            .scaling
            .k
            .ok_or_else(|| CliError::Config("missing required key `invade.k`".into()))?,
    };
    let replicates = sec.replicates.unwrap_or(1000);
    let m = validated(&cfg, seed)?;
    let opts = InvasionOptions {
        workers: cfg.workers(),
        engine: cfg.engine(),
        ..Default::default()
    };
    let r = invasion_experiment(
        &m,
        TraitValue::scalar(x),
        TraitValue::scalar(y),
        k,
        replicates,
        seed,
        &opts,
    )
    .map_err(other)?;
    let out = Out::new(&ctx.out)?;
    out.write("invasion.csv", |w| {
        writeln!(
            w,
            "y,x,K,replicates,fix_freq,predicted,binomial_sigma,mean_theta0"
        )?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.y, r.x, r.k, r.replicates, r.fix_freq, r.predicted, r.binomial_sigma, r.mean_theta0
        )
    })?;
    let z = r.z_score();
    println!(
        "fixation {} / {} = {}, predicted {}, {z:.2} binomial sd, {} timeouts",
        r.fixations, r.completed, r.fix_freq, r.predicted, r.timeouts
    );
    out.sidecar("invade", &cfg, &r)?;
    if z >= 3.0 {
        return Err(CliError::Statistical(format!(
            "fixation frequency {z:.2} binomial sd from the prediction"
        )));
    }
    Ok(())
}

pub fn compare(ctx: &Context, ide: bool) -> Result<(), CliError> {
    let mut cfg = ctx.cfg.clone();
    let sec = cfg.compare.get_or_insert_with(CompareSection::default);
    if ide {
        sec.ide = Some(true);
    }
    let sec = sec.clone();
    let seed = cfg.seed()?;
    let scaling = cfg.scaling()?;
    let ks = match &sec.ks {
        Some(ks) => ks.clone(),
        None => {
            // Without an explicit list: the desk size of the preset and two smaller ones.
            let top = ctx.preset.map_or(scaling.k(), |p| p.desk_k);
            vec![(top / 4).max(1), (top / 2).max(1), top]
        }
    };
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config(
            "`compare.ks` must be strictly increasing".into(),
        ));
    }
    let t_probe = match sec.t_probe {
        Some(t) => t,
        None => cfg.t_end()?.min(5.0),
    };
    let m = validated(&cfg, seed)?;
    let (init, ide) = if sec.ide.unwrap_or(false) {
        let grid = grid_for(&m, sec.intervals.unwrap_or(400))?;
        let field = DensityField::bump(
            &grid,
            cfg.x0(),
            sec.width.unwrap_or(0.05),
            cfg.run.mass.unwrap_or(1.0),
        )
        .map_err(other)?;
        (
            InitialCondition::Density { grid, field },
            Some(IdeComparison {
                options: FieldOptions::default(),
            }),
        )
    } else {
        (
            InitialCondition::Monomorphic {
                x: cfg.x0(),
                mass: cfg.run.mass.unwrap_or(1.0),
            },
            None,
        )
    };
    let study = ScalingStudyConfig {
        ks,
        eta: scaling.eta(),
        mode: scaling.mode(),
        t_probe,
        replicates: sec.replicates.unwrap_or(40),
        seed,
        workers: cfg.workers(),
        engine: cfg.engine(),
        init,
        ide,
    };
    let table = scaling_study(&m, &study).map_err(|e| CliError::Config(e.to_string()))?;
    let out = Out::new(&ctx.out)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    out.write("compare.csv", |w| {
        writeln!(
            w,
            "k,replicates,mean_mass,var_mass,k_var,extinct,w1,mass_gap"
        )?;
        for r in &table.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.k,
                r.replicates,
                r.mean_mass,
                r.var_mass,
                r.k_var,
                r.extinct,
                opt(r.w1),
                opt(r.mass_gap)
            )?;
        }
        Ok(())
    })?;
    for r in &table.rows {
        println!(
            "K = {}: Var = {:.3e}, K Var = {:.4}, W1 = {}",
            r.k,
            r.var_mass,
            r.k_var,
            opt(r.w1)
        );
    }
    println!("variance slope {}", opt(table.variance_slope));
    out.sidecar("compare", &cfg, &table)?;
    Ok(())
}

pub fn martingale(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let sec = cfg
        .martingale
        .clone()
        .unwrap_or(MartingaleSection::default());
    let seed = cfg.seed()?;
    let t_end = cfg.t_end()?;
    let scaling = cfg.scaling()?;
    let m = validated(cfg, seed)?;
    let form = match sec.form.unwrap_or(FormName::Exact) {
        FormName::Exact => BracketForm::Exact,
        FormName::Superprocess => BracketForm::SuperprocessLimit,
    };
    let f = match sec.f.unwrap_or(TestFn::One) {
        TestFn::One => TestFunction::one(),
        TestFn::X => TestFunction::function(|x: TraitValue| x.x()),
        TestFn::X2 => TestFunction::function(|x: TraitValue| x.x() * x.x()),
    };
    let recorder = if sec.audit.unwrap_or(false) {
        RecorderConfig {
            audit: true,
            bins: None,
            ..Default::default()
        }
    } else {
        RecorderConfig::atoms(sec.snapshot_dt.unwrap_or(t_end / 100.0))
    };
    let sim_cfg = SimConfig::new(cfg.engine(), t_end).with_recorder(recorder);
    let k = scaling.k();
    let init = cfg.initial_state(k, &m);
    let renorm = cfg
        .run
        .renormalize
        .unwrap_or(form == BracketForm::SuperprocessLimit);
    let replicates = cfg.run.replicates.unwrap_or(200);
    let runs = run_replicates(replicates, seed, cfg.workers(), |_, rng| {
        let tr = simulate_with_rng(&m, &scaling, init.clone(), &sim_cfg, rng)?;
        if renorm {
            renormalize(&tr, k)
        } else {
            Ok(tr)
        }
    });
    let trajs = runs
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(other)?;
    let r = martingale_residual(&trajs, &f, &m, &scaling, form)
        .map_err(|e| CliError::Statistical(e.to_string()))?;
    let out = Out::new(&ctx.out)?;
    out.write("martingale.csv", |w| {
        writeln!(w, "replicate,residual,bracket")?;
        for (i, (a, b)) in r.residuals.iter().zip(&r.brackets).enumerate() {
            writeln!(w, "{i},{a},{b}")?;
        }
        Ok(())
    })?;
    let (lo, hi) = match form {
        BracketForm::Exact => (sec.ratio_lo.unwrap_or(0.9), sec.ratio_hi.unwrap_or(1.1)),
        BracketForm::SuperprocessLimit => {
            (sec.ratio_lo.unwrap_or(0.8), sec.ratio_hi.unwrap_or(1.25))
        }
    };
    println!(
        "mean residual {:.4e} (z = {:.2}), Var M = {:.4e}, E<M> = {:.4e}, ratio {:.3} in [{lo}, {hi}]",
        r.mean_residual, r.z, r.var_residual, r.mean_bracket, r.ratio
    );
    out.sidecar(
        "martingale",
        cfg,
        &object([
            ("seed", json!(seed)),
            ("scaling", scaling_json(&scaling)),
            ("mode", json!(r.mode)),
            ("mean_residual", json!(r.mean_residual)),
            ("se_residual", json!(r.se_residual)),
            ("z", json!(r.z)),
            ("var_residual", json!(r.var_residual)),
            ("mean_bracket", json!(r.mean_bracket)),
            ("ratio", json!(r.ratio)),
            ("ratio_ci", json!(r.ratio_ci)),
            ("compensator_error", json!(r.compensator_error)),
            ("bracket_error", json!(r.bracket_error)),
        ]),
    )?;
    if !r.zero_mean() {
        return Err(CliError::Statistical(format!(
            "mean residual is {:.2} standard errors from 0",
            r.z
        )));
    }
    if !(lo..=hi).contains(&r.ratio) {
        return Err(CliError::Statistical(format!(
            "bracket ratio {:.3} outside [{lo}, {hi}]",
            r.ratio
        )));
    }
    Ok(())
}

pub fn validate(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let seed = cfg.seed()?;
    let m = cfg.model()?;
    let probes = cfg.validate.as_ref().and_then(|v| v.probes).unwrap_or(1000);
    let (report, err) = match validate_model(&m, probes, seed) {
        Ok(r) => (r, None),
        Err(e @ ModelError::HardViolation { .. })
        | Err(e @ ModelError::QuadratureFailure { .. }) => {
            let r = match &e {
                ModelError::HardViolation { report, .. }
                | ModelError::QuadratureFailure { report, .. } => (**report).clone(),
                _ => unreachable!(),
            };
            (r, Some(e.to_string()))
        }
        Err(e) => return Err(other(e)),
    };
    let out = Out::new(&ctx.out)?;
    out.write("validation.csv", |w| {
        writeln!(w, "check,passed,probes,worst,witness")?;
        for c in &report.checks {
            writeln!(
                w,
                "{},{},{},{},\"{}\"",
                c.name,
                c.passed,
                c.probes,
                c.worst,
                c.witness.clone().unwrap_or_default()
            )?;
        }
        Ok(())
    })?;
    for c in &report.checks {
        println!(
            "{:<20} {:<4} worst {:.3e}",
            c.name,
            if c.passed { "ok" } else { "FAIL" },
            c.worst
        );
    }
    out.sidecar("validate", cfg, &report)?;
    match err {
        Some(e) => Err(CliError::Validation(e)),
        None => Ok(()),
    }
}
