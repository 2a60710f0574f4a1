use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BASE: &str = r#"
[model]
name = "kisdi"
sigma = 0.1
mu = 0.1

[scaling]
k = 50

[run]
seed = 3
t_end = 2.0
replicates = 2
"#;

fn evoibm(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_evoibm"))
        .arg("--config")
        .arg(&cfg)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn simulate_is_reproducible_byte_for_byte() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        let o = evoibm(
            tmp.path(),
            BASE,
            &["--out", d.to_str().unwrap(), "simulate"],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in [
        "heatmap_000.csv",
        "heatmap_001.csv",
        "mass_000.csv",
        "mass_001.csv",
        "simulate.json",
    ] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
    }
    assert_ne!(read(&a, "mass_000.csv"), read(&a, "mass_001.csv"));
}

#[test]
fn worker_count_does_not_change_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = BASE.replace("replicates = 2", "replicates = 6");
    let mut outs = Vec::new();
    for w in ["1", "4"] {
        let d = tmp.path().join(format!("w{w}"));
        let o = evoibm(
            tmp.path(),
            &cfg,
            &["--workers", w, "--out", d.to_str().unwrap(), "simulate"],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        outs.push(d);
    }
    for i in 0..6 {
        let name = format!("mass_{i:03}.csv");
        assert_eq!(read(&outs[0], &name), read(&outs[1], &name));
    }
}

#[test]
fn event_log_is_written_on_request() {
    let tmp = TempDir::new().unwrap();
    let cfg = BASE.replace("replicates = 2", "replicates = 1\nevent_log = true");
    let o = evoibm(
        tmp.path(),
        &cfg,
        &["--out", tmp.path().join("o").to_str().unwrap(), "simulate"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let log = read(&tmp.path().join("o"), "events.csv");
    assert!(log.lines().count() > 10);
}

#[test]
fn missing_required_keys_exit_2_with_their_name() {
    let tmp = TempDir::new().unwrap();
    let o = evoibm(
        tmp.path(),
        &BASE.replace("t_end = 2.0", ""),
        &["--out", "x", "simulate"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.t_end"), "{}", stderr(&o));

    let o = evoibm(
        tmp.path(),
        &BASE.replace("seed = 3", ""),
        &["--out", "x", "simulate"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.seed"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_exit_2() {
    let tmp = TempDir::new().unwrap();
    let o = evoibm(
        tmp.path(),
        &BASE.replace("mu = 0.1", "mu = 0.1\nmuu = 0.2"),
        &["validate"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("muu"), "{}", stderr(&o));
}

#[test]
fn preset_fills_what_the_config_leaves_open() {
    let tmp = TempDir::new().unwrap();
    let cfg = "[run]\nseed = 1\nt_end = 0.5\nreplicates = 1\n";
    let out = tmp.path().join("p");
    let o = evoibm(
        tmp.path(),
        cfg,
        &[
            "--preset",
            "fig2c",
            "--desk",
            "--out",
            out.to_str().unwrap(),
            "simulate",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let side: serde_json::Value = serde_json::from_str(&read(&out, "simulate.json")).unwrap();
    let c = &side["config"];
    assert_eq!(c["run"]["t_end"], 0.5);
    assert_eq!(c["model"]["sigma"], 0.3);
    assert_eq!(c["scaling"]["k"], 400);
    assert_eq!(c["scaling"]["eta"], 1.0);
    assert!(c["run"]["seed"].is_u64());
    assert_eq!(
        side["results"]["scaling"]["mode"]["mode"],
        "accel_small_steps"
    );
}

#[test]
fn unknown_preset_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let o = evoibm(tmp.path(), BASE, &["--preset", "fig9", "validate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_refuses_mutation_probability_above_one() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("v");
    let o = evoibm(
        tmp.path(),
        &BASE.replace("mu = 0.1", "mu = 1.5"),
        &["--out", out.to_str().unwrap(), "validate"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(read(&out, "validation.csv").contains("mu_range,false"));

    let o = evoibm(
        tmp.path(),
        &BASE.replace("mu = 0.1", "mu = 1.5"),
        &["--out", out.to_str().unwrap(), "simulate"],
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn dimorphic_ode_series_has_both_densities() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("d");
    let o = evoibm(
        tmp.path(),
        BASE,
        &["--out", out.to_str().unwrap(), "limits", "ode-di"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let s = read(&out, "series.csv");
    assert_eq!(s.lines().next(), Some("t,mass,n_x,n_y"));
    let last: Vec<f64> = s
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((last[1] - last[2] - last[3]).abs() < 1e-12);
}

#[test]
fn ide_heatmap_matches_the_grid() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("i");
    let cfg = format!("{BASE}\n[limits]\nintervals = 100\n");
    let o = evoibm(
        tmp.path(),
        &cfg,
        &["--out", out.to_str().unwrap(), "limits", "ide"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let h = read(&out, "heatmap.csv");
    assert_eq!(h.lines().next().unwrap().split(',').count(), 102);
    assert!(read(&out, "series.csv").starts_with("t,mass\n"));
}

#[test]
fn invade_writes_one_row() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("inv");
    let o = evoibm(
        tmp.path(),
        BASE,
        &[
            "--out",
            out.to_str().unwrap(),
            "invade",
            "--x",
            "1.2",
            "--y",
            "1.3",
            "--K",
            "100",
            "--replicates",
            "200",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(&out, "invasion.csv");
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("y,x,K,replicates,fix_freq,predicted,binomial_sigma,mean_theta0")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..4], ["1.3", "1.2", "100", "200"]);
    let predicted: f64 = row[5].parse().unwrap();
    assert!((predicted - 0.15244).abs() < 1e-4);
}

#[test]
fn tss_log_starts_at_the_initial_trait() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("t");
    let o = evoibm(
        tmp.path(),
        BASE,
        &[
            "--out",
            out.to_str().unwrap(),
            "tss",
            "--x0",
            "1.0",
            "--t-end",
            "1000",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let log = read(&out, "tss_log.csv");
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("t,from,to"));
    let first: Vec<f64> = lines
        .next()
        .expect("no substitution")
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(first[1], 1.0);
}

#[test]
fn martingale_on_total_mass_passes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("m");
    let cfg =
        BASE.replace("replicates = 2", "replicates = 2000") + "\n[martingale]\naudit = true\n";
    let o = evoibm(
        tmp.path(),
        &cfg,
        &["--out", out.to_str().unwrap(), "martingale"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read(&out, "martingale.csv").lines().count(), 2001);
}
