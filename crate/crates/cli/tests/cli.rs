use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn opj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opj"))
        .args(args)
        .env_remove("OPJ_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 160 units, two covariates, additive effect 0.5.
fn experiment_csv() -> String {
    let mut text = String::from("w,y,x1,x2\n");
    for i in 0..160 {
        let x1 = ((i * 37) % 160) as f64 / 40.0 - 2.0;
        let x2 = ((i * 53) % 160) as f64 / 80.0;
        let w = i % 2;
        let noise = ((i * 17) % 11) as f64 / 10.0 - 0.5;
        let y = 1.0 + 2.0 * x1 - x2 + 0.5 * w as f64 + noise;
        text.push_str(&format!("{w},{y},{x1},{x2}\n"));
    }
    text
}

fn toy_csv() -> String {
    let mut text = String::from("w,y,x1\n");
    for (v, n) in [(1, 30), (2, 80), (3, 20), (5, 40), (8, 30)] {
        for i in 0..n {
            text.push_str(&format!("{},{v},{v}\n", i % 2));
        }
    }
    text
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout(o)).expect("analyze prints json")
}

#[test]
fn analyze_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", &experiment_csv());
    let args = [
        "analyze",
        "--data",
        s(&data),
        "--method",
        "opj",
        "--estimand",
        "difference",
        "--seed",
        "7",
    ];
    let a = opj(&args);
    let b = opj(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let report = json(&a);
    assert_eq!(report["method"], "opj");
    assert_eq!(report["config_echo"]["seed"], 7);
    let point = report["point"].as_f64().unwrap();
    assert!((point - 0.5).abs() < 0.3, "point {point}");
    assert!(
        report["ci_low"].as_f64().unwrap() < point && point < report["ci_high"].as_f64().unwrap()
    );
}

#[test]
fn invalid_treatment_row_exits_2_citing_the_row() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "bad.csv", "w,y,x1\n0,1.0,0.5\n1,2.0,0.1\n2,3.0,0.2\n");
    let o = opj(&["analyze", "--data", s(&data)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.starts_with("error:invalid_treatment_indicator:"),
        "{err}"
    );
    assert!(err.contains("row 4"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn base_on_constant_outcome_is_zero() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("w,y,x1\n");
    for i in 0..40 {
        text.push_str(&format!("{},3.5,{}\n", i % 2, i));
    }
    let data = write(&dir, "c.csv", &text);
    let o = opj(&["analyze", "--data", s(&data), "--method", "base"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&o);
    assert_eq!(report["point"].as_f64(), Some(0.0));
    assert_eq!(report["se"].as_f64(), Some(0.0));
}

#[test]
fn trace_lists_every_iteration() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", &experiment_csv());
    let trace = dir.path().join("trace.csv");
    let o = opj(&[
        "analyze",
        "--data",
        s(&data),
        "--iterations",
        "12",
        "--trace-out",
        s(&trace),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&trace).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "m,deleted,estimate,strata,merges,degenerate");
    assert_eq!(lines.len(), 13);
    assert_eq!(lines[1].split(',').nth(1).unwrap().split(' ').count(), 4);
}

#[test]
fn seed_precedence_flag_over_file_over_env() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", &experiment_csv());
    let cfg = write(&dir, "c.toml", "seed = 11\niterations = 10\n");
    let seed_of = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_opj"));
        cmd.args(["analyze", "--data", s(&data)])
            .args(extra)
            .env_remove("OPJ_SEED");
        if let Some(v) = env {
            cmd.env("OPJ_SEED", v);
        }
        let o = cmd.output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        let r = json(&o);
        (
            r["config_echo"]["seed"].as_u64().unwrap(),
            r["config_echo"]["M"].as_u64().unwrap(),
        )
    };
    assert_eq!(seed_of(&[], None), (0, 60));
    assert_eq!(seed_of(&[], Some("5")), (5, 60));
    assert_eq!(seed_of(&["--config", s(&cfg)], Some("5")), (11, 10));
    assert_eq!(
        seed_of(
            &["--config", s(&cfg), "--seed", "3", "--iterations", "8"],
            Some("5")
        ),
        (3, 8)
    );
}

#[test]
fn bad_config_and_usage_exit_2() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", &experiment_csv());
    let cfg = write(&dir, "c.toml", "bukets = 3\n");
    let o = opj(&["analyze", "--data", s(&data), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:usage:"));
    let o = opj(&["analyze", "--data", s(&data), "--deleted", "20"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:invalid_config:"));
    let o = opj(&["analyze"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:usage:"));
}

#[test]
fn rank_deficient_design_exits_3() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("w,y,x1,x2\n");
    for i in 0..60 {
        text.push_str(&format!("{},{},{},{}\n", i % 2, i as f64 * 0.1, i, 2 * i));
    }
    let data = write(&dir, "r.csv", &text);
    let o = opj(&["analyze", "--data", s(&data), "--method", "opj"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(
        stderr(&o).starts_with("error:rank_deficient:"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn strata_reproduces_toy_split() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "toy.csv", &toy_csv());
    let density = dir.path().join("density.csv");
    let o = opj(&[
        "strata",
        "--data",
        s(&data),
        "--psf",
        "y",
        "--rule",
        "root-cum",
        "--k",
        "5",
        "--density-out",
        s(&density),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let counts: Vec<&str> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap())
        .collect();
    assert_eq!(counts, ["30", "80", "20", "40", "30"]);
    let grid = std::fs::read_to_string(&density).unwrap();
    assert_eq!(grid.lines().next(), Some("grid,density"));
    assert_eq!(grid.lines().count(), 513);
}

#[test]
fn quantile_with_one_stratum_has_no_interior_cuts() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", &experiment_csv());
    let o = opj(&[
        "strata",
        "--data",
        s(&data),
        "--rule",
        "quantile",
        "--k",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        stdout(&o),
        "stratum,lower,upper,n,n0,n1\n1,-inf,inf,160,80,80\n"
    );
}

#[test]
fn class_rule_rejects_continuous_column() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("w,y,x1\n");
    for i in 0..200 {
        text.push_str(&format!("{},{},{}\n", i % 2, i, i as f64 * 0.37));
    }
    let data = write(&dir, "d.csv", &text);
    let o = opj(&[
        "strata",
        "--data",
        s(&data),
        "--rule",
        "class",
        "--psf",
        "x1",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error:too_many_classes:"));
}

#[test]
fn simulate_is_reproducible_and_well_formed() {
    let dir = TempDir::new().unwrap();
    let errors = dir.path().join("errors.csv");
    let args = [
        "simulate",
        "--scenario",
        "lin-lin",
        "--reps",
        "4",
        "--n0",
        "150",
        "--n1",
        "150",
        "--seed",
        "9",
        "--errors-out",
        s(&errors),
    ];
    let a = opj(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    let first_errors = std::fs::read(&errors).unwrap();
    let b = opj(&[&args[..], &["--threads", "2"]].concat());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(first_errors, std::fs::read(&errors).unwrap());

    let out = stdout(&a);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(
        lines[0],
        "scenario,estimand,method,mean_bias,mean_se,rmse,coverage,reps,seed"
    );
    let methods: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(2).unwrap())
        .collect();
    assert_eq!(methods, ["base", "impute", "opj"]);
    assert!(lines[1].ends_with(",4,9"));
    assert_eq!(
        std::fs::read_to_string(&errors).unwrap().lines().count(),
        1 + 3 * 4
    );
}

#[test]
fn simulate_naive_factor_rows() {
    let o = opj(&[
        "simulate",
        "--scenario",
        "naive-psf",
        "--reps",
        "2",
        "--n0",
        "150",
        "--n1",
        "150",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let methods: Vec<String> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().to_string())
        .collect();
    assert_eq!(methods, ["yhat0", "x1", "x2", "x3"]);
}

#[test]
fn simulate_rejects_unknown_scenario_and_ratio_without_effect() {
    let o = opj(&["simulate", "--scenario", "cubic", "--reps", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:illegal_scenario:"));
    let o = opj(&[
        "simulate",
        "--scenario",
        "independent",
        "--estimand",
        "ratio",
        "--reps",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(2));
}
