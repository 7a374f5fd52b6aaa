use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const EXE: &str = env!("CARGO_BIN_EXE_dp-estim");

fn run(args: &[&str]) -> Output {
    Command::new(EXE).args(args).env_remove("DP_ESTIM_SEED").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn mean_csv(dir: &Path) -> PathBuf {
    let rows: Vec<String> = (0..50)
        .map(|i| format!("{},{},{}", (i % 7) as f64 * 0.5, -(i as f64) / 10.0, 1.25))
        .collect();
    write(dir, "mean.csv", &(rows.join("\n") + "\n"))
}

fn regression_csv(dir: &Path, d: usize) -> PathBuf {
    let rows: Vec<String> = (0..40)
        .map(|i| {
            let mut r: Vec<String> = (0..d).map(|j| format!("{}", ((i * 7 + j * 3) % 11) as f64 / 40.0 - 0.12)).collect();
            r.push(format!("{}", (i as f64 / 5.0).sin()));
            r.join(",")
        })
        .collect();
    write(dir, &format!("reg{d}.csv"), &(rows.join("\n") + "\n"))
}

#[test]
fn estimate_mean_writes_vector_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let input = mean_csv(dir.path());
    let out = dir.path().join("est.csv");
    let args = |o: &Path| {
        vec![
            "estimate".to_string(),
            "mean".into(),
            "--in".into(),
            input.display().to_string(),
            "--eps".into(),
            "0.5".into(),
            "--delta".into(),
            "1e-5".into(),
            "--r".into(),
            "3.0".into(),
            "--seed".into(),
            "7".into(),
            "--out".into(),
            o.display().to_string(),
        ]
    };
    let a: Vec<String> = args(&out);
    let o = run(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert_eq!(text.trim().split(',').count(), 3);
    let first = std::fs::read(&out).unwrap();
    let side: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("est.csv.json")).unwrap()).unwrap();
    assert_eq!(side["balanced"], Value::Bool(true));
    assert_eq!(side["budget"]["epsilon"].as_f64(), Some(0.5));
    assert_eq!(side["config"]["seed"].as_u64(), Some(7));

    let o = run(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(&out).unwrap(), first);
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let input = mean_csv(dir.path());
    let base = ["estimate", "sparse-mean", "--in", input.to_str().unwrap(), "--eps", "1", "--delta", "1e-5", "--r", "2", "--s", "2"];
    let mut with_flag = base.to_vec();
    with_flag.extend(["--seed", "99"]);
    let flagged = run(&with_flag);
    let env = Command::new(EXE).args(base).env("DP_ESTIM_SEED", "99").output().unwrap();
    assert_eq!(code(&flagged), 0, "{}", stderr(&flagged));
    assert_eq!(flagged.stdout, env.stdout);
    assert_eq!(code(&run(&base)), 2);
}

#[test]
fn estimate_regression_variants() {
    let dir = tempfile::tempdir().unwrap();
    let input = regression_csv(dir.path(), 5);
    let p = input.to_str().unwrap();
    let o = run(&["estimate", "regression", "--in", p, "--eps", "1", "--delta", "1e-4", "--seed", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim().split(',').count(), 5);
    let o = run(&[
        "estimate", "sparse-regression", "--in", p, "--eps", "1", "--delta", "1e-4", "--seed", "1", "--s", "2", "--t", "5",
        "--eta", "0.5", "--c", "2", "--b", "3", "--r", "1",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let nonzero = String::from_utf8_lossy(&o.stdout)
        .trim()
        .split(',')
        .filter(|v| v.parse::<f64>().unwrap() != 0.0)
        .count();
    assert!(nonzero <= 2);
}

#[test]
fn sparsity_above_dimension_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = regression_csv(dir.path(), 8);
    let o = run(&[
        "estimate", "sparse-regression", "--in", input.to_str().unwrap(), "--eps", "0.5", "--delta", "1e-5", "--seed", "3",
        "--s", "20", "--t", "30",
    ]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("1 <= s <= d = 8"), "{}", stderr(&o));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = mean_csv(dir.path());
    let p = input.to_str().unwrap();
    assert_eq!(code(&run(&["estimate", "mean", "--in", p, "--eps", "x"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["estimate", "mean", "--in", p, "--eps", "-1", "--delta", "1e-5", "--r", "1", "--seed", "1"])), 2);
    assert_eq!(code(&run(&["estimate", "mean", "--in", p, "--eps", "1", "--delta", "0", "--r", "1", "--seed", "1"])), 2);
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        code(&run(&["estimate", "mean", "--in", missing.to_str().unwrap(), "--eps", "1", "--delta", "1e-5", "--r", "1", "--seed", "1"])),
        1
    );
    let ragged = write(dir.path(), "ragged.csv", "1,2\n3\n");
    assert_eq!(
        code(&run(&["estimate", "mean", "--in", ragged.to_str().unwrap(), "--eps", "1", "--delta", "1e-5", "--r", "1", "--seed", "1"])),
        1
    );
    let text = write(dir.path(), "text.csv", "1,a\n");
    assert_eq!(
        code(&run(&["estimate", "mean", "--in", text.to_str().unwrap(), "--eps", "1", "--delta", "1e-5", "--r", "1", "--seed", "1"])),
        1
    );
}

#[test]
fn experiment_command() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "small.json",
        r#"{"problem":"sparse_mean","n_grid":[100,200],"d":{"rule":"two_n"},"s_star":3,"epsilon":0.5,"reps":3,"seed":4}"#,
    );
    let o = run(&["experiment", spec.to_str().unwrap(), "--dry-run"]);
    assert_eq!(code(&o), 0);
    let grid = String::from_utf8_lossy(&o.stdout).into_owned();
    assert!(grid.contains("400") && !dir.path().join("small_cells.csv").exists(), "{grid}");

    let mut outputs = Vec::new();
    for jobs in ["1", "3"] {
        let out_dir = dir.path().join(format!("out{jobs}"));
        let o = run(&["experiment", spec.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap(), "--jobs", jobs]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("log-log slope"));
        let csv = std::fs::read_to_string(out_dir.join("small_cells.csv")).unwrap();
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.starts_with("problem,n,d,s,epsilon,delta,rep,seed,err_private,err_nonprivate\n"));
        let summary: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("small_summary.json")).unwrap()).unwrap();
        assert!(summary["slopes"]["private"].is_number());
        outputs.push(csv);
    }
    assert_eq!(outputs[0], outputs[1]);

    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"problem":"sparse_mean","n_grid":[100],"d":{"rule":"n"},"epsilon":0.5,"reps":0,"seed":4}"#,
    );
    let o = run(&["experiment", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("reps") && stderr(&o).contains("s_star"), "{}", stderr(&o));
    let unknown = write(dir.path(), "unknown.json", r#"{"problem":"mean","colour":1}"#);
    assert_eq!(code(&run(&["experiment", unknown.to_str().unwrap()])), 2);
    assert_eq!(code(&run(&["experiment", dir.path().join("nope.json").to_str().unwrap()])), 1);
}

#[test]
fn audit_command() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "a.json",
        r#"{"config":{"generator":{"kind":"sign_cube"},"n":20,"d":500,"reps":30,"seed":1},"estimator":{"kind":"sample_mean"}}"#,
    );
    let report = dir.path().join("r.json");
    let o = run(&["audit", spec.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let line = String::from_utf8_lossy(&o.stdout).into_owned();
    let z: f64 = line.trim().trim_start_matches("z = ").parse().unwrap();
    assert!(z > 10.0);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["reps"].as_array().unwrap().len(), 30);
    assert_eq!(r["config"]["n"].as_u64(), Some(20));

    let constant = write(
        dir.path(),
        "c.json",
        r#"{"config":{"generator":{"kind":"sign_cube"},"n":20,"d":500,"reps":30,"seed":1},"estimator":{"kind":"constant","value":2.0}}"#,
    );
    let o = run(&["audit", constant.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["z"].as_f64().unwrap().abs() < 3.0);

    let malformed = write(dir.path(), "m.json", r#"{"config":{"n":3}"#);
    assert_eq!(code(&run(&["audit", malformed.to_str().unwrap()])), 2);
    let invalid = write(
        dir.path(),
        "i.json",
        r#"{"config":{"generator":{"kind":"sign_cube"},"n":0,"d":5,"reps":1,"seed":1},"estimator":{"kind":"sample_mean"}}"#,
    );
    assert_eq!(code(&run(&["audit", invalid.to_str().unwrap()])), 2);
}

#[test]
fn tune_commands() {
    let dir = tempfile::tempdir().unwrap();
    let input = mean_csv(dir.path());
    let p = input.to_str().unwrap();
    let o = run(&["tune", "quantile", "--in", p, "--eps", "1", "--seed", "1", "--q", "0.5", "--lo", "-10", "--hi", "10", "--noise-multiplier", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let q: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert!((-10.0..=10.0).contains(&q));

    let o = run(&["tune", "truncation", "--in", p, "--eps", "1", "--seed", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["lo"].as_f64().unwrap() < v["hi"].as_f64().unwrap());
    assert_eq!(v["balanced"], Value::Bool(true));

    let o = run(&[
        "tune", "cv-sparsity", "--in", p, "--eps", "1", "--delta", "1e-4", "--seed", "1", "--r", "5", "--grid-lo", "1",
        "--grid-hi", "3", "--folds", "2", "--clip-lo", "-50", "--clip-hi", "50",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((1..=3).contains(&v["s"].as_u64().unwrap()));

    let o = run(&["tune", "quantile", "--in", p, "--eps", "1", "--seed", "1", "--q", "1.5"]);
    assert_eq!(code(&o), 2);
}
