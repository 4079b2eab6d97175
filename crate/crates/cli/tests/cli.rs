use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lqr-influence"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn small_config(dir: &Path, extra: Value) -> String {
    let mut cfg = json!({
        "system": { "kind": "dc_motor" },
        "generation": { "n_trajectories": 10 },
        "seeds": [1, 2],
        "heldout_size": 200
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path.to_str().unwrap().to_owned()
}

/// `x⁺ = 2x + small deterministic wobble`, with input only where `driven`.
fn scalar_like_dataset(driven: &[bool]) -> Value {
    let trajs: Vec<Value> = driven
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let mut x = [1.0 + i as f64, -0.5];
            (0..8)
                .map(|s| {
                    let u = if d {
                        ((s * 7 + i) % 5) as f64 - 2.0
                    } else {
                        0.0
                    };
                    let wobble = 1e-3 * (((s * 13 + i * 3) % 7) as f64 - 3.0);
                    let next = [2.0 * x[0] + u + wobble, 0.5 * x[1] + x[0] * 0.1 - wobble];
                    let t = json!({ "x": x, "u": [u], "x_next": next });
                    x = [next[0].clamp(-5.0, 5.0), next[1]];
                    t
                })
                .collect()
        })
        .collect();
    json!({ "n_x": 2, "n_u": 1, "trajectories": trajs })
}

#[test]
fn run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), json!({}));
    let out = dir.path().join("out");
    let o = run(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for f in [
        "report.json",
        "scores_seed1.csv",
        "scores_seed2.csv",
        "scatter.csv",
        "diagnostics.csv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seeds"].as_array().unwrap().len(), 2);
    let rho = report["aggregate"]["spearman_stoch"]["mean"]
        .as_f64()
        .unwrap();
    assert!((-1.0..=1.0).contains(&rho));
    assert!(report["timings"]["speedup"]["mean"].as_f64().unwrap() > 0.0);
    let scatter = fs::read_to_string(out.join("scatter.csv")).unwrap();
    assert!(scatter.starts_with("seed,k,if_stoch,if_fixed,delta_j_exact\n"));
    assert_eq!(scatter.lines().count(), 21);
    let scores = fs::read_to_string(out.join("scores_seed1.csv")).unwrap();
    assert_eq!(scores.lines().count(), 11);
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), json!({}));
    let out = dir.path().join("out");
    let o = run(&[
        "run",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--no-exact",
        "--seeds",
        "7,8,9",
        "--solver",
        "cg",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seeds"], json!([7, 8, 9]));
    assert_eq!(report["config"]["solver"], "cg");
    assert_eq!(report["config"]["run_exact_loto"], false);
    assert!(report["seeds"][0]["metrics"].is_null());
    assert!(out.join("scores_seed9.csv").is_file());
    let scatter = fs::read_to_string(out.join("scatter.csv")).unwrap();
    assert!(scatter.lines().nth(1).unwrap().ends_with(','));
}

#[test]
fn repeated_runs_give_identical_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), json!({}));
    let read = |name: &str| {
        let out = dir.path().join(name);
        assert_eq!(
            run(&["run", &cfg, "--out", out.to_str().unwrap()])
                .status
                .code(),
            Some(0)
        );
        ["scatter.csv", "diagnostics.csv", "scores_seed2.csv"]
            .map(|f| fs::read(out.join(f)).unwrap())
    };
    assert_eq!(read("a"), read("b"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(&["run", "/nonexistent/config.json"]).status.code(),
        Some(1)
    );
    let bad = small_config(dir.path(), json!({ "seeds": [] }));
    assert_eq!(run(&["run", &bad]).status.code(), Some(1));
    let unknown = small_config(dir.path(), json!({ "lamda": 0.1 }));
    let o = run(&["run", &unknown]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lamda"));
    let too_many = small_config(dir.path(), json!({ "top_k": 11 }));
    assert_eq!(run(&["run", &too_many]).status.code(), Some(1));
    assert_eq!(run(&["run"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn unstabilizable_data_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("data.json"),
        scalar_like_dataset(&[false, false, false]).to_string(),
    )
    .unwrap();
    let cfg = small_config(dir.path(), json!({ "dataset": "data.json", "top_k": 2 }));
    let o = run(&[
        "run",
        &cfg,
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn excluded_trajectories_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("cfg")).unwrap();
    // the dataset path resolves against the config's directory
    fs::write(
        dir.path().join("cfg/data.json"),
        scalar_like_dataset(&[true, false, false]).to_string(),
    )
    .unwrap();
    let cfg = small_config(
        &dir.path().join("cfg"),
        json!({ "dataset": "data.json", "top_k": 2 }),
    );
    let out = dir.path().join("out");
    let o = run(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let seed = &report["seeds"][0];
    assert_eq!(seed["excluded"], json!([0]));
    assert_eq!(
        seed["scored_count"].as_u64().unwrap() + seed["excluded"].as_array().unwrap().len() as u64,
        seed["n_trajectories"].as_u64().unwrap()
    );
    let scores = fs::read_to_string(out.join("scores_seed1.csv")).unwrap();
    assert!(scores.lines().nth(1).unwrap().ends_with(",1"));
}

#[test]
fn generated_dataset_feeds_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("msd.json");
    let o = run(&[
        "generate",
        "msd",
        "--seed",
        "4",
        "--trajectories",
        "6",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let parsed: Value = serde_json::from_str(&fs::read_to_string(&data).unwrap()).unwrap();
    assert_eq!(parsed["trajectories"].as_array().unwrap().len(), 6);
    let cfg = small_config(
        dir.path(),
        json!({ "system": { "kind": "msd" }, "dataset": data.to_str().unwrap(), "top_k": 3 }),
    );
    let out = dir.path().join("out");
    assert_eq!(
        run(&["run", &cfg, "--out", out.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    assert!(out.join("scores_seed1.csv").is_file());
    // dimension mismatch between the dataset and the declared system
    let wrong = small_config(
        dir.path(),
        json!({ "dataset": data.to_str().unwrap(), "top_k": 3 }),
    );
    assert_eq!(run(&["run", &wrong]).status.code(), Some(1));
    assert_eq!(
        run(&["generate", "quadrotor", "--out", "x.json"])
            .status
            .code(),
        Some(1)
    );
}
