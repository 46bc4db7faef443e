//! End-to-end command tests: exit-code contract, artifact schemas,
//! byte-level reproducibility of reruns, and seed determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ceteb")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ceteb-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn model_file(dir: &Path, v_lf: &str) -> PathBuf {
    let path = dir.join("model.json");
    std::fs::write(
        &path,
        format!(
            r#"{{"model":"chauffeur","v_hf":1.0,"omega_max":6.283185307179586,"v_lf":{v_lf}}}"#
        ),
    )
    .unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

#[test]
fn missing_alpha_is_a_config_error_naming_the_field() {
    let dir = tmp("noalpha");
    let model = model_file(&dir, "0.10");
    let out = run(&["solve-theta", "--model", model.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("alpha"), "stderr: {err}");
}

#[test]
fn infeasible_margin_exits_two() {
    let dir = tmp("tiny");
    let model = model_file(&dir, "0.10");
    let out = run(&[
        "solve-theta",
        "--model",
        model.to_str().unwrap(),
        "--alpha",
        "1e-9",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn model_invariant_violation_exits_one() {
    let dir = tmp("fast");
    let model = model_file(&dir, "0.10");
    let out = run(&[
        "solve-alpha",
        "--model",
        model.to_str().unwrap(),
        "--v-lf",
        "1.5",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn unknown_model_keys_are_rejected() {
    let dir = tmp("unknown");
    let path = dir.join("model.json");
    std::fs::write(&path, r#"{"model":"chauffeur","v_hf":1.0,"omega_max":6.2832,"speed":3}"#)
        .unwrap();
    let out = run(&["solve-theta", "--model", path.to_str().unwrap(), "--alpha", "0.25"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn solve_theta_artifacts_and_bitwise_rerun() {
    let dir = tmp("solve");
    let model = model_file(&dir, "0.10");
    let out_dir = dir.join("run");
    let out = run(&[
        "solve-theta",
        "--model",
        model.to_str().unwrap(),
        "--alpha",
        "0.25",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    let theta = report["report"]["solved_value"].as_f64().unwrap();
    assert!((0.095..=0.105).contains(&theta), "theta {theta}");
    assert_eq!(report["beta"].as_f64().unwrap(), 0.25);

    let teb_csv = std::fs::read_to_string(out_dir.join("teb.csv")).unwrap();
    assert!(teb_csv.starts_with("component,x1,x2\n"));
    assert!(teb_csv.contains("\nbarrier_left,") && teb_csv.contains("\nbarrier_right,"));
    assert!(teb_csv.contains("nup,"));

    let svg = std::fs::read_to_string(out_dir.join("teb.svg")).unwrap();
    for group in [
        "captivity-boundary",
        "nup",
        "barrier",
        "bnup-markers",
        "junction-marker",
        "switch-markers",
    ] {
        assert!(svg.contains(&format!("id=\"{group}\"")), "missing svg group {group}");
    }

    // rerun from the emitted config reproduces the numeric artifacts
    let rerun_dir = dir.join("rerun");
    let out2 = run(&[
        "rerun",
        out_dir.join("resolved_config.json").to_str().unwrap(),
        "--out",
        rerun_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out2), 0, "stderr: {}", String::from_utf8_lossy(&out2.stderr));
    for name in ["report.json", "teb.csv", "surface_left.csv", "surface_right.csv"] {
        let a = std::fs::read(out_dir.join(name)).unwrap();
        let b = std::fs::read(rerun_dir.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between run and rerun");
    }
}

#[test]
fn solve_alpha_static_planner_is_degenerate_success() {
    let dir = tmp("degenerate");
    let model = model_file(&dir, "0.10");
    let out_dir = dir.join("run");
    let out = run(&[
        "solve-alpha",
        "--model",
        model.to_str().unwrap(),
        "--v-lf",
        "0",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["report"]["degenerate"].as_bool(), Some(true));
    let alpha = report["report"]["solved_value"].as_f64().unwrap();
    assert!((alpha - 4.0 / (3.0 * 6.283185307179586)).abs() < 1e-4, "alpha {alpha}");
}

#[test]
fn sweep_range_validation_and_exit_codes() {
    let dir = tmp("sweep");
    let model = model_file(&dir, "0.10");
    // malformed/empty range: config error
    let out = run(&[
        "sweep",
        "--model",
        model.to_str().unwrap(),
        "--beta-range",
        "0.3:0.2:0",
        "--out",
        dir.join("s0").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);

    // all margins below the feasible minimum: solver failure
    let out = run(&[
        "sweep",
        "--model",
        model.to_str().unwrap(),
        "--beta-range",
        "0.15:0.18:2",
        "--out",
        dir.join("s1").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    let csv = std::fs::read_to_string(dir.join("s1/sweep.csv")).unwrap();
    assert!(csv.contains("infeasible"));

    // mixed range: success with one infeasible row
    let out = run(&[
        "sweep",
        "--model",
        model.to_str().unwrap(),
        "--beta-range",
        "0.20:0.25:2",
        "--out",
        dir.join("s2").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("s2/sweep.csv")).unwrap();
    assert!(csv.starts_with("beta,theta,junction_x1,junction_x2,residual,valid18,valid20,valid21,status\n"));
    assert!(csv.contains("infeasible") && csv.contains("ok"));
}

#[test]
fn simulate_seed_determinism_and_escape_exit() {
    let dir = tmp("sim");
    let model = model_file(&dir, "0.10");
    let solve_dir = dir.join("solve");
    let out = run(&[
        "solve-theta",
        "--model",
        model.to_str().unwrap(),
        "--alpha",
        "0.25",
        "--out",
        solve_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);

    let sim = |out_dir: &Path, seed: &str| {
        run(&[
            "simulate",
            "--model",
            model.to_str().unwrap(),
            "--report",
            solve_dir.to_str().unwrap(),
            "--runs",
            "6",
            "--seed",
            seed,
            "--horizon",
            "2.0",
            "--emit-trajectories",
            "1",
            "--out",
            out_dir.to_str().unwrap(),
        ])
    };
    let a_dir = dir.join("a");
    let b_dir = dir.join("b");
    assert_eq!(code(&sim(&a_dir, "42")), 0);
    assert_eq!(code(&sim(&b_dir, "42")), 0);
    let a = std::fs::read(a_dir.join("summary.json")).unwrap();
    let b = std::fs::read(b_dir.join("summary.json")).unwrap();
    assert_eq!(a, b, "summary.json must be byte-identical for equal seeds");
    assert_eq!(
        std::fs::read(a_dir.join("run_000.csv")).unwrap(),
        std::fs::read(b_dir.join("run_000.csv")).unwrap()
    );
    let overlay = std::fs::read_to_string(a_dir.join("overlay.svg")).unwrap();
    assert!(overlay.contains("id=\"trajectories\""));

    // start in the escape zone: the run escapes and the exit code says so
    let out = run(&[
        "simulate",
        "--model",
        model.to_str().unwrap(),
        "--report",
        solve_dir.to_str().unwrap(),
        "--x0",
        "0.0,-0.2",
        "--policy",
        "optimal-escape",
        "--horizon",
        "20.0",
        "--out",
        dir.join("esc").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4);

    // summary schema: exactly the four documented keys
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a_dir.join("summary.json")).unwrap())
            .unwrap();
    let obj = summary.as_object().unwrap();
    let mut keys: Vec<&str> = obj.keys().map(|s| s.as_str()).collect();
    keys.sort_unstable();
    assert_eq!(keys, vec!["escapes", "runs", "seed", "worst_max_norm"]);
}
