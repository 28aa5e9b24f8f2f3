use std::fs;
use std::process::Command;

use rockrelax::cli::{
    csv_text, emit_report, execute, run, ExperimentPlan, Format, Row, RunStatus, Schedule, CSV_HEADER,
};
use rockrelax::extreal::ExtReal;

fn builtin(name: &str, out: &std::path::Path) -> ExperimentPlan {
    let mut plan = ExperimentPlan::from_reference(&format!("builtin:{name}")).unwrap();
    plan.out = out.to_path_buf();
    plan
}

#[test]
fn ex21_naive_sticks_at_zero_and_relaxation_reaches_one() {
    let dir = tempfile::tempdir().unwrap();
    let report = execute(&builtin("ex21", dir.path())).unwrap();
    assert_eq!(report.rows.len(), 6);
    for pair in report.rows.chunks(2) {
        assert_eq!(pair[0].formulation, "naive");
        assert_eq!(pair[0].x, vec![0.0]);
        assert_eq!(pair[1].formulation, "rockafellian");
        assert_eq!(pair[1].x, vec![1.0]);
        assert_eq!(pair[1].objective, ExtReal::Finite(0.0));
    }
}

#[test]
fn ex23_relaxed_objective_is_three_quarters() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = builtin("ex23", dir.path());
    plan.nus = vec![100];
    let report = execute(&plan).unwrap();
    let relaxed = &report.rows[1];
    assert_eq!(relaxed.formulation, "rockafellian");
    assert!((relaxed.objective.to_f64() - 0.75).abs() < 1e-12);
}

#[test]
fn empty_nu_list_exits_one_without_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut plan = builtin("ex21", &out);
    plan.nus.clear();
    assert_eq!(run(&plan), RunStatus::ConfigError);
    assert!(!out.exists());
}

#[test]
fn descending_nus_and_bad_schedules_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = builtin("ex21", dir.path());
    plan.nus = vec![100, 10];
    assert!(plan.validate().is_err());
    plan.nus = vec![10, 100];
    plan.schedule = Schedule::Fixed { thetas: vec![1.0] };
    assert!(plan.validate().is_err());
}

#[test]
fn csv_has_header_and_one_line_per_row() {
    let row = Row {
        nu: 10,
        formulation: "naive".into(),
        x: vec![0.25, -0.75],
        u_norm: 0.0,
        objective: ExtReal::PosInf,
        eta_nu: None,
        residual: Some(ExtReal::Finite(1e-13)),
        oracle_gap: Some(0.0),
        wall_ms: 1.5,
        seed: 3,
    };
    let text = csv_text(&[row]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, vec![CSV_HEADER, "10,naive,0.25;-0.75,0.0,inf,,1e-13,0.0,1.5,3"]);
    assert!(!text.contains('\r'));
}

#[test]
fn json_round_trip_is_bit_exact_and_plotdata_is_per_series() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = builtin("ex21", dir.path());
    plan.oracle = true;
    let report = execute(&plan).unwrap();
    let files = emit_report(&report, dir.path(), &[Format::Json, Format::Plotdata]).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ex21.json")).unwrap()).unwrap();
    let rows: Vec<Row> = serde_json::from_value(json["rows"].clone()).unwrap();
    assert_eq!(rows, report.rows);
    for (a, b) in rows.iter().zip(&report.rows) {
        assert_eq!(a.u_norm.to_bits(), b.u_norm.to_bits());
        assert_eq!(a.wall_ms.to_bits(), b.wall_ms.to_bits());
    }
    assert_eq!(json["plan"]["instance"], "builtin:ex21");
    assert!(json["generator"]["rng"].as_str().unwrap().contains("ChaCha8"));
    let x_series = dir.path().join("ex21.rockafellian-x1.dat");
    assert!(files.contains(&x_series));
    let body = fs::read_to_string(x_series).unwrap();
    let data: Vec<&str> = body.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data, vec!["10 1.0", "100 1.0", "1000 1.0"]);
    // the oracle confirms both formulations on the grid
    assert!(report.rows.iter().all(|r| r.oracle_gap.unwrap() <= 1e-6));
    assert!(report.failures.is_empty());
}

#[test]
fn rate_rows_are_recorded_with_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = builtin("ex21", dir.path());
    plan.oracle = true;
    let report = execute(&plan).unwrap();
    assert_eq!(report.rate_rows.len(), 3);
    assert!(!report.rate_rows[0].applicable);
    assert!(report.rate_rows[1..].iter().all(|r| r.passed == Some(true)));
}

#[test]
fn gradient_hint_on_step_generator_fails_at_load() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("stall.json");
    fs::write(
        &config,
        r#"{
          "name": "stall", "n": 1, "s": 2,
          "support": {"points": [[0.0], [1.0]],
                      "generator": {"tag": "heaviside-affine", "params": {"coef": [1.0]}}},
          "f0": {"tag": "quadratic", "params": {"scale": 0.5, "center": [1.0]}},
          "p": [0.5, 0.5],
          "box": {"lower": [0.0], "upper": [1.0]},
          "perturbation": {"kind": "support-shift", "params": {"scenario": 0, "direction": [1.0]}},
          "x_method": "projected-gradient"
        }"#,
    )
    .unwrap();
    let err = ExperimentPlan::from_reference(config.to_str().unwrap()).unwrap_err();
    assert!(err.to_string().contains("x_method"), "{err}");
    fs::write(dir.path().join("plan.json"), r#"{"instance": "stall.json"}"#).unwrap();
    let mut plan = ExperimentPlan::from_reference(dir.path().join("plan.json").to_str().unwrap()).unwrap();
    plan.out = dir.path().join("out");
    assert_eq!(run(&plan), RunStatus::ConfigError);
    assert!(!plan.out.exists());
}

fn run_binary(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rockrelax")).args(args).output().unwrap()
}

#[test]
fn binary_is_deterministic_up_to_wall_time() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut bodies = Vec::new();
    for d in &dirs {
        let out = run_binary(&["run", "--plan", "builtin:ex21", "--seed", "7", "--out", d.path().to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let text = fs::read_to_string(d.path().join("ex21.csv")).unwrap();
        let stripped: Vec<String> = text
            .lines()
            .map(|l| {
                let mut cols: Vec<&str> = l.split(',').collect();
                cols.remove(8);
                cols.join(",")
            })
            .collect();
        bodies.push(stripped);
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn binary_reports_config_errors_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("plan.json");
    fs::write(&bad, r#"{"instance": "builtin:ex21", "nus": []}"#).unwrap();
    let out = run_binary(&["run", "--plan", bad.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("o").exists());
    let out = run_binary(&["run", "--plan", "builtin:nope", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn plan_files_resolve_relative_instance_paths() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("inst.json"),
        r#"{
          "name": "pair", "n": 1, "s": 2,
          "f0": {"tag": "indicator-box", "params": {"lower": [0.0], "upper": [1.0]}},
          "scenarios": [{"tag": "linear", "params": {"coef": [1.0]}},
                        {"tag": "linear", "params": {"coef": [-1.0], "constant": 1.0}}],
          "p": [0.5, 0.5],
          "box": {"lower": [0.0], "upper": [1.0]},
          "perturbation": {"kind": "shift-mass", "params": {"from": 0, "to": 1}},
          "grid_step": 0.01
        }"#,
    )
    .unwrap();
    fs::write(
        dir.path().join("sweep.json"),
        r#"{"instance": "inst.json", "nus": [10, 100], "oracle": true, "variant": {"kind": "quadratic"}}"#,
    )
    .unwrap();
    let mut plan = ExperimentPlan::from_reference(dir.path().join("sweep.json").to_str().unwrap()).unwrap();
    plan.out = dir.path().join("out");
    plan.formats = vec![Format::Csv];
    assert_eq!(plan.name, "sweep");
    assert_eq!(run(&plan), RunStatus::Success);
    let csv = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}
