use rockrelax::extreal::ExtReal;
use rockrelax::instances::catalog::MeanMode;
use rockrelax::instances::{build_example, build_example_with, build_from_config, realize, InstanceConfig};
use rockrelax::rockafellian::RockafellianSpec;
use rockrelax::solver::{brute_force_oracle, GridBox, OracleConfig};
use rockrelax::Error;

fn argmin(program: &rockrelax::StochasticProgram, grid: GridBox) -> Vec<Vec<f64>> {
    brute_force_oracle(program, &RockafellianSpec::ExactIndicator, &OracleConfig::on_box(grid))
        .unwrap()
        .argmin(0.0)
        .unwrap()
        .points
        .clone()
}

#[test]
fn ex21_argmins_at_fine_grid() {
    let ex = build_example("ex21", 50).unwrap();
    let grid = GridBox::cube(1, 0.0, 1.0, 1e-3).unwrap();
    assert_eq!(argmin(&ex.actual, grid.clone()), vec![vec![1.0]]);
    assert_eq!(argmin(&ex.perturbed, grid), vec![vec![0.0]]);
    // g(ξ, x) = ξx + ½(1 − x)
    let values = ex.perturbed.scenario_values(&[0.4]);
    assert_eq!(values[0], ExtReal::Finite(0.3));
    assert!((values[1].to_f64() - (50.0 * 0.4 + 0.3)).abs() < 1e-12);
}

#[test]
fn ex22_actual_argmin_is_a_segment() {
    let ex = build_example("ex22", 100).unwrap();
    let grid = GridBox::cube(2, -1.0, 1.0, 1e-2).unwrap();
    let pts = argmin(&ex.actual, grid);
    assert!(pts.iter().all(|p| (p[0] - 0.5).abs() < 1e-12 && p[1].abs() <= 0.5 + 1e-12));
    assert_eq!(pts.len(), 101);
    assert_eq!(ex.actual.objective(&[0.5, 0.0]), ExtReal::Finite(0.75));
}

#[test]
fn ex22_frozen_mean_is_available() {
    let ex = build_example_with("ex22", 100, MeanMode::Frozen).unwrap();
    let grid = GridBox::cube(2, -1.0, 1.0, 1e-2).unwrap();
    let pts = argmin(&ex.actual, grid);
    assert!(pts.iter().all(|p| (p[0] - 0.5).abs() < 1e-12));
}

#[test]
fn ex23_values() {
    let ex = build_example("ex23", 100).unwrap();
    assert_eq!(ex.actual.objective(&[0.0]), ExtReal::Finite(0.75));
    assert_eq!(ex.perturbed.objective(&[0.0]), ExtReal::Finite(1.25));
    assert_eq!(ex.perturbed.objective(&[1.0]), ExtReal::Finite(1.0));
    assert_eq!(ex.actual.objective(&[1.5]), ExtReal::PosInf);
    match &ex.spec {
        RockafellianSpec::SupportPerturbation { lambda, xi_nu, .. } => {
            assert!((lambda - 100f64.powf(4.0 / 3.0)).abs() < 1e-6);
            assert_eq!(xi_nu, &vec![vec![0.01], vec![1.0]]);
        }
        other => panic!("unexpected default spec {}", other.name()),
    }
}

#[test]
fn rebuilding_is_deterministic() {
    for name in ["ex21", "ex22", "ex23"] {
        let a = build_example(name, 37).unwrap();
        let b = build_example(name, 37).unwrap();
        for x in [[0.1, -0.3], [0.5, 0.2], [0.9, 0.9]] {
            let x = &x[..a.actual.n()];
            assert_eq!(a.actual.objective(x), b.actual.objective(x));
            assert_eq!(a.perturbed.objective(x), b.perturbed.objective(x));
        }
        assert_eq!(a.spec.p_nu(), b.spec.p_nu());
        assert_eq!(a.spec.theta(), b.spec.theta());
    }
}

#[test]
fn unknown_names_and_small_nu_are_rejected() {
    assert!(matches!(build_example("ex24", 10), Err(Error::UnknownInstance(_))));
    assert!(matches!(build_example("ex21", 1), Err(Error::InvalidParameter(_))));
}

const MINIMAL: &str = r#"{
  "name": "minimal",
  "n": 1,
  "s": 1,
  "scenarios": [{"tag": "linear", "params": {"coef": [2.0], "constant": 1.0}}],
  "p": [1.0],
  "box": {"lower": [0.0], "upper": [1.0]},
  "perturbation": {"kind": "none"}
}"#;

#[test]
fn minimal_config_builds() {
    let config = InstanceConfig::from_json(MINIMAL).unwrap();
    let def = build_from_config(&config).unwrap();
    assert_eq!(def.actual.objective(&[0.5]), ExtReal::Finite(2.0));
    let ex = realize(&def, 10, 0).unwrap();
    assert_eq!(ex.lower, vec![0.0]);
}

fn config_error(text: &str) -> Error {
    match InstanceConfig::from_json(text) {
        Ok(c) => build_from_config(&c).unwrap_err(),
        Err(e) => e,
    }
}

#[test]
fn simplex_violation_is_rejected() {
    let text = r#"{
      "name": "bad-p", "n": 1, "s": 2,
      "scenarios": [{"tag": "linear", "params": {"coef": [1.0]}},
                    {"tag": "linear", "params": {"coef": [-1.0]}}],
      "p": [0.6, 0.6],
      "box": {"lower": [0.0], "upper": [1.0]},
      "perturbation": {"kind": "none"}
    }"#;
    match config_error(text) {
        Error::Config { field, .. } => assert_eq!(field, "p"),
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn heaviside_with_gradient_method_is_rejected() {
    let text = r#"{
      "name": "step", "n": 1, "s": 1,
      "scenarios": [{"tag": "heaviside-composite", "params": {"coef": [1.0], "offset": -0.5}}],
      "p": [1.0],
      "box": {"lower": [0.0], "upper": [1.0]},
      "perturbation": {"kind": "none"},
      "x_method": "projected-gradient"
    }"#;
    match config_error(text) {
        Error::Config { field, message } => {
            assert_eq!(field, "x_method");
            assert!(message.contains("heaviside-composite"), "{message}");
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn missing_parameters_are_reported_by_field() {
    let text = MINIMAL.replace(r#""coef": [2.0], "constant": 1.0"#, r#""constant": 1.0"#);
    match config_error(&text) {
        Error::Config { field, message } => {
            assert_eq!(field, "scenarios[0].params");
            assert!(message.contains("coef"), "{message}");
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn syntax_errors_carry_a_line() {
    let text = MINIMAL.replace(r#""s": 1,"#, r#""s": 1,,"#);
    let err = config_error(&text);
    assert!(matches!(err, Error::Json(_)));
    assert!(err.to_string().contains("line 4"), "{err}");
}

#[test]
fn support_shift_config_realizes_support_variant() {
    let text = r#"{
      "name": "shift", "n": 1, "s": 2,
      "support": {"points": [[0.0], [1.0]],
                  "generator": {"tag": "heaviside-affine", "params": {"coef": [1.0]}}},
      "f0": {"tag": "quadratic", "params": {"scale": 0.5, "center": [1.0]}},
      "p": [0.5, 0.5],
      "box": {"lower": [0.0], "upper": [1.0]},
      "perturbation": {"kind": "support-shift", "params": {"scenario": 0, "direction": [1.0]}}
    }"#;
    let def = build_from_config(&InstanceConfig::from_json(text).unwrap()).unwrap();
    let ex = realize(&def, 100, 0).unwrap();
    match ex.spec {
        RockafellianSpec::SupportPerturbation { xi_nu, lambda, .. } => {
            assert_eq!(xi_nu[0], vec![0.01]);
            assert!((lambda - 100f64.powf(4.0 / 3.0)).abs() < 1e-6);
        }
        other => panic!("unexpected spec {}", other.name()),
    }
}

#[test]
fn empirical_perturbation_is_seeded() {
    let text = MINIMAL
        .replace(r#""s": 1"#, r#""s": 2"#)
        .replace(
            r#"[{"tag": "linear", "params": {"coef": [2.0], "constant": 1.0}}]"#,
            r#"[{"tag": "linear", "params": {"coef": [2.0]}}, {"tag": "linear", "params": {"coef": [-1.0]}}]"#,
        )
        .replace(r#""p": [1.0]"#, r#""p": [0.3, 0.7]"#)
        .replace(r#"{"kind": "none"}"#, r#"{"kind": "empirical"}"#);
    let def = build_from_config(&InstanceConfig::from_json(&text).unwrap()).unwrap();
    let a = realize(&def, 1000, 5).unwrap();
    let b = realize(&def, 1000, 5).unwrap();
    assert_eq!(a.spec.p_nu(), b.spec.p_nu());
    let q = a.spec.p_nu().unwrap().as_slice();
    assert!((q[0] * 1000.0).fract().abs() < 1e-9);
}
