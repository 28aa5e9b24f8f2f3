//! Randomized invariants across modules.

use proptest::prelude::*;

use rockrelax::analysis::{epi_distance_estimate, eta_bound, RateCertificate};
use rockrelax::divergence::{phi_divergence, PhiFamily};
use rockrelax::extreal::{ext_combine, weighted_objective, CombineOp, ExtReal, ScenarioFunction, StochasticProgram};
use rockrelax::instances::catalog;
use rockrelax::regularizer::{regularizer_from_tilted_costs, smoothed_constraint};
use rockrelax::rockafellian::{eval_approx, PerturbationPoint, RockafellianSpec};
use rockrelax::simplex::{normal_cone_distance, project_to_simplex, sample_empirical, ProbVector};
use rockrelax::solver::{solve_joint, u_step, GridBox, SolveConfig, XMethod};

fn ext_value() -> impl Strategy<Value = ExtReal> {
    prop_oneof![
        Just(ExtReal::PosInf),
        Just(ExtReal::NegInf),
        Just(ExtReal::ZERO),
        (-1e3..1e3f64).prop_map(ExtReal::Finite),
    ]
}

fn vector(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    len.prop_flat_map(|s| prop::collection::vec(-3.0..3.0f64, s))
}

fn prob(s: usize) -> impl Strategy<Value = ProbVector> {
    prop::collection::vec(0.05..1.0f64, s).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        ProbVector::new(raw.iter().map(|v| v / total).collect()).unwrap()
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn affine_program(coefs: &[f64], consts: &[f64], p: ProbVector) -> StochasticProgram {
    let scen = coefs
        .iter()
        .zip(consts)
        .map(|(a, b)| catalog::linear(vec![*a], *b))
        .collect();
    StochasticProgram::new(1, ScenarioFunction::indicator_box(vec![-1.0], vec![1.0]), scen, p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ext_combine_is_total(a in ext_value(), b in ext_value()) {
        for op in [CombineOp::Add, CombineOp::Mul] {
            let v = ext_combine(op, a, b);
            prop_assert!(!v.to_f64().is_nan());
            prop_assert_eq!(v, ext_combine(op, b, a));
        }
    }

    #[test]
    fn weighted_objective_matches_dot_and_is_monotone(
        coefs in prop::collection::vec(-2.0..2.0f64, 3),
        consts in prop::collection::vec(-2.0..2.0f64, 3),
        p in prob(3),
        x in -1.0..1.0f64,
        bump in 0.0..1.0f64,
    ) {
        let program = affine_program(&coefs, &consts, p.clone());
        let v = weighted_objective(&program, p.as_slice(), &[x]).unwrap().to_f64();
        let dot: f64 = (0..3).map(|i| p.as_slice()[i] * (coefs[i] * x + consts[i])).sum();
        prop_assert!((v - dot).abs() <= 1e-12 * dot.abs().max(1.0));
        let mut raised = consts.clone();
        raised[1] += bump;
        let w = weighted_objective(&affine_program(&coefs, &raised, p.clone()), p.as_slice(), &[x]).unwrap().to_f64();
        prop_assert!(w >= v);
    }

    #[test]
    fn projection_is_idempotent_and_lands_in_simplex(z in vector(1..=8)) {
        let q = project_to_simplex(&z).unwrap();
        let again = project_to_simplex(q.as_slice()).unwrap();
        prop_assert_eq!(q.as_slice(), again.as_slice());
        prop_assert!(q.as_slice().iter().all(|v| *v >= 0.0));
        prop_assert!((q.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_is_nonexpansive(pair in (1usize..=8).prop_flat_map(|s| (
        prop::collection::vec(-3.0..3.0f64, s),
        prop::collection::vec(-3.0..3.0f64, s),
    ))) {
        let (a, b) = pair;
        let (pa, pb) = (project_to_simplex(&a).unwrap(), project_to_simplex(&b).unwrap());
        prop_assert!(dist(pa.as_slice(), pb.as_slice()) <= dist(&a, &b) + 1e-12);
    }

    #[test]
    fn projection_ignores_shift_along_ones(z in vector(1..=8), c in -5.0..5.0f64) {
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let (a, b) = (project_to_simplex(&z).unwrap(), project_to_simplex(&shifted).unwrap());
        prop_assert!(dist(a.as_slice(), b.as_slice()) <= 1e-10);
    }

    #[test]
    fn normal_cone_distance_matches_vertex_inequalities(z in vector(1..=12), w in vector(12..=12)) {
        let q = project_to_simplex(&z).unwrap();
        let s = q.len();
        let w = &w[..s];
        let d = normal_cone_distance(&q, w).unwrap();
        let qw: f64 = q.as_slice().iter().zip(w).map(|(a, b)| a * b).sum();
        // ⟨w, e_j − q⟩ ≤ 0 for every vertex
        let holds = w.iter().all(|wj| wj - qw <= 1e-12);
        prop_assert_eq!(d <= 1e-12, holds, "distance {} for q {:?}, w {:?}", d, q, w);
        // the projection residual itself lies in the cone
        let resid: Vec<f64> = z.iter().zip(q.as_slice()).map(|(a, b)| a - b).collect();
        prop_assert!(normal_cone_distance(&q, &resid).unwrap() <= 1e-10);
    }

    #[test]
    fn empirical_sampling_is_reproducible(p in prob(4), n in 1usize..500, seed in any::<u64>()) {
        let a = sample_empirical(&p, n, seed).unwrap();
        let b = sample_empirical(&p, n, seed).unwrap();
        prop_assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn divergence_is_nonnegative_and_convex(
        base in prob(3), q1 in prob(3), q2 in prob(3),
    ) {
        for family in PhiFamily::ALL {
            let d1 = phi_divergence(family, &q1, &base).unwrap();
            let d2 = phi_divergence(family, &q2, &base).unwrap();
            prop_assert!(d1 >= ExtReal::ZERO);
            prop_assert!(phi_divergence(family, &base, &base).unwrap().to_f64().abs() < 1e-15);
            let mid: Vec<f64> = q1.as_slice().iter().zip(q2.as_slice()).map(|(a, b)| 0.5 * (a + b)).collect();
            let dm = phi_divergence(family, &ProbVector::new(mid).unwrap(), &base).unwrap().to_f64();
            prop_assert!(dm <= 0.5 * d1.to_f64() + 0.5 * d2.to_f64() + 1e-10);
        }
    }

    #[test]
    fn divergence_is_continuous_at_zero_mass(base in prob(3)) {
        for family in PhiFamily::ALL {
            let at = |t: f64| {
                let q = ProbVector::new(vec![t, 0.5 - 0.5 * t, 0.5 - 0.5 * t]).unwrap();
                phi_divergence(family, &q, &base).unwrap().to_f64()
            };
            if at(0.0).is_finite() {
                prop_assert!((at(1e-12) - at(0.0)).abs() < 1e-4, "{}", family);
            } else {
                // Φ(0) = +∞: the terms blow up as the mass vanishes
                prop_assert!(at(1e-300) > at(1e-12) && at(1e-12) > at(1e-6), "{}", family);
            }
        }
    }

    #[test]
    fn regularizer_is_nonnegative_and_nonincreasing_in_theta(
        p in prob(4), c in prop::collection::vec(-3.0..3.0f64, 4), t1 in 0.05..10.0f64, t2 in 0.05..10.0f64,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = regularizer_from_tilted_costs(&p, lo, &c).unwrap().value;
        let b = regularizer_from_tilted_costs(&p, hi, &c).unwrap().value;
        prop_assert!(b >= 0.0);
        prop_assert!(b <= a + 1e-12);
    }

    #[test]
    fn smoothed_constraint_minorizes_and_is_convex(
        b in prop::collection::vec(-1.0..1.0f64, 2),
        v1 in prop::collection::vec(-3.0..3.0f64, 2),
        v2 in prop::collection::vec(-3.0..3.0f64, 2),
        theta in 0.1..10.0f64,
    ) {
        let y = [0.0, 0.0];
        let h = |v: &[f64]| smoothed_constraint(&b, theta, &y, v).unwrap().0;
        let (h1, h2) = (h(&v1), h(&v2));
        prop_assert!(h1 >= 0.0);
        if v1.iter().zip(&b).all(|(v, bk)| v <= bk) {
            prop_assert!(h1 <= 1e-15);
        }
        let mid: Vec<f64> = v1.iter().zip(&v2).map(|(a, c)| 0.5 * (a + c)).collect();
        prop_assert!(h(&mid) <= 0.5 * (h1 + h2) + 1e-10);
    }

    #[test]
    fn quadratic_u_step_satisfies_kkt(
        p in prob(4), costs in prop::collection::vec(-3.0..3.0f64, 4),
        y in prop::collection::vec(-1.0..1.0f64, 4), theta in 0.05..20.0f64,
    ) {
        let spec = RockafellianSpec::QuadraticPenalty { p_nu: p.clone(), theta, tilt: y.clone() };
        let ext: Vec<ExtReal> = costs.iter().map(|c| ExtReal::Finite(*c)).collect();
        let step = u_step(&spec, &ext, &y).unwrap();
        let q: Vec<f64> = p.as_slice().iter().zip(&step.u).map(|(a, b)| a + b).collect();
        let q = ProbVector::new(q).unwrap();
        let w: Vec<f64> = (0..4).map(|i| y[i] - costs[i] - theta * step.u[i]).collect();
        prop_assert!(normal_cone_distance(&q, &w).unwrap() <= 1e-9);
    }

    #[test]
    fn relaxed_minimum_never_exceeds_actual(
        coefs in prop::collection::vec(-2.0..2.0f64, 3),
        consts in prop::collection::vec(-2.0..2.0f64, 3),
        p in prob(3),
        theta in 0.0..5.0f64,
        x in -1.0..1.0f64,
    ) {
        let program = affine_program(&coefs, &consts, p.clone());
        let spec = RockafellianSpec::quadratic(p.clone(), theta);
        let step = u_step(&spec, &program.scenario_values(&[x]), &[0.0; 3]).unwrap();
        let relaxed = eval_approx(&spec, &program, &PerturbationPoint::from_u(step.u), &[x], false).unwrap();
        prop_assert!(relaxed <= program.objective(&[x]) + ExtReal::Finite(1e-12));
    }

    #[test]
    fn support_variant_with_zero_shift_matches_quadratic(
        p in prob(2), theta in 0.0..5.0f64, lambda in 0.0..100.0f64,
        u0 in -0.5..0.5f64, x in 0.0..1.0f64,
    ) {
        let program = rockrelax::instances::build_example("ex21", 10).unwrap().actual.with_probabilities(p.clone()).unwrap();
        let u = vec![u0 * p.as_slice()[1].min(p.as_slice()[0]), -u0 * p.as_slice()[1].min(p.as_slice()[0])];
        let xi = program.support().unwrap().points.clone();
        let quad = RockafellianSpec::quadratic(p.clone(), theta);
        let supp = RockafellianSpec::SupportPerturbation { p_nu: p, xi_nu: xi, theta, lambda, tilt: vec![0.0; 2] };
        let a = eval_approx(&quad, &program, &PerturbationPoint::from_u(u.clone()), &[x], false).unwrap().to_f64();
        let pert = PerturbationPoint { u, v: Some(vec![0.0; 2]) };
        let b = eval_approx(&supp, &program, &pert, &[x], false).unwrap().to_f64();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn eta_bound_grows_with_distance(shift1 in 0.0..0.1f64, shift2 in 0.0..0.1f64, theta in 1.0..1e4f64) {
        let cert = RateCertificate {
            rho: 1.0, epsilon: 0.0, y_sup: 0.0, kappa: 0.0, alpha: 0.5,
            beta: 2f64.sqrt(), sigma: 6f64.sqrt(), tau: 12f64.sqrt(), s: 2, kappa_resolution: 1e-3,
        };
        let p = ProbVector::uniform(2).unwrap();
        let shifted = |t: f64| ProbVector::new(vec![0.5 - t, 0.5 + t]).unwrap();
        let (lo, hi) = if shift1 <= shift2 { (shift1, shift2) } else { (shift2, shift1) };
        prop_assert!(eta_bound(&cert, &shifted(lo), &p, theta) <= eta_bound(&cert, &shifted(hi), &p, theta));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn solver_trace_is_monotone_and_seeded_runs_repeat(
        coefs in prop::collection::vec(-2.0..2.0f64, 3),
        consts in prop::collection::vec(-2.0..2.0f64, 3),
        p in prob(3),
        theta in 0.1..20.0f64,
    ) {
        let program = affine_program(&coefs, &consts, p.clone());
        let spec = RockafellianSpec::quadratic(p, theta);
        let grid = GridBox::cube(1, -1.0, 1.0, 1e-2).unwrap();
        let config = SolveConfig::new(XMethod::Grid { grid });
        let a = solve_joint(&program, &spec, &config).unwrap();
        prop_assert!(a.trace.windows(2).all(|w| w[1] <= w[0]));
        let b = solve_joint(&program, &spec, &config).unwrap();
        prop_assert_eq!(a.x_final, b.x_final);
        prop_assert_eq!(a.u_final, b.u_final);
    }

    #[test]
    fn epi_distance_is_symmetric_and_zero_on_equal_inputs(a in 0.1..3.0f64, c in -1.0..1.0f64) {
        let grid = GridBox::cube(1, -2.0, 2.0, 1e-2).unwrap();
        let f = move |x: &[f64]| ExtReal::Finite(a * (x[0] - c) * (x[0] - c));
        let g = |x: &[f64]| ExtReal::Finite(x[0].abs());
        prop_assert_eq!(epi_distance_estimate(f, f, 1.5, &grid).unwrap().value, 0.0);
        let fg = epi_distance_estimate(f, g, 1.5, &grid).unwrap().value;
        let gf = epi_distance_estimate(g, f, 1.5, &grid).unwrap().value;
        prop_assert_eq!(fg, gf);
    }
}
