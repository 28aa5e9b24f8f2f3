// SPDX-License-Identifier: Apache-2.0

//! Joint minimization of `fᵛ(u, x) − ⟨yᵛ, u⟩` by alternating an exact
//! perturbation step with a pluggable decision step.

pub mod grid;
pub mod oracle;
pub mod ustep;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{optimality_residual, F0Geometry, ResidualReport};
use crate::error::{Error, Result};
use crate::extreal::{ExtReal, StochasticProgram};
use crate::rockafellian::{evaluate, PerturbationPoint, RockafellianSpec};
use crate::simplex::{dot, project_to_face};

pub use grid::{simplex_grid, GridBox};
pub use oracle::{brute_force_oracle, distance_to_set, ArgminSet, OracleConfig, OracleResult};
pub use ustep::{u_step, UStepResult};

/// Objective level below which a run is declared unbounded.
pub const UNBOUNDED_LEVEL: f64 = -1e15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepRule {
    Fixed { step: f64 },
    Armijo { initial: f64, shrink: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub step: StepRule,
    pub iters: usize,
    /// Stop once an accepted step moves less than this (max-norm).
    pub tol: f64,
    /// Extra seeded starting points drawn uniformly from the box.
    #[serde(default)]
    pub restarts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum XMethod {
    /// Best point of the grid with the perturbation held fixed.
    Grid { grid: GridBox },
    /// Best point of the grid after re-minimizing the perturbation at every
    /// grid point. Escapes the stalls that plain alternation hits when a
    /// fixed perturbation makes the current decision locally optimal.
    ReducedGrid { grid: GridBox },
    ProjectedGradient(GradientConfig),
}

impl XMethod {
    pub fn bounds(&self) -> (&[f64], &[f64]) {
        match self {
            XMethod::Grid { grid } | XMethod::ReducedGrid { grid } => (&grid.lower, &grid.upper),
            XMethod::ProjectedGradient(c) => (&c.lower, &c.upper),
        }
    }

    pub fn needs_gradients(&self) -> bool {
        matches!(self, XMethod::ProjectedGradient(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub max_outer_iters: usize,
    pub u_tolerance: f64,
    pub objective_tolerance: f64,
    pub x_method: XMethod,
    pub seed: u64,
    /// Starting decision; the box center when absent.
    #[serde(default)]
    pub x_start: Option<Vec<f64>>,
    /// Search grid for a support shift when the generator has no closed-form
    /// step.
    #[serde(default)]
    pub support_search: Option<GridBox>,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
    /// Geometry of `f₀` for the residual when `f₀` is not smooth.
    #[serde(default)]
    pub f0_geometry: Option<F0Geometry>,
}

impl SolveConfig {
    pub fn new(x_method: XMethod) -> Self {
        SolveConfig {
            max_outer_iters: 100,
            u_tolerance: 1e-10,
            objective_tolerance: 1e-12,
            x_method,
            seed: 0,
            x_start: None,
            support_search: None,
            oracle: None,
            f0_geometry: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("u_tolerance", self.u_tolerance)?;
        positive("objective_tolerance", self.objective_tolerance)?;
        match &self.x_method {
            XMethod::Grid { grid } | XMethod::ReducedGrid { grid } => grid.validate()?,
            XMethod::ProjectedGradient(c) => {
                Error::check_len("gradient box", c.lower.len(), c.upper.len())?;
                match c.step {
                    StepRule::Fixed { step } => positive("step", step)?,
                    StepRule::Armijo { initial, shrink } => {
                        positive("initial step", initial)?;
                        if !(shrink > 0.0 && shrink < 1.0) {
                            return Err(Error::InvalidParameter(format!(
                                "Armijo shrink factor must lie in (0, 1), got {shrink}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub u_final: Vec<f64>,
    pub v_final: Option<Vec<f64>>,
    pub x_final: Vec<f64>,
    pub objective: f64,
    /// Objective after initialization and after every outer iteration.
    pub trace: Vec<f64>,
    /// Final objective minus the oracle minimum, when the oracle ran.
    pub epsilon_certificate: Option<f64>,
    pub residual: Option<ResidualReport>,
    pub iterations: usize,
    pub converged: bool,
}

impl SolveReport {
    pub fn pert(&self) -> PerturbationPoint {
        PerturbationPoint {
            u: self.u_final.clone(),
            v: self.v_final.clone(),
        }
    }
}

/// A perturbation minimizing the objective at fixed `x`, with that value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Profile {
    pub pert: PerturbationPoint,
    pub value: ExtReal,
}

fn pick(best: Option<Profile>, cand: Profile) -> Option<Profile> {
    match best {
        Some(b) if b.value <= cand.value => Some(b),
        _ => Some(cand),
    }
}

/// Minimizes over the perturbation at fixed `x`. Exact for the quadratic,
/// Φ-divergence, L1 and constraint-space composite variants; the support
/// and reweighted composite variants alternate exact block steps and never
/// return a worse point than `warm` or the anchor.
pub fn profile(
    program: &StochasticProgram,
    spec: &RockafellianSpec,
    x: &[f64],
    warm: Option<&PerturbationPoint>,
    support_search: Option<&GridBox>,
) -> Result<Profile> {
    let anchor = PerturbationPoint::zero(spec, program);
    let value_at = |pert: PerturbationPoint| -> Result<Profile> {
        let value = evaluate(spec, program, &pert, x, true)?;
        Ok(Profile { pert, value })
    };
    match spec {
        RockafellianSpec::ExactIndicator => value_at(anchor),
        RockafellianSpec::QuadraticPenalty { tilt, .. }
        | RockafellianSpec::PhiDivergence { tilt, .. }
        | RockafellianSpec::L1Penalty { tilt, .. } => {
            if program.composite().is_some() {
                return Err(Error::InvalidParameter(format!(
                    "the {} variant does not handle a composite block; use the composite variant",
                    spec.name()
                )));
            }
            if program.f0().eval(x) == ExtReal::PosInf {
                return value_at(anchor);
            }
            let r = u_step(spec, &program.scenario_values(x), tilt)?;
            value_at(PerturbationPoint::from_u(r.u))
        }
        RockafellianSpec::SupportPerturbation { .. } => {
            let mut best = Some(value_at(anchor.clone())?);
            if let Some(w) = warm {
                best = pick(best, value_at(w.clone())?);
            }
            let start = best.clone().expect("set above");
            let cand = support_alternation(program, spec, x, start.pert, support_search)?;
            Ok(pick(best, cand).expect("nonempty"))
        }
        RockafellianSpec::Composite {
            reweight: false,
            theta,
            tilt,
            ..
        } => {
            let block = program.composite().expect("validated");
            spec.validate(program)?;
            let agg = block.map.aggregate(spec.p_nu().expect("set").as_slice(), x);
            let u = constraint_shift(&block.bound, &agg, *theta, tilt)?;
            value_at(PerturbationPoint::from_u(u))
        }
        RockafellianSpec::Composite { reweight: true, .. } => {
            spec.validate(program)?;
            let mut best = Some(value_at(reweight_anchor(program, spec, x)?)?);
            if let Some(w) = warm {
                best = pick(best, value_at(w.clone())?);
            }
            let q0 = best.as_ref().map(|b| b.pert.u.clone()).expect("set");
            if let Some(pert) = reweighted_step(program, spec, x, &q0)? {
                best = pick(best, value_at(pert)?);
            }
            Ok(best.expect("nonempty"))
        }
    }
}

/// `argmin_v {h(v + a) + ½θ‖v‖² − ⟨y, v⟩} = min(y/θ, b − a)` componentwise.
fn constraint_shift(bound: &[f64], agg: &[f64], theta: f64, y: &[f64]) -> Result<Vec<f64>> {
    bound
        .iter()
        .zip(agg)
        .zip(y)
        .map(|((b, a), yk)| {
            if theta > 0.0 {
                Ok((yk / theta).min(b - a))
            } else if *yk > 0.0 {
                Err(Error::Unbounded(f64::NEG_INFINITY))
            } else {
                Ok((b - a).min(0.0))
            }
        })
        .collect()
}

fn reweight_anchor(
    program: &StochasticProgram,
    spec: &RockafellianSpec,
    x: &[f64],
) -> Result<PerturbationPoint> {
    let (p, theta, y) = (spec.p_nu().expect("set"), spec.theta().expect("set"), spec.tilt().expect("set"));
    let block = program.composite().expect("validated");
    let agg = block.map.aggregate(p.as_slice(), x);
    Ok(PerturbationPoint {
        u: vec![0.0; program.s()],
        v: Some(constraint_shift(&block.bound, &agg, theta, y)?),
    })
}

/// Reweighted composite step at fixed `x`. With weight-dependent constraint
/// components frozen at the current weights, the `(q, v)` problem is a
/// strongly convex QP whose single dual block `w ≥ 0` (one multiplier per
/// constraint) is found by coordinatewise bisection; the components are
/// then refrozen at the new weights until the weights settle.
fn reweighted_step(
    program: &StochasticProgram,
    spec: &RockafellianSpec,
    x: &[f64],
    u_start: &[f64],
) -> Result<Option<PerturbationPoint>> {
    let (p, theta, y) = (spec.p_nu().expect("set"), spec.theta().expect("set"), spec.tilt().expect("set"));
    if theta <= 0.0 {
        return Err(Error::InvalidParameter(
            "the reweighted composite variant needs theta > 0".into(),
        ));
    }
    let block = program.composite().expect("validated");
    let costs = program.scenario_values(x);
    let allowed: Vec<bool> = costs.iter().map(|c| c.is_finite()).collect();
    if !allowed.iter().any(|&a| a) || program.f0().eval(x) == ExtReal::PosInf {
        return Ok(None);
    }
    let ell: Vec<f64> = costs.iter().map(|c| c.finite().unwrap_or(0.0)).collect();
    let (s, m) = (program.s(), block.dim());
    let p = p.as_slice();
    let mut q: Vec<f64> = p.iter().zip(u_start).map(|(a, b)| (a + b).max(0.0)).collect();
    let weights_at = |g: &[Vec<f64>], w: &[f64]| -> Result<Vec<f64>> {
        let z: Vec<f64> = (0..s)
            .map(|i| p[i] - (ell[i] + dot(&g[i], w)) / theta)
            .collect();
        Ok(project_to_face(&z, &allowed)?.expect("face is nonempty").into_inner())
    };
    let mut w = vec![0.0; m];
    for _ in 0..100 {
        let g = block.map.components(&q, x);
        let slope = |w: &[f64], k: usize| -> Result<f64> {
            let qw = weights_at(&g, w)?;
            let lhs: f64 = (0..s).map(|i| qw[i] * g[i][k]).sum();
            Ok(lhs - block.bound[k] - (w[k] - y[k]) / theta)
        };
        for _sweep in 0..500 {
            let mut moved: f64 = 0.0;
            for k in 0..m {
                let old = w[k];
                let mut trial = w.clone();
                trial[k] = 0.0;
                if slope(&trial, k)? <= 0.0 {
                    w[k] = 0.0;
                } else {
                    let mut hi = 1.0;
                    loop {
                        trial[k] = hi;
                        if slope(&trial, k)? < 0.0 || hi > 1e12 {
                            break;
                        }
                        hi *= 2.0;
                    }
                    let mut lo = 0.0;
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        trial[k] = mid;
                        if slope(&trial, k)? > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    w[k] = 0.5 * (lo + hi);
                }
                moved = moved.max((w[k] - old).abs() / (1.0 + old.abs()));
            }
            if m == 1 || moved <= 1e-13 {
                break;
            }
        }
        let q_new = weights_at(&g, &w)?;
        let change = q_new
            .iter()
            .zip(&q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        q = q_new;
        if change < 1e-14 {
            break;
        }
    }
    let agg = block.map.aggregate(&q, x);
    let v = constraint_shift(&block.bound, &agg, theta, y)?;
    Ok(Some(PerturbationPoint {
        u: q.iter().zip(p).map(|(a, b)| a - b).collect(),
        v: Some(v),
    }))
}

/// Alternates exact shift steps (per scenario, weights fixed) and exact
/// probability steps (shifts fixed) until neither moves.
fn support_alternation(
    program: &StochasticProgram,
    spec: &RockafellianSpec,
    x: &[f64],
    start: PerturbationPoint,
    search: Option<&GridBox>,
) -> Result<Profile> {
    let (p_nu, xi_nu, lambda, theta, tilt) = match spec {
        RockafellianSpec::SupportPerturbation {
            p_nu,
            xi_nu,
            lambda,
            theta,
            tilt,
        } => (p_nu, xi_nu, *lambda, *theta, tilt),
        _ => unreachable!("support variant only"),
    };
    let generator = program.support().expect("validated").generator.clone();
    let quad = RockafellianSpec::QuadraticPenalty {
        p_nu: p_nu.clone(),
        theta,
        tilt: tilt.clone(),
    };
    let mut pert = start;
    let mut value = evaluate(spec, program, &pert, x, true)?;
    for _ in 0..100 {
        let q: Vec<f64> = p_nu
            .as_slice()
            .iter()
            .zip(&pert.u)
            .map(|(a, b)| (a + b).max(0.0))
            .collect();
        let mut v = Vec::new();
        let mut costs = Vec::with_capacity(q.len());
        for (qi, xi) in q.iter().zip(xi_nu) {
            let shift = if *qi == 0.0 {
                vec![0.0; xi.len()]
            } else if let Some(step) = generator.support_step(*qi, lambda, xi, x) {
                step
            } else if let Some(grid) = search {
                let (k, _) = grid.argmin(|d: &[f64]| {
                    let pt: Vec<f64> = xi.iter().zip(d).map(|(a, b)| a + b).collect();
                    crate::extreal::scale(*qi, generator.eval(&pt, x))
                        + ExtReal::Finite(0.5 * lambda * dot(d, d))
                })?;
                grid.point(k)
            } else {
                return Err(Error::Oracle(
                    "support generator has no closed-form shift step and no search grid was given"
                        .into(),
                ));
            };
            let pt: Vec<f64> = xi.iter().zip(&shift).map(|(a, b)| a + b).collect();
            costs.push(generator.eval(&pt, x));
            v.extend(shift);
        }
        let r = u_step(&quad, &costs, tilt)?;
        let next = PerturbationPoint { u: r.u, v: Some(v) };
        let next_value = evaluate(spec, program, &next, x, true)?;
        if next_value < value {
            let done = max_change(&next.u, &pert.u) == 0.0 && next.v == pert.v;
            pert = next;
            value = next_value;
            if done {
                break;
            }
        } else {
            break;
        }
    }
    Ok(Profile { pert, value })
}

fn max_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Minimizes over `x` with the perturbation fixed (or, for the reduced grid,
/// re-minimized at every grid point). Returns the new point and its value.
pub fn x_step(
    program: &StochasticProgram,
    spec: &RockafellianSpec,
    pert: &PerturbationPoint,
    method: &XMethod,
    start: &[f64],
    seed: u64,
    support_search: Option<&GridBox>,
) -> Result<(Vec<f64>, ExtReal)> {
    let out = match method {
        XMethod::Grid { grid } => {
            let (k, v) = grid.argmin(|x: &[f64]| {
                evaluate(spec, program, pert, x, true).unwrap_or(ExtReal::PosInf)
            })?;
            (grid.point(k), v)
        }
        XMethod::ReducedGrid { grid } => {
            let (k, v) = grid.argmin(|x: &[f64]| {
                profile(program, spec, x, None, support_search)
                    .map_or(ExtReal::PosInf, |p| p.value)
            })?;
            (grid.point(k), v)
        }
        XMethod::ProjectedGradient(cfg) => projected_gradient(program, spec, pert, cfg, start, seed)?,
    };
    if out.1 == ExtReal::PosInf {
        return Err(Error::Infeasible(
            "no point of the decision box has a finite objective".into(),
        ));
    }
    Ok(out)
}

/// `∇f₀(x) + Σ qᵢ ∇fᵢ(x)` at fixed weights `q`.
fn weighted_gradient(program: &StochasticProgram, q: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let missing = |what: &str| Error::MissingGradient(format!("{what} at {x:?}"));
    let mut g = program.f0().gradient(x).ok_or_else(|| missing(program.f0().label()))?;
    for (qi, f) in q.iter().zip(program.scenarios()) {
        if *qi == 0.0 {
            continue;
        }
        let gi = f.gradient(x).ok_or_else(|| missing(f.label()))?;
        for (a, b) in g.iter_mut().zip(gi) {
            *a += qi * b;
        }
    }
    Ok(g)
}

fn fixed_weights(
    program: &StochasticProgram,
    spec: &RockafellianSpec,
    pert: &PerturbationPoint,
) -> Result<Vec<f64>> {
    match spec {
        RockafellianSpec::ExactIndicator => Ok(program.p().as_slice().to_vec()),
        RockafellianSpec::QuadraticPenalty { p_nu, .. }
        | RockafellianSpec::PhiDivergence { p_nu, .. }
        | RockafellianSpec::L1Penalty { p_nu, .. } => Ok(p_nu
            .as_slice()
            .iter()
            .zip(&pert.u)
            .map(|(a, b)| (a + b).max(0.0))
            .collect()),
        _ => Err(Error::MissingGradient(format!(
            "projected gradient is not available for the {} variant",
            spec.name()
        ))),
    }
}

fn projected_gradient(
    program: &StochasticProgram,
    spec: &RockafellianSpec,
    pert: &PerturbationPoint,
    cfg: &GradientConfig,
    start: &[f64],
    seed: u64,
) -> Result<(Vec<f64>, ExtReal)> {
    if program.composite().is_some() {
        return Err(Error::MissingGradient(
            "projected gradient cannot handle a composite block".into(),
        ));
    }
    Error::check_len("gradient box", program.n(), cfg.lower.len())?;
    let q = fixed_weights(program, spec, pert)?;
    let clamp = |x: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(cfg.lower.iter().zip(&cfg.upper))
            .map(|(&v, (&l, &u))| v.clamp(l, u))
            .collect()
    };
    let phi = |x: &[f64]| evaluate(spec, program, pert, x, true).unwrap_or(ExtReal::PosInf);
    let descend = |x0: Vec<f64>| -> Result<(Vec<f64>, ExtReal)> {
        let mut x = clamp(&x0);
        let mut fx = phi(&x);
        for _ in 0..cfg.iters {
            let g = weighted_gradient(program, &q, &x)?;
            let (next, f_next) = match cfg.step {
                StepRule::Fixed { step } => {
                    let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                    let trial = clamp(&trial);
                    let ft = phi(&trial);
                    if ft > fx {
                        break;
                    }
                    (trial, ft)
                }
                StepRule::Armijo { initial, shrink } => {
                    let mut t = initial;
                    let mut accepted = None;
                    while t > 1e-16 {
                        let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
                        let trial = clamp(&trial);
                        let d: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                        let bound = fx + ExtReal::Finite(dot(&g, &d) + dot(&d, &d) / (2.0 * t));
                        let ft = phi(&trial);
                        if ft <= bound && ft <= fx {
                            accepted = Some((trial, ft));
                            break;
                        }
                        t *= shrink;
                    }
                    match accepted {
                        Some(a) => a,
                        None => break,
                    }
                }
            };
            let moved = max_change(&next, &x);
            x = next;
            fx = f_next;
            if moved <= cfg.tol {
                break;
            }
        }
        Ok((x, fx))
    };
    let mut best = descend(start.to_vec())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cfg.restarts {
        let x0: Vec<f64> = cfg
            .lower
            .iter()
            .zip(&cfg.upper)
            .map(|(&l, &u)| if u > l { rng.gen_range(l..=u) } else { l })
            .collect();
        let cand = descend(x0)?;
        if cand.1 < best.1 {
            best = cand;
        }
    }
    Ok(best)
}

/// Alternating minimization from the anchor and the box center (or the
/// configured start). Each step is accepted only if it does not increase the
/// objective, so the trace is monotone.
pub fn solve_joint(
    program: &StochasticProgram,
    spec: &RockafellianSpec,
    config: &SolveConfig,
) -> Result<SolveReport> {
    config.validate()?;
    if !matches!(spec, RockafellianSpec::ExactIndicator) {
        spec.validate(program)?;
    }
    let (lower, upper) = config.x_method.bounds();
    Error::check_len("decision box", program.n(), lower.len())?;
    let mut x: Vec<f64> = match &config.x_start {
        Some(x0) => {
            Error::check_len("starting point", program.n(), x0.len())?;
            x0.clone()
        }
        None => lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect(),
    };
    let search = config.support_search.as_ref();
    let mut pert = PerturbationPoint::zero(spec, program);
    let mut value = evaluate(spec, program, &pert, &x, true)?;
    let mut trace = vec![value.to_f64()];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..config.max_outer_iters {
        iterations = it + 1;
        let before = value;
        let u_before = pert.clone();
        let x_before = x.clone();

        let prof = profile(program, spec, &x, Some(&pert), search)?;
        if prof.value <= value {
            pert = prof.pert;
            value = prof.value;
        }

        match config.x_step_result(program, spec, &pert, &x, search)? {
            (x_new, v_new, new_pert) if v_new <= value => {
                x = x_new;
                value = v_new;
                if let Some(p) = new_pert {
                    pert = p;
                }
            }
            _ => {}
        }
        check_bounded(value)?;
        trace.push(value.to_f64());

        let du = max_change(&pert.u, &u_before.u).max(match (&pert.v, &u_before.v) {
            (Some(a), Some(b)) => max_change(a, b),
            _ => 0.0,
        });
        let dx = max_change(&x, &x_before);
        let decrease = match (before, value) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a - b,
            (a, b) if a == b => 0.0,
            _ => f64::INFINITY,
        };
        if decrease <= config.objective_tolerance
            && du <= config.u_tolerance
            && dx <= config.u_tolerance.max(1e-12)
        {
            converged = true;
            break;
        }
    }
    let objective = value.to_f64();
    let epsilon_certificate = match &config.oracle {
        Some(oc) => Some(objective - brute_force_oracle(program, spec, oc)?.value.to_f64()),
        None => None,
    };
    let residual = residual_for(program, spec, &pert, &x, config.f0_geometry.as_ref());
    Ok(SolveReport {
        u_final: pert.u,
        v_final: pert.v,
        x_final: x,
        objective,
        trace,
        epsilon_certificate,
        residual,
        iterations,
        converged,
    })
}

impl SolveConfig {
    fn x_step_result(
        &self,
        program: &StochasticProgram,
        spec: &RockafellianSpec,
        pert: &PerturbationPoint,
        x: &[f64],
        search: Option<&GridBox>,
    ) -> Result<(Vec<f64>, ExtReal, Option<PerturbationPoint>)> {
        let (x_new, v_new) = x_step(program, spec, pert, &self.x_method, x, self.seed, search)?;
        if let XMethod::ReducedGrid { .. } = self.x_method {
            let prof = profile(program, spec, &x_new, None, search)?;
            return Ok((x_new, prof.value, Some(prof.pert)));
        }
        Ok((x_new, v_new, None))
    }
}

fn check_bounded(value: ExtReal) -> Result<()> {
    match value {
        ExtReal::NegInf => Err(Error::Unbounded(f64::NEG_INFINITY)),
        ExtReal::Finite(v) if v < UNBOUNDED_LEVEL => Err(Error::Unbounded(v)),
        _ => Ok(()),
    }
}

fn residual_for(
    program: &StochasticProgram,
    spec: &RockafellianSpec,
    pert: &PerturbationPoint,
    x: &[f64],
    geometry: Option<&F0Geometry>,
) -> Option<ResidualReport> {
    if !matches!(spec, RockafellianSpec::QuadraticPenalty { .. }) {
        return None;
    }
    let geometry = match geometry {
        Some(g) => g.clone(),
        None if program.f0().is_smooth() => F0Geometry::Smooth,
        None => return None,
    };
    optimality_residual(program, spec, pert, x, &geometry).ok()
}
