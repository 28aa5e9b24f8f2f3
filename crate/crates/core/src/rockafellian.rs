// SPDX-License-Identifier: Apache-2.0

//! Rockafellians for scenario programs and their approximating functions.
//!
//! The exact Rockafellian has anchor `u = 0` and reproduces the actual
//! objective there; every other variant replaces the indicator of `{0}` by a
//! finite penalty and the actual data `(p, ξ)` by approximations `(pᵛ, ξᵛ)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::divergence::{divergence_raw, PhiFamily};
use crate::error::{Error, Result};
use crate::extreal::{scale, ExtReal, StochasticProgram};
use crate::simplex::{dot, in_simplex, uniform_on_simplex, ProbVector};

#[derive(Clone, Debug)]
pub enum RockafellianSpec {
    /// `f(u, x) = f₀(x) + Σ (pᵢ + uᵢ) fᵢ(x) + ι_{0}(u)`.
    ExactIndicator,
    /// `f₀ + Σ (pᵛ + u)ᵢ fᵢ + ½θ‖u‖² + ι_Δ(pᵛ + u)`.
    QuadraticPenalty {
        p_nu: ProbVector,
        theta: f64,
        tilt: Vec<f64>,
    },
    /// `f₀ + Σ (pᵛ + u)ᵢ fᵢ + θ d_Φ(pᵛ + u | pᵛ) + ι_Δ(pᵛ + u)`.
    PhiDivergence {
        p_nu: ProbVector,
        theta: f64,
        tilt: Vec<f64>,
        family: PhiFamily,
    },
    /// `f₀ + Σ (pᵛ + u)ᵢ g(ξᵢᵛ + vᵢ, ·) + ½θ‖u‖² + ½λ‖v‖² + ι_Δ(pᵛ + u)`.
    SupportPerturbation {
        p_nu: ProbVector,
        xi_nu: Vec<Vec<f64>>,
        theta: f64,
        lambda: f64,
        tilt: Vec<f64>,
    },
    /// `f₀ + Σ (pᵛ + u)ᵢ fᵢ + θ‖u‖₁ + ι_Δ(pᵛ + u)`.
    L1Penalty {
        p_nu: ProbVector,
        theta: f64,
        tilt: Vec<f64>,
    },
    /// Composite term `h(Σ pᵢ Gᵢ(x))` with `h` an upper-bound indicator.
    ///
    /// Without `reweight` the perturbation lives in the constraint space:
    /// `f₀ + Σ pᵛᵢ fᵢ + h(u + Σ pᵛᵢ Gᵢ) + ½θ‖u‖² − ⟨y, u⟩`.
    ///
    /// With `reweight` the probability vector is perturbed as well and the
    /// constraint perturbation `v` is penalised with the same weight:
    /// `f₀ + Σ qᵢ fᵢ + h(v + Σ qᵢ Gᵢ) + ½θ‖u‖² + ½θ‖v‖² + ι_Δ(q) − ⟨y, v⟩`,
    /// `q = pᵛ + u`. This absorbs scenarios whose constraint components grow
    /// with `ν` as their probability shrinks.
    Composite {
        p_nu: ProbVector,
        theta: f64,
        tilt: Vec<f64>,
        reweight: bool,
    },
}

impl RockafellianSpec {
    pub fn quadratic(p_nu: ProbVector, theta: f64) -> Self {
        let s = p_nu.len();
        RockafellianSpec::QuadraticPenalty {
            p_nu,
            theta,
            tilt: vec![0.0; s],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RockafellianSpec::ExactIndicator => "exact-indicator",
            RockafellianSpec::QuadraticPenalty { .. } => "quadratic-penalty",
            RockafellianSpec::PhiDivergence { .. } => "phi-divergence",
            RockafellianSpec::SupportPerturbation { .. } => "support-perturbation",
            RockafellianSpec::L1Penalty { .. } => "l1-penalty",
            RockafellianSpec::Composite { .. } => "composite",
        }
    }

    /// The approximating probability vector (`None` for the exact variant).
    pub fn p_nu(&self) -> Option<&ProbVector> {
        match self {
            RockafellianSpec::ExactIndicator => None,
            RockafellianSpec::QuadraticPenalty { p_nu, .. }
            | RockafellianSpec::PhiDivergence { p_nu, .. }
            | RockafellianSpec::SupportPerturbation { p_nu, .. }
            | RockafellianSpec::L1Penalty { p_nu, .. }
            | RockafellianSpec::Composite { p_nu, .. } => Some(p_nu),
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match self {
            RockafellianSpec::ExactIndicator => None,
            RockafellianSpec::QuadraticPenalty { theta, .. }
            | RockafellianSpec::PhiDivergence { theta, .. }
            | RockafellianSpec::SupportPerturbation { theta, .. }
            | RockafellianSpec::L1Penalty { theta, .. }
            | RockafellianSpec::Composite { theta, .. } => Some(*theta),
        }
    }

    pub fn tilt(&self) -> Option<&[f64]> {
        match self {
            RockafellianSpec::ExactIndicator => None,
            RockafellianSpec::QuadraticPenalty { tilt, .. }
            | RockafellianSpec::PhiDivergence { tilt, .. }
            | RockafellianSpec::SupportPerturbation { tilt, .. }
            | RockafellianSpec::L1Penalty { tilt, .. }
            | RockafellianSpec::Composite { tilt, .. } => Some(tilt),
        }
    }

    /// Length of the `u` block of a perturbation point.
    pub fn u_dim(&self, program: &StochasticProgram) -> usize {
        match self {
            RockafellianSpec::Composite {
                reweight: false, ..
            } => program.composite().map_or(0, |c| c.dim()),
            _ => program.s(),
        }
    }

    /// Length of the `v` block (zero when absent).
    pub fn v_dim(&self, program: &StochasticProgram) -> usize {
        match self {
            RockafellianSpec::SupportPerturbation { xi_nu, .. } => {
                xi_nu.iter().map(Vec::len).sum()
            }
            RockafellianSpec::Composite { reweight: true, .. } => {
                program.composite().map_or(0, |c| c.dim())
            }
            _ => 0,
        }
    }

    /// Checks parameters and dimensions against `program`.
    pub fn validate(&self, program: &StochasticProgram) -> Result<()> {
        let s = program.s();
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")))
            }
        };
        if let Some(p) = self.p_nu() {
            Error::check_len("approximating probability vector", s, p.len())?;
        }
        if let Some(t) = self.theta() {
            nonneg("theta", t)?;
        }
        match self {
            RockafellianSpec::ExactIndicator => {}
            RockafellianSpec::QuadraticPenalty { tilt, .. }
            | RockafellianSpec::PhiDivergence { tilt, .. }
            | RockafellianSpec::L1Penalty { tilt, .. } => {
                Error::check_len("tilt", s, tilt.len())?;
            }
            RockafellianSpec::SupportPerturbation {
                xi_nu, lambda, tilt, ..
            } => {
                nonneg("lambda", *lambda)?;
                Error::check_len("tilt", s, tilt.len())?;
                let support = program.support().ok_or_else(|| {
                    Error::InvalidParameter("support perturbation needs a support".into())
                })?;
                Error::check_len("perturbed support", s, xi_nu.len())?;
                for xi in xi_nu {
                    Error::check_len("support point", support.dim(), xi.len())?;
                }
            }
            RockafellianSpec::Composite { tilt, .. } => {
                let block = program.composite().ok_or_else(|| {
                    Error::InvalidParameter("composite variant needs a composite block".into())
                })?;
                Error::check_len("tilt", block.dim(), tilt.len())?;
            }
        }
        Ok(())
    }
}

/// `(u, v)`: probability (or constraint) perturbation and, where the variant
/// has one, the second block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationPoint {
    pub u: Vec<f64>,
    pub v: Option<Vec<f64>>,
}

impl PerturbationPoint {
    pub fn from_u(u: Vec<f64>) -> Self {
        PerturbationPoint { u, v: None }
    }

    /// The anchor for `spec` on `program`.
    pub fn zero(spec: &RockafellianSpec, program: &StochasticProgram) -> Self {
        let vd = spec.v_dim(program);
        PerturbationPoint {
            u: vec![0.0; spec.u_dim(program)],
            v: (vd > 0).then(|| vec![0.0; vd]),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.u.iter().all(|&x| x == 0.0) && self.v.iter().flatten().all(|&x| x == 0.0)
    }

    pub fn u_norm(&self) -> f64 {
        dot(&self.u, &self.u).sqrt()
    }
}

/// The exact Rockafellian: `+∞` off the anchor, the actual objective on it.
pub fn eval_exact(
    program: &StochasticProgram,
    pert: &PerturbationPoint,
    x: &[f64],
) -> Result<ExtReal> {
    let m = program.composite().map(|c| c.dim());
    if pert.u.len() != program.s() && Some(pert.u.len()) != m {
        return Err(Error::DimensionMismatch {
            what: "perturbation",
            expected: program.s(),
            found: pert.u.len(),
        });
    }
    Error::check_len("decision point", program.n(), x.len())?;
    if !pert.is_zero() {
        return Ok(ExtReal::PosInf);
    }
    Ok(program.objective(x))
}

/// The approximating function `fᵛ(u, x)`, optionally minus `⟨yᵛ, ·⟩`.
pub fn eval_approx(
    spec: &RockafellianSpec,
    program: &StochasticProgram,
    pert: &PerturbationPoint,
    x: &[f64],
    include_tilt: bool,
) -> Result<ExtReal> {
    if matches!(spec, RockafellianSpec::ExactIndicator) {
        return Err(Error::InvalidParameter(
            "eval_approx is defined for approximating variants only".into(),
        ));
    }
    evaluate(spec, program, pert, x, include_tilt)
}

/// Uniform evaluation across all variants, including the exact one.
pub fn evaluate(
    spec: &RockafellianSpec,
    program: &StochasticProgram,
    pert: &PerturbationPoint,
    x: &[f64],
    include_tilt: bool,
) -> Result<ExtReal> {
    if matches!(spec, RockafellianSpec::ExactIndicator) {
        return eval_exact(program, pert, x);
    }
    spec.validate(program)?;
    Error::check_len("perturbation", spec.u_dim(program), pert.u.len())?;
    Error::check_len("decision point", program.n(), x.len())?;
    let vd = spec.v_dim(program);
    let v: Vec<f64> = match &pert.v {
        Some(v) => {
            Error::check_len("second perturbation block", vd, v.len())?;
            v.clone()
        }
        None => vec![0.0; vd],
    };
    let p_nu = spec.p_nu().expect("approximating variant").as_slice();
    let theta = spec.theta().expect("approximating variant");
    let tilt = spec.tilt().expect("approximating variant");
    let u = &pert.u;

    if let RockafellianSpec::Composite {
        reweight: false, ..
    } = spec
    {
        let block = program.composite().expect("validated");
        let mut total = program.f0().eval(x);
        for (w, f) in p_nu.iter().zip(program.scenarios()) {
            total = total + scale(*w, f.eval(x));
        }
        let agg = block.map.aggregate(p_nu, x);
        let shifted: Vec<f64> = agg.iter().zip(u).map(|(a, b)| a + b).collect();
        total = total + block.h(&shifted) + ExtReal::Finite(0.5 * theta * dot(u, u));
        if include_tilt {
            total = total + ExtReal::Finite(-dot(tilt, u));
        }
        return Ok(total);
    }

    let q: Vec<f64> = p_nu.iter().zip(u).map(|(p, ui)| p + ui).collect();
    if !in_simplex(&q) {
        return Ok(ExtReal::PosInf);
    }
    let q: Vec<f64> = q.into_iter().map(|v| v.max(0.0)).collect();

    let mut total = program.f0().eval(x);
    match spec {
        RockafellianSpec::SupportPerturbation { xi_nu, .. } => {
            let gen = &program.support().expect("validated").generator;
            let mut offset = 0;
            for (qi, xi) in q.iter().zip(xi_nu) {
                let point: Vec<f64> = xi
                    .iter()
                    .zip(&v[offset..offset + xi.len()])
                    .map(|(a, b)| a + b)
                    .collect();
                offset += xi.len();
                total = total + scale(*qi, gen.eval(&point, x));
            }
            total = total + program.composite_term(&q, x);
        }
        RockafellianSpec::Composite { .. } => {
            let block = program.composite().expect("validated");
            for (qi, f) in q.iter().zip(program.scenarios()) {
                total = total + scale(*qi, f.eval(x));
            }
            let agg = block.map.aggregate(&q, x);
            let shifted: Vec<f64> = agg.iter().zip(&v).map(|(a, b)| a + b).collect();
            total = total + block.h(&shifted);
        }
        _ => {
            for (qi, f) in q.iter().zip(program.scenarios()) {
                total = total + scale(*qi, f.eval(x));
            }
            total = total + program.composite_term(&q, x);
        }
    }

    let penalty = match spec {
        RockafellianSpec::QuadraticPenalty { .. } => ExtReal::Finite(0.5 * theta * dot(u, u)),
        RockafellianSpec::PhiDivergence { family, .. } => {
            scale(theta, divergence_raw(*family, &q, p_nu))
        }
        RockafellianSpec::SupportPerturbation { lambda, .. } => {
            ExtReal::Finite(0.5 * theta * dot(u, u) + 0.5 * lambda * dot(&v, &v))
        }
        RockafellianSpec::L1Penalty { .. } => {
            ExtReal::Finite(theta * u.iter().map(|x| x.abs()).sum::<f64>())
        }
        RockafellianSpec::Composite { .. } => {
            ExtReal::Finite(0.5 * theta * (dot(u, u) + dot(&v, &v)))
        }
        RockafellianSpec::ExactIndicator => unreachable!(),
    };
    total = total + penalty;
    if include_tilt {
        let lin = match spec {
            RockafellianSpec::Composite { .. } => dot(tilt, &v),
            _ => dot(tilt, u),
        };
        total = total + ExtReal::Finite(-lin);
    }
    Ok(total)
}

/// Infimum over the decision variable, typically a grid search.
pub trait InfOracle: Sync {
    fn infimum(&self, f: &(dyn Fn(&[f64]) -> ExtReal + Sync)) -> Result<ExtReal>;
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateReport {
    pub samples: usize,
    pub passed: bool,
    /// Strict inequality at every sampled `u ≠ 0`.
    pub strict: bool,
    /// `min_u [inf_x f(u, x) − inf_x f(0, x) − ⟨ȳ, u⟩]`, `+∞` when every
    /// sampled perturbation is infeasible.
    pub worst_gap: f64,
    pub worst_sample: Option<usize>,
    /// `(sample index, gap)` for each violated sample.
    pub violations: Vec<(usize, f64)>,
    pub anchor_value: f64,
}

/// Gap below which the sufficient condition counts as violated.
pub const CERTIFICATE_TOL: f64 = 1e-9;

/// Checks `inf_x f(u, x) ≥ inf_x f(0, x) + ⟨ȳ, u⟩` on each sample, where `f`
/// is the spec's Rockafellian without tilt.
pub fn check_exactness_certificate(
    spec: &RockafellianSpec,
    program: &StochasticProgram,
    y_bar: &[f64],
    u_samples: &[PerturbationPoint],
    oracle: &dyn InfOracle,
) -> Result<CertificateReport> {
    let anchor = PerturbationPoint::zero(spec, program);
    Error::check_len("certificate multiplier", anchor.u.len(), y_bar.len())?;
    let inf_at = |pert: &PerturbationPoint| -> Result<ExtReal> {
        // probe once so dimension errors surface instead of reading as +inf
        let probe = vec![0.0; program.n()];
        evaluate(spec, program, pert, &probe, false)?;
        oracle.infimum(&|x: &[f64]| {
            evaluate(spec, program, pert, x, false).unwrap_or(ExtReal::PosInf)
        })
    };
    let base = inf_at(&anchor)?;
    if base == ExtReal::NegInf {
        return Err(Error::Unbounded(f64::NEG_INFINITY));
    }
    let gaps: Vec<Result<ExtReal>> = u_samples
        .par_iter()
        .map(|pert| {
            let lhs = inf_at(pert)?;
            let rhs = base + ExtReal::Finite(dot(y_bar, &pert.u));
            Ok(lhs.sub(rhs))
        })
        .collect();
    let mut report = CertificateReport {
        samples: u_samples.len(),
        passed: true,
        strict: true,
        worst_gap: f64::INFINITY,
        worst_sample: None,
        violations: Vec::new(),
        anchor_value: base.to_f64(),
    };
    for (k, gap) in gaps.into_iter().enumerate() {
        let gap = gap?.to_f64();
        if gap < report.worst_gap {
            report.worst_gap = gap;
            report.worst_sample = Some(k);
        }
        if gap < -CERTIFICATE_TOL {
            report.passed = false;
            report.violations.push((k, gap));
        }
        if !u_samples[k].is_zero() && gap <= CERTIFICATE_TOL {
            report.strict = false;
        }
    }
    report.strict &= report.passed;
    Ok(report)
}

/// Every vertex of `Δ − pᵛ` followed by `count` seeded uniform points of
/// `Δ − pᵛ`.
pub fn default_u_samples(p_nu: &ProbVector, count: usize, seed: u64) -> Vec<PerturbationPoint> {
    let s = p_nu.len();
    let shift = |q: &[f64]| -> PerturbationPoint {
        PerturbationPoint::from_u(q.iter().zip(p_nu.as_slice()).map(|(a, b)| a - b).collect())
    };
    let mut out: Vec<PerturbationPoint> = (0..s)
        .map(|i| shift(ProbVector::vertex(s, i).as_slice()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.extend((0..count).map(|_| shift(uniform_on_simplex(&mut rng, s).as_slice())));
    out
}
