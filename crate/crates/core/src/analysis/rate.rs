// SPDX-License-Identifier: Apache-2.0

//! Constants and bound of the rate theorem for the quadratic penalty, the
//! `θ` schedule, and the table that checks the distance inequality.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extreal::{ExtReal, StochasticProgram};
use crate::rockafellian::RockafellianSpec;
use crate::simplex::ProbVector;
use crate::solver::{
    brute_force_oracle, distance_to_set, solve_joint, GridBox, OracleConfig, SolveConfig,
};

/// Stand-in for `θ = +∞` when `pᵛ = p`.
pub const THETA_CAP: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateCertificate {
    pub rho: f64,
    pub epsilon: f64,
    pub y_sup: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub tau: f64,
    pub s: usize,
    /// Spacing of the grid that certified `κ`.
    pub kappa_resolution: f64,
}

impl RateCertificate {
    /// `θ ≥ 9β²/α²`.
    pub fn theta_threshold(&self) -> f64 {
        9.0 * self.beta * self.beta / (self.alpha * self.alpha)
    }

    /// Both hypotheses of the theorem at `(θᵛ, pᵛ)`.
    pub fn applicable(&self, theta: f64, p_nu: &ProbVector, p: &ProbVector) -> bool {
        theta >= self.theta_threshold() && p_nu.distance_inf(p) <= self.alpha / 3.0
    }
}

/// Certifies `κ` from grid infima of `f₀` and of each `fᵢ` (on `dom f₀`) over
/// the grid points in the `ρ`-ball, then fills in `α, β, σ, τ`.
pub fn rate_constants(
    program: &StochasticProgram,
    rho: f64,
    epsilon: f64,
    y_sup: f64,
    grid: &GridBox,
) -> Result<RateCertificate> {
    if !(rho >= 0.0 && (0.0..=2.0 * rho).contains(&epsilon) && y_sup >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need rho >= 0, epsilon in [0, 2 rho], y_sup >= 0 (got {rho}, {epsilon}, {y_sup})"
        )));
    }
    Error::check_len("kappa grid", program.n(), grid.dim())?;
    let in_ball = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() <= rho * rho * (1.0 + 1e-12);
    let lowest = |x: &[f64]| -> ExtReal {
        if !in_ball(x) {
            return ExtReal::PosInf;
        }
        let f0 = program.f0().eval(x);
        if f0 == ExtReal::PosInf {
            return ExtReal::PosInf;
        }
        program
            .scenario_values(x)
            .into_iter()
            .fold(f0, ExtReal::min)
    };
    let (_, low) = grid.argmin(lowest)?;
    let kappa = match low {
        ExtReal::PosInf => {
            return Err(Error::Infeasible("no grid point of the ball lies in dom f0".into()))
        }
        ExtReal::NegInf => return Err(Error::Unbounded(f64::NEG_INFINITY)),
        ExtReal::Finite(v) if v < crate::solver::UNBOUNDED_LEVEL => {
            return Err(Error::Unbounded(v))
        }
        ExtReal::Finite(v) => (-v).max(0.0),
    };
    let p = program.p();
    let alpha = p.min_positive();
    let beta = (2.0 * rho + 2.0 * rho * y_sup + 4.0 * kappa).sqrt();
    let s = program.s();
    let inner = kappa.max((3.0 / (2.0 * alpha)).sqrt() * beta) + kappa;
    let sigma = 1.0_f64.max(y_sup + (s as f64).sqrt() * inner);
    Ok(RateCertificate {
        rho,
        epsilon,
        y_sup,
        kappa,
        alpha,
        beta,
        sigma,
        tau: beta * sigma,
        s,
        kappa_resolution: grid.step,
    })
}

/// `ηᵛ = σ‖pᵛ − p‖₂ + max{½θᵛ‖pᵛ − p‖₂², τ/√θᵛ}`.
pub fn eta_bound(cert: &RateCertificate, p_nu: &ProbVector, p: &ProbVector, theta: f64) -> f64 {
    let d = p_nu.distance(p);
    cert.sigma * d + (0.5 * theta * d * d).max(cert.tau / theta.sqrt())
}

/// `max(floor, ‖pᵛ − p‖₂^{−4/3})`, with [`THETA_CAP`] when the vectors
/// coincide.
pub fn theta_schedule(p_nu: &ProbVector, p: &ProbVector, floor: f64) -> f64 {
    let d = p_nu.distance(p);
    if d == 0.0 {
        floor.max(THETA_CAP)
    } else {
        floor.max(d.powf(-4.0 / 3.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub nu: f64,
    pub p_distance: f64,
    pub theta: f64,
    pub eta: f64,
    pub applicable: bool,
    pub x_nu: Vec<f64>,
    /// Distance from `xᵛ` to the grid `(ε + 2ηᵛ)`-argmin of the actual problem.
    pub distance: f64,
    /// `ηᵛ + grid tolerance − distance`.
    pub margin: f64,
    /// `None` when the theorem's hypotheses fail at this `ν`.
    pub passed: Option<bool>,
}

/// One row per `(ν, spec)`. The actual problem's argmin sets come from a
/// single exhaustive pass over `grid`; the distance is allowed the grid's
/// half-diagonal as discretization slack.
pub fn verify_rate_inequality(
    actual: &StochasticProgram,
    sequence: &[(f64, RockafellianSpec)],
    cert: &RateCertificate,
    grid: &GridBox,
    solve: &SolveConfig,
) -> Result<Vec<RateRow>> {
    let base = brute_force_oracle(
        actual,
        &RockafellianSpec::ExactIndicator,
        &OracleConfig::on_box(grid.clone()),
    )?;
    let slack = 0.5 * grid.step * (grid.dim() as f64).sqrt();
    sequence
        .par_iter()
        .map(|(nu, spec)| {
            let (p_nu, theta) = match spec {
                RockafellianSpec::QuadraticPenalty { p_nu, theta, .. } => (p_nu, *theta),
                _ => {
                    return Err(Error::InvalidParameter(
                        "the rate theorem covers the quadratic variant".into(),
                    ))
                }
            };
            let eta = eta_bound(cert, p_nu, actual.p(), theta);
            let applicable = cert.applicable(theta, p_nu, actual.p());
            let report = solve_joint(actual, spec, solve)?;
            let level = base.value + ExtReal::Finite(cert.epsilon + 2.0 * eta);
            let set: Vec<Vec<f64>> = base
                .x_values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v <= level)
                .map(|(i, _)| grid.point(i as u64))
                .collect();
            let distance = distance_to_set(&report.x_final, &set);
            let margin = eta + slack - distance;
            Ok(RateRow {
                nu: *nu,
                p_distance: p_nu.distance(actual.p()),
                theta,
                eta,
                applicable,
                x_nu: report.x_final,
                distance,
                margin,
                passed: applicable.then_some(margin >= 0.0),
            })
        })
        .collect()
}

/// Least-squares slope of `ln error` against `ln size`, skipping pairs with
/// a non-positive entry; `None` with fewer than two usable pairs.
pub fn fit_rate_exponent(sizes: &[f64], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = sizes
        .iter()
        .zip(errors)
        .filter(|(s, e)| **s > 0.0 && **e > 0.0)
        .map(|(s, e)| (s.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
