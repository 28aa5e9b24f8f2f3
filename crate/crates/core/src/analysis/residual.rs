// SPDX-License-Identifier: Apache-2.0

//! First-order residuals `dist((yᵛ, 0), ∂fᵛ(u, x))` for the quadratic
//! variant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extreal::{ExtReal, StochasticProgram};
use crate::rockafellian::{PerturbationPoint, RockafellianSpec};
use crate::simplex::{in_simplex, normal_cone_distance, ProbVector};

/// How `∂f₀` is represented.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum F0Geometry {
    /// `f₀` is differentiable with a declared gradient.
    Smooth,
    /// `f₀` is the indicator of `[lower, upper]`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    /// `dist(yᵛ, F(x) + θᵛu + N_Δ(pᵛ + u))`.
    pub block1: f64,
    /// `dist(0, Σ (pᵛ + u)ᵢ ∇fᵢ(x) + ∂f₀(x))`.
    pub block2: f64,
    pub total: f64,
}

impl ResidualReport {
    fn empty(u: &[f64], x: &[f64]) -> Self {
        ResidualReport {
            u: u.to_vec(),
            x: x.to_vec(),
            block1: f64::INFINITY,
            block2: f64::INFINITY,
            total: f64::INFINITY,
        }
    }
}

/// `dist(w, N_C(x))` for the box `C = [lower, upper]`, `+∞` outside it.
pub fn box_normal_cone_distance(lower: &[f64], upper: &[f64], x: &[f64], w: &[f64]) -> f64 {
    let mut sq = 0.0;
    for k in 0..x.len() {
        let (l, u, xk, wk) = (lower[k], upper[k], x[k], w[k]);
        if xk < l || xk > u {
            return f64::INFINITY;
        }
        let d = if l == u {
            0.0
        } else if xk == l {
            wk.max(0.0)
        } else if xk == u {
            (-wk).max(0.0)
        } else {
            wk.abs()
        };
        sq += d * d;
    }
    sq.sqrt()
}

pub fn optimality_residual(
    program: &StochasticProgram,
    spec: &RockafellianSpec,
    pert: &PerturbationPoint,
    x: &[f64],
    f0: &F0Geometry,
) -> Result<ResidualReport> {
    let (p_nu, theta, tilt) = match spec {
        RockafellianSpec::QuadraticPenalty { p_nu, theta, tilt } => (p_nu, *theta, tilt),
        _ => {
            return Err(Error::InvalidParameter(
                "residuals are defined for the quadratic variant".into(),
            ))
        }
    };
    Error::check_len("perturbation", program.s(), pert.u.len())?;
    Error::check_len("decision point", program.n(), x.len())?;
    let q: Vec<f64> = p_nu
        .as_slice()
        .iter()
        .zip(&pert.u)
        .map(|(a, b)| a + b)
        .collect();
    if !in_simplex(&q) || program.f0().eval(x) == ExtReal::PosInf {
        return Ok(ResidualReport::empty(&pert.u, x));
    }
    let costs = program.scenario_values(x);
    if costs.iter().any(|c| !c.is_finite()) {
        return Ok(ResidualReport::empty(&pert.u, x));
    }
    let q = ProbVector::new(q)?;
    let w: Vec<f64> = (0..q.len())
        .map(|i| tilt[i] - costs[i].to_f64() - theta * pert.u[i])
        .collect();
    let block1 = normal_cone_distance(&q, &w)?;

    let mut g = vec![0.0; program.n()];
    for (qi, f) in q.as_slice().iter().zip(program.scenarios()) {
        let gi = f
            .gradient(x)
            .ok_or_else(|| Error::MissingGradient(format!("{} at {x:?}", f.label())))?;
        for (a, b) in g.iter_mut().zip(gi) {
            *a += qi * b;
        }
    }
    let block2 = match f0 {
        F0Geometry::Smooth => {
            let g0 = program
                .f0()
                .gradient(x)
                .ok_or_else(|| Error::MissingGradient(format!("f0 at {x:?}")))?;
            g.iter().zip(&g0).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt()
        }
        F0Geometry::Box { lower, upper } => {
            Error::check_len("box", program.n(), lower.len())?;
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            box_normal_cone_distance(lower, upper, x, &neg)
        }
    };
    Ok(ResidualReport {
        u: pert.u.clone(),
        x: x.to_vec(),
        block1,
        block2,
        total: block1.max(block2),
    })
}
