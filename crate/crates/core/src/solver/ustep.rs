// SPDX-License-Identifier: Apache-2.0

//! Exact minimization over the probability perturbation at a fixed decision.

use serde::Serialize;

use crate::divergence::{divergence_raw, PhiFamily};
use crate::error::{Error, Result};
use crate::extreal::{scale, ExtReal};
use crate::rockafellian::RockafellianSpec;
use crate::simplex::{dot, project_to_face, ProbVector};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UStepResult {
    pub u: Vec<f64>,
    /// `Σ qᵢ cᵢ + penalty(u) − ⟨y, u⟩` at the minimizer, `q = pᵛ + u`.
    pub value: ExtReal,
}

/// Minimizes `Σ (pᵛ + u)ᵢ cᵢ + penalty(u) − ⟨y, u⟩` over `{u | pᵛ + u ∈ Δ}`.
///
/// Scenarios with `cᵢ = +∞` are confined to `qᵢ = 0`; when every scenario is
/// infinite the value is `+∞` and `u = 0`.
pub fn u_step(spec: &RockafellianSpec, costs: &[ExtReal], y: &[f64]) -> Result<UStepResult> {
    let (p_nu, theta) = match (spec.p_nu(), spec.theta()) {
        (Some(p), Some(t)) => (p, t),
        _ => {
            return Err(Error::InvalidParameter(
                "the exact variant has no u-step (u is pinned to 0)".into(),
            ))
        }
    };
    Error::check_len("scenario costs", p_nu.len(), costs.len())?;
    Error::check_len("tilt", p_nu.len(), y.len())?;
    if costs.contains(&ExtReal::NegInf) {
        return Err(Error::Unbounded(f64::NEG_INFINITY));
    }
    let allowed: Vec<bool> = costs.iter().map(|c| c.is_finite()).collect();
    if !allowed.iter().any(|&a| a) {
        return Ok(UStepResult {
            u: vec![0.0; p_nu.len()],
            value: ExtReal::PosInf,
        });
    }
    // tilted costs on the allowed coordinates, zero elsewhere
    let c: Vec<f64> = costs
        .iter()
        .zip(y)
        .map(|(ci, yi)| ci.finite().map_or(0.0, |v| v - yi))
        .collect();
    let q = match spec {
        RockafellianSpec::QuadraticPenalty { .. } | RockafellianSpec::SupportPerturbation { .. } => {
            quadratic_weights(p_nu, theta, &c, &allowed)?
        }
        RockafellianSpec::L1Penalty { .. } => l1_weights(p_nu, theta, &c, &allowed),
        RockafellianSpec::PhiDivergence { family, .. } => {
            if *family == PhiFamily::Variational {
                l1_weights(p_nu, theta, &c, &allowed)
            } else {
                phi_weights(*family, p_nu, theta, &c, &allowed)
            }
        }
        RockafellianSpec::ExactIndicator | RockafellianSpec::Composite { .. } => {
            return Err(Error::InvalidParameter(format!(
                "no cost-vector u-step for the {} variant",
                spec.name()
            )))
        }
    };
    let u: Vec<f64> = q.iter().zip(p_nu.as_slice()).map(|(a, b)| a - b).collect();
    let value = subproblem_value(spec, p_nu, theta, costs, y, &q, &u);
    if let RockafellianSpec::PhiDivergence { .. } = spec {
        // the anchor guards against bisection round-off near degenerate data
        let zero = vec![0.0; u.len()];
        let anchor = subproblem_value(spec, p_nu, theta, costs, y, p_nu.as_slice(), &zero);
        if anchor < value {
            return Ok(UStepResult { u: zero, value: anchor });
        }
    }
    Ok(UStepResult { u, value })
}

/// The u-subproblem objective at `q = pᵛ + u`.
pub fn subproblem_value(
    spec: &RockafellianSpec,
    p_nu: &ProbVector,
    theta: f64,
    costs: &[ExtReal],
    y: &[f64],
    q: &[f64],
    u: &[f64],
) -> ExtReal {
    let mut total = ExtReal::ZERO;
    for (qi, ci) in q.iter().zip(costs) {
        total = total + scale(*qi, *ci);
    }
    let penalty = match spec {
        RockafellianSpec::PhiDivergence { family, .. } => {
            scale(theta, divergence_raw(*family, q, p_nu.as_slice()))
        }
        RockafellianSpec::L1Penalty { .. } => {
            ExtReal::Finite(theta * u.iter().map(|v| v.abs()).sum::<f64>())
        }
        _ => ExtReal::Finite(0.5 * theta * dot(u, u)),
    };
    total + penalty + ExtReal::Finite(-dot(y, u))
}

fn cheapest(c: &[f64], allowed: &[bool]) -> usize {
    let mut best = usize::MAX;
    for i in 0..c.len() {
        if allowed[i] && (best == usize::MAX || c[i] < c[best]) {
            best = i;
        }
    }
    best
}

fn quadratic_weights(p: &ProbVector, theta: f64, c: &[f64], allowed: &[bool]) -> Result<Vec<f64>> {
    if theta == 0.0 {
        let j = cheapest(c, allowed);
        return Ok(ProbVector::vertex(c.len(), j).into_inner());
    }
    let z: Vec<f64> = p
        .as_slice()
        .iter()
        .zip(c)
        .map(|(pi, ci)| pi - ci / theta)
        .collect();
    let q = project_to_face(&z, allowed)?.expect("face is nonempty");
    Ok(q.into_inner())
}

/// `min ⟨q, c⟩ + θ‖q − p‖₁` over the face: moving a unit of mass from `i` to
/// the cheapest scenario saves `cᵢ − c_min` and costs `2θ`, so scenarios with
/// a larger spread (and excluded scenarios) hand all their mass over.
fn l1_weights(p: &ProbVector, theta: f64, c: &[f64], allowed: &[bool]) -> Vec<f64> {
    let j = cheapest(c, allowed);
    let mut q = p.as_slice().to_vec();
    for i in 0..q.len() {
        if i != j && (!allowed[i] || c[i] - c[j] > 2.0 * theta) {
            q[j] += q[i];
            q[i] = 0.0;
        }
    }
    q
}

/// Separable dual: `qᵢ(μ) = pᵢ · argmin_t {Φ(t) − t (μ − cᵢ)/θ}` for
/// `pᵢ > 0`; scenarios with `pᵢ = 0` pay `cᵢ + θ·Φ'(∞)` per unit and only
/// receive mass at the multiplier cap. `μ` is bisected until `Σ qᵢ(μ) = 1`.
fn phi_weights(
    family: PhiFamily,
    p: &ProbVector,
    theta: f64,
    c: &[f64],
    allowed: &[bool],
) -> Vec<f64> {
    let s = c.len();
    if theta == 0.0 {
        return ProbVector::vertex(s, cheapest(c, allowed)).into_inner();
    }
    let p = p.as_slice();
    let slope = family.limit_slope().finite();
    let weights = |mu: f64| -> Vec<f64> {
        (0..s)
            .map(|i| {
                if !allowed[i] || p[i] == 0.0 {
                    0.0
                } else {
                    p[i] * family.tilted_minimizer((mu - c[i]) / theta)
                }
            })
            .collect()
    };
    let total = |mu: f64| -> f64 { weights(mu).iter().sum() };
    // zero-probability scenarios become attractive once μ reaches this cap
    let mut cap = f64::INFINITY;
    let mut cap_index = usize::MAX;
    if let Some(l) = slope {
        for i in 0..s {
            if allowed[i] && p[i] == 0.0 && c[i] + theta * l < cap {
                cap = c[i] + theta * l;
                cap_index = i;
            }
        }
    }
    if cap.is_finite() && total(cap) < 1.0 {
        let mut q = weights(cap);
        let rest = 1.0 - q.iter().sum::<f64>();
        q[cap_index] += rest;
        return q;
    }
    let cmin = (0..s).filter(|&i| allowed[i]).map(|i| c[i]).fold(f64::INFINITY, f64::min);
    let cmax = (0..s).filter(|&i| allowed[i]).map(|i| c[i]).fold(f64::NEG_INFINITY, f64::max);
    let mut width = theta.max(1.0);
    let mut lo = cmin - width;
    while total(lo) >= 1.0 && width < 1e300 {
        width *= 2.0;
        lo = cmin - width;
    }
    let mut width = theta.max(1.0);
    let mut hi = (cmax + width).min(cap);
    while total(hi) < 1.0 && width < 1e300 {
        width *= 2.0;
        hi = (cmax + width).min(cap);
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut q = weights(hi);
    if q.iter().any(|v| !v.is_finite()) {
        q = weights(lo);
    }
    let sum: f64 = q.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        for v in &mut q {
            *v /= sum;
        }
    } else {
        q = ProbVector::vertex(s, cheapest(c, allowed)).into_inner();
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::grid::simplex_grid;

    fn half() -> ProbVector {
        ProbVector::new(vec![0.5, 0.5]).unwrap()
    }

    fn fin(v: &[f64]) -> Vec<ExtReal> {
        v.iter().map(|&x| ExtReal::Finite(x)).collect()
    }

    #[test]
    fn quadratic_example() {
        let spec = RockafellianSpec::quadratic(half(), 1.0);
        let r = u_step(&spec, &fin(&[1.0, 0.0]), &[0.0, 0.0]).unwrap();
        assert_eq!(r.u, vec![-0.5, 0.5]);
        // ⟨q, c⟩ = 0, penalty ½‖u‖² = 0.25
        assert_eq!(r.value, ExtReal::Finite(0.25));
    }

    #[test]
    fn l1_example() {
        let spec = RockafellianSpec::L1Penalty {
            p_nu: half(),
            theta: 1.0,
            tilt: vec![0.0; 2],
        };
        let r = u_step(&spec, &fin(&[0.0, -10.0]), &[0.0, 0.0]).unwrap();
        assert_eq!(r.u, vec![-0.5, 0.5]);
    }

    #[test]
    fn constant_costs_keep_anchor() {
        let p = ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let specs = [
            RockafellianSpec::quadratic(p.clone(), 2.0),
            RockafellianSpec::L1Penalty {
                p_nu: p.clone(),
                theta: 0.5,
                tilt: vec![0.0; 3],
            },
            RockafellianSpec::PhiDivergence {
                p_nu: p.clone(),
                theta: 1.0,
                tilt: vec![0.0; 3],
                family: PhiFamily::KullbackLeibler,
            },
        ];
        for spec in &specs {
            let r = u_step(spec, &fin(&[4.0, 4.0, 4.0]), &[0.0; 3]).unwrap();
            assert!(r.u.iter().all(|v| v.abs() < 1e-12), "{}: {:?}", spec.name(), r.u);
        }
    }

    #[test]
    fn infinite_scenario_loses_its_mass() {
        let spec = RockafellianSpec::quadratic(half(), 1.0);
        let r = u_step(&spec, &[ExtReal::PosInf, ExtReal::Finite(0.0)], &[0.0; 2]).unwrap();
        assert_eq!(r.u, vec![-0.5, 0.5]);
        assert_eq!(r.value, ExtReal::Finite(0.25));
        let r = u_step(&spec, &[ExtReal::PosInf, ExtReal::PosInf], &[0.0; 2]).unwrap();
        assert_eq!(r.value, ExtReal::PosInf);
    }

    fn grid_min(spec: &RockafellianSpec, costs: &[ExtReal], step: f64) -> f64 {
        let p = spec.p_nu().unwrap();
        let theta = spec.theta().unwrap();
        let y = vec![0.0; costs.len()];
        simplex_grid(costs.len(), step)
            .unwrap()
            .iter()
            .map(|q| {
                let u: Vec<f64> = q.iter().zip(p.as_slice()).map(|(a, b)| a - b).collect();
                subproblem_value(spec, p, theta, costs, &y, q, &u).to_f64()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn phi_and_l1_match_grid() {
        let p = ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let costs = fin(&[1.0, -0.5, 0.3]);
        for family in PhiFamily::ALL {
            let spec = RockafellianSpec::PhiDivergence {
                p_nu: p.clone(),
                theta: 0.7,
                tilt: vec![0.0; 3],
                family,
            };
            let r = u_step(&spec, &costs, &[0.0; 3]).unwrap();
            let g = grid_min(&spec, &costs, 2e-3);
            assert!(r.value.to_f64() <= g + 1e-9, "{family}: {} > {g}", r.value);
            assert!(r.value.to_f64() >= g - 1e-3, "{family}: {} << {g}", r.value);
        }
    }

    #[test]
    fn zero_probability_scenario_absorbs_mass() {
        // p₃ = 0 with a very low cost: finite-slope families move mass there
        let p = ProbVector::new(vec![0.5, 0.5, 0.0]).unwrap();
        let costs = fin(&[1.0, 1.0, -5.0]);
        for family in [PhiFamily::Hellinger, PhiFamily::ModifiedChiSquared] {
            let spec = RockafellianSpec::PhiDivergence {
                p_nu: p.clone(),
                theta: 1.0,
                tilt: vec![0.0; 3],
                family,
            };
            let r = u_step(&spec, &costs, &[0.0; 3]).unwrap();
            let g = grid_min(&spec, &costs, 1e-3);
            assert!(r.u[2] > 0.0, "{family}");
            assert!((r.value.to_f64() - g).abs() < 1e-3, "{family}: {} vs {g}", r.value);
            assert!(r.value.to_f64() <= g + 1e-9);
        }
    }
}
