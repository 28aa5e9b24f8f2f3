// SPDX-License-Identifier: Apache-2.0

//! The negative regularizer obtained by eliminating the probability
//! perturbation in closed form, and the smoothed composite term obtained by
//! eliminating the constraint perturbation.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::extreal::{ExtReal, StochasticProgram};
use crate::simplex::{dot, project_to_simplex, simplex_threshold, ProbVector};

type CostFn = dyn Fn(&[f64]) -> Vec<ExtReal> + Send + Sync;
type JacobianFn = dyn Fn(&[f64]) -> Option<Vec<Vec<f64>>> + Send + Sync;

/// `(pᵛ, θᵛ, yᵛ)` together with the scenario map `F` and its Jacobian.
#[derive(Clone)]
pub struct RegularizerContext {
    p_nu: ProbVector,
    theta: f64,
    y: Vec<f64>,
    costs: Arc<CostFn>,
    jacobian: Option<Arc<JacobianFn>>,
}

impl fmt::Debug for RegularizerContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegularizerContext")
            .field("p_nu", &self.p_nu)
            .field("theta", &self.theta)
            .field("y", &self.y)
            .field("has_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl RegularizerContext {
    pub fn new<F>(p_nu: ProbVector, theta: f64, y: Vec<f64>, costs: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<ExtReal> + Send + Sync + 'static,
    {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "regularizer weight must be positive and finite, got {theta}"
            )));
        }
        Error::check_len("tilt vector", p_nu.len(), y.len())?;
        Ok(RegularizerContext {
            p_nu,
            theta,
            y,
            costs: Arc::new(costs),
            jacobian: None,
        })
    }

    /// `jacobian(x)[i]` is `∇fᵢ(x)`.
    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&[f64]) -> Option<Vec<Vec<f64>>> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    /// Context for the scenario functions of `program`; the Jacobian is
    /// attached when every scenario declares a gradient.
    pub fn from_program(
        program: &StochasticProgram,
        p_nu: ProbVector,
        theta: f64,
        y: Vec<f64>,
    ) -> Result<Self> {
        Error::check_len("probability vector", program.s(), p_nu.len())?;
        let scen = program.scenarios().to_vec();
        let ctx = RegularizerContext::new(p_nu, theta, y, {
            let scen = scen.clone();
            move |x| scen.iter().map(|f| f.eval(x)).collect()
        })?;
        if scen.iter().all(|f| f.has_gradient()) {
            Ok(ctx.with_jacobian(move |x| scen.iter().map(|f| f.gradient(x)).collect()))
        } else {
            Ok(ctx)
        }
    }

    pub fn p_nu(&self) -> &ProbVector {
        &self.p_nu
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn costs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let raw = (self.costs)(x);
        Error::check_len("scenario values", self.p_nu.len(), raw.len())?;
        raw.iter()
            .enumerate()
            .map(|(i, v)| {
                v.finite().ok_or_else(|| {
                    Error::NonFinite(format!("scenario {} is {v} at x = {x:?}", i + 1))
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularizerResult {
    pub value: f64,
    pub u_star: Vec<f64>,
    pub w_hat: Vec<f64>,
    pub q_star: ProbVector,
    /// Smallest gap between a projection argument and the threshold; the
    /// active set of `q_star` is locally constant when this is positive.
    pub active_margin: f64,
}

/// `rᵛ(x)`, computed by projecting `pᵛ + c/θ` onto the simplex with
/// `c = yᵛ − F(x)`.
pub fn negative_regularizer(ctx: &RegularizerContext, x: &[f64]) -> Result<RegularizerResult> {
    let f = ctx.costs(x)?;
    let c: Vec<f64> = ctx.y.iter().zip(&f).map(|(y, fi)| y - fi).collect();
    regularizer_from_tilted_costs(&ctx.p_nu, ctx.theta, &c)
}

/// Same as [`negative_regularizer`] with `c = yᵛ − F(x)` supplied directly.
pub fn regularizer_from_tilted_costs(
    p_nu: &ProbVector,
    theta: f64,
    c: &[f64],
) -> Result<RegularizerResult> {
    Error::check_len("tilted costs", p_nu.len(), c.len())?;
    let z: Vec<f64> = p_nu
        .as_slice()
        .iter()
        .zip(c)
        .map(|(p, ci)| p + ci / theta)
        .collect();
    let q_star = project_to_simplex(&z)?;
    let tau = simplex_threshold(&z);
    let active_margin = z
        .iter()
        .map(|zi| (zi - tau).abs())
        .fold(f64::INFINITY, f64::min);
    let u_star: Vec<f64> = q_star
        .as_slice()
        .iter()
        .zip(p_nu.as_slice())
        .map(|(q, p)| q - p)
        .collect();
    let value = dot(c, &u_star) - 0.5 * theta * dot(&u_star, &u_star);
    let w_hat: Vec<f64> = c.iter().zip(&u_star).map(|(ci, ui)| ci - theta * ui).collect();
    Ok(RegularizerResult {
        // u = 0 is feasible, so the supremum is nonnegative; clip rounding
        value: value.max(0.0),
        u_star,
        w_hat,
        q_star,
        active_margin,
    })
}

/// The Moreau-envelope form
/// `min_w { max_i wᵢ − ⟨pᵛ, w⟩ + ‖c − w‖²/(2θ) }`, returned as
/// `(value, minimizer)`.
///
/// The minimizer is `w = min(c + θpᵛ, t)` where `t` solves
/// `Σ (cᵢ + θpᵢᵛ − t)₊ = θ`; `t` is found by bisection.
pub fn envelope_form(p_nu: &ProbVector, theta: f64, c: &[f64]) -> Result<(f64, Vec<f64>)> {
    Error::check_len("tilted costs", p_nu.len(), c.len())?;
    let z: Vec<f64> = c
        .iter()
        .zip(p_nu.as_slice())
        .map(|(ci, p)| ci + theta * p)
        .collect();
    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let excess = |t: f64| z.iter().map(|zi| (zi - t).max(0.0)).sum::<f64>();
    let (mut lo, mut hi) = (zmax - theta, zmax);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > theta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let w: Vec<f64> = z.iter().map(|zi| zi.min(t)).collect();
    let wmax = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let resid: f64 = c.iter().zip(&w).map(|(ci, wi)| (ci - wi) * (ci - wi)).sum();
    let value = wmax - dot(p_nu.as_slice(), &w) + resid / (2.0 * theta);
    Ok((value, w))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularizerGradient {
    pub gradient: Vec<f64>,
    /// False when the projection's active set is degenerate at `x`; the
    /// vector is then one element of the subdifferential.
    pub stable: bool,
}

/// `∇rᵛ(x) = −(1/θᵛ) ∇F(x)ᵀ (yᵛ − F(x) − ŵ(x))`.
pub fn negative_regularizer_gradient(
    ctx: &RegularizerContext,
    x: &[f64],
) -> Result<RegularizerGradient> {
    let jac = ctx
        .jacobian
        .as_ref()
        .ok_or_else(|| Error::MissingGradient("regularizer context has no Jacobian".into()))?;
    let rows = jac(x).ok_or_else(|| {
        Error::MissingGradient(format!("Jacobian not declared valid at x = {x:?}"))
    })?;
    Error::check_len("Jacobian rows", ctx.p_nu.len(), rows.len())?;
    let r = negative_regularizer(ctx, x)?;
    let f = ctx.costs(x)?;
    let n = x.len();
    let mut g = vec![0.0; n];
    for (i, row) in rows.iter().enumerate() {
        Error::check_len("Jacobian row", n, row.len())?;
        let coef = -(ctx.y[i] - f[i] - r.w_hat[i]) / ctx.theta;
        for (gk, dk) in g.iter_mut().zip(row) {
            *gk += coef * dk;
        }
    }
    Ok(RegularizerGradient {
        gradient: g,
        stable: r.active_margin > 1e-9,
    })
}

/// Smoothed upper-bound indicator `hᵛ` for `h = ι_{(−∞, b]}`:
/// `ŵₖ = max(0, yₖ + θ(vₖ − bₖ))` and
/// `hᵛ(v) = Σₖ (vₖ − bₖ)ŵₖ − (yₖ − ŵₖ)²/(2θ)`. Returns `(value, ŵ)`; `ŵ` is
/// also `∇hᵛ(v)`.
pub fn smoothed_constraint(b: &[f64], theta: f64, y: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_theta(theta)?;
    Error::check_len("tilt", b.len(), y.len())?;
    Error::check_len("constraint value", b.len(), v.len())?;
    let mut value = 0.0;
    let mut w_hat = Vec::with_capacity(b.len());
    for k in 0..b.len() {
        let slack = v[k] - b[k];
        let w = (y[k] + theta * slack).max(0.0);
        value += slack * w - (y[k] - w) * (y[k] - w) / (2.0 * theta);
        w_hat.push(w);
    }
    Ok((value, w_hat))
}

/// Caller-supplied description of a proper lsc convex `h` through its
/// conjugate.
pub trait ConjugateProx {
    /// `argmin_w { h*(w) + ‖w − point‖²/(2·weight) }`.
    fn prox(&self, point: &[f64], weight: f64) -> Result<Vec<f64>>;
    /// `h*(w)`.
    fn conjugate(&self, w: &[f64]) -> ExtReal;
}

/// `h = ι_{(−∞, b]}`; `h*(w) = ⟨b, w⟩ + ι_{w ≥ 0}`.
#[derive(Clone, Debug)]
pub struct UpperBoundIndicator {
    pub bound: Vec<f64>,
}

impl ConjugateProx for UpperBoundIndicator {
    fn prox(&self, point: &[f64], weight: f64) -> Result<Vec<f64>> {
        Error::check_len("prox point", self.bound.len(), point.len())?;
        Ok(point
            .iter()
            .zip(&self.bound)
            .map(|(z, b)| (z - weight * b).max(0.0))
            .collect())
    }

    fn conjugate(&self, w: &[f64]) -> ExtReal {
        if w.iter().any(|&wk| wk < 0.0) {
            ExtReal::PosInf
        } else {
            ExtReal::Finite(dot(&self.bound, w))
        }
    }
}

/// `h = ⟨a, ·⟩`; `h*` is the indicator of `{a}`.
#[derive(Clone, Debug)]
pub struct LinearFunctional {
    pub coef: Vec<f64>,
}

impl ConjugateProx for LinearFunctional {
    fn prox(&self, point: &[f64], _weight: f64) -> Result<Vec<f64>> {
        Error::check_len("prox point", self.coef.len(), point.len())?;
        Ok(self.coef.clone())
    }

    fn conjugate(&self, w: &[f64]) -> ExtReal {
        if w == self.coef.as_slice() {
            ExtReal::ZERO
        } else {
            ExtReal::PosInf
        }
    }
}

/// `hᵛ(v) = −min_w { h*(w) − ⟨v, w⟩ + ‖yᵛ − w‖²/(2θ) }` through the oracle:
/// the minimizer is the conjugate prox at `yᵛ + θv` with weight `θ`.
pub fn smoothed_constraint_generic(
    oracle: &dyn ConjugateProx,
    theta: f64,
    y: &[f64],
    v: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_theta(theta)?;
    Error::check_len("constraint value", y.len(), v.len())?;
    let point: Vec<f64> = y.iter().zip(v).map(|(yk, vk)| yk + theta * vk).collect();
    let w_hat = oracle.prox(&point, theta)?;
    Error::check_len("prox output", y.len(), w_hat.len())?;
    let conj = oracle.conjugate(&w_hat).finite().ok_or_else(|| {
        Error::Oracle(format!("conjugate is not finite at the prox output {w_hat:?}"))
    })?;
    let resid: f64 = y.iter().zip(&w_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    let value = -(conj - dot(v, &w_hat) + resid / (2.0 * theta));
    Ok((value, w_hat))
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "smoothing weight must be positive and finite, got {theta}"
        )))
    }
}
