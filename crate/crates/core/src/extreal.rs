// SPDX-License-Identifier: Apache-2.0

//! Extended-real arithmetic and the finite-support scenario program.
//!
//! Arithmetic follows the conventions used throughout the crate:
//! `0 · (±∞) = 0` and `∞ − ∞ = ∞`, so sums and products are total and never
//! produce NaN. A scenario value of `+∞` marks a decision outside the
//! scenario's domain (an induced constraint); a zero weight annihilates it.

use std::fmt;
use std::ops::{Add, Mul, Neg};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::simplex::ProbVector;

/// A value in `[-∞, +∞]`.
///
/// The derived ordering is the natural one: `NegInf < Finite(_) < PosInf`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// Lossy conversion to `f64` with infinities mapped to `f64::INFINITY` and
    /// `f64::NEG_INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if other > self {
            other
        } else {
            self
        }
    }

    /// `self − other` under the convention `∞ − ∞ = ∞`.
    pub fn sub(self, other: ExtReal) -> ExtReal {
        self + (-other)
    }
}

/// NaN has no extended-real meaning; it is read as "outside the domain" and
/// mapped to `+∞`.
impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        if v.is_nan() || v == f64::INFINITY {
            ExtReal::PosInf
        } else if v == f64::NEG_INFINITY {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(v)
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => write!(f, "-inf"),
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => write!(f, "inf"),
        }
    }
}

/// Finite values serialize as numbers, infinities as the strings `"inf"`
/// and `"-inf"` (JSON has no infinite numbers).
impl serde::Serialize for ExtReal {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => ser.serialize_f64(*v),
            ExtReal::PosInf => ser.serialize_str("inf"),
            ExtReal::NegInf => ser.serialize_str("-inf"),
        }
    }
}

impl<'de> serde::Deserialize<'de> for ExtReal {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(de)? {
            Repr::Number(v) => Ok(ExtReal::from(v)),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(ExtReal::PosInf),
                "-inf" => Ok(ExtReal::NegInf),
                other => Err(serde::de::Error::custom(format!(
                    "expected a number, \"inf\" or \"-inf\", found {other:?}"
                ))),
            },
        }
    }
}

impl Neg for ExtReal {
    type Output = ExtReal;
    fn neg(self) -> ExtReal {
        match self {
            ExtReal::NegInf => ExtReal::PosInf,
            ExtReal::Finite(v) => ExtReal::Finite(-v),
            ExtReal::PosInf => ExtReal::NegInf,
        }
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        use ExtReal::*;
        match (self, rhs) {
            (PosInf, _) | (_, PosInf) => PosInf,
            (NegInf, _) | (_, NegInf) => NegInf,
            // finite overflow saturates to the matching infinity
            (Finite(a), Finite(b)) => ExtReal::from(a + b),
        }
    }
}

impl Mul for ExtReal {
    type Output = ExtReal;
    fn mul(self, rhs: ExtReal) -> ExtReal {
        use ExtReal::*;
        match (self, rhs) {
            (Finite(a), Finite(b)) => ExtReal::from(a * b),
            (Finite(c), inf) | (inf, Finite(c)) => {
                if c == 0.0 {
                    Finite(0.0)
                } else if (c > 0.0) == (inf == PosInf) {
                    PosInf
                } else {
                    NegInf
                }
            }
            (a, b) => {
                if a == b {
                    PosInf
                } else {
                    NegInf
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CombineOp {
    Add,
    Mul,
}

pub fn ext_combine(op: CombineOp, a: ExtReal, b: ExtReal) -> ExtReal {
    match op {
        CombineOp::Add => a + b,
        CombineOp::Mul => a * b,
    }
}

/// `weight ⊗ value` for a real weight.
pub fn scale(weight: f64, value: ExtReal) -> ExtReal {
    ExtReal::Finite(weight) * value
}

type EvalFn = dyn Fn(&[f64]) -> ExtReal + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Option<Vec<f64>> + Send + Sync;

/// One of `f₀, f₁, …, f_s`: an extended-real function on `ℝⁿ`, optionally
/// with a gradient.
///
/// The gradient closure returns `None` outside the region where the caller
/// declares it valid, which lets discontinuous functions (Heaviside
/// compositions, indicators) carry gradients on the open pieces where they
/// are smooth.
#[derive(Clone)]
pub struct ScenarioFunction {
    label: String,
    eval: Arc<EvalFn>,
    grad: Option<Arc<GradFn>>,
    smooth: bool,
}

impl fmt::Debug for ScenarioFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScenarioFunction")
            .field("label", &self.label)
            .field("has_gradient", &self.grad.is_some())
            .field("smooth", &self.smooth)
            .finish()
    }
}

impl ScenarioFunction {
    pub fn new<F>(label: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> ExtReal + Send + Sync + 'static,
    {
        ScenarioFunction {
            label: label.into(),
            eval: Arc::new(eval),
            grad: None,
            smooth: false,
        }
    }

    /// Attaches a gradient that is valid everywhere it returns `Some`, and
    /// marks the function smooth.
    pub fn with_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(&[f64]) -> Option<Vec<f64>> + Send + Sync + 'static,
    {
        self.grad = Some(Arc::new(grad));
        self.smooth = true;
        self
    }

    /// Attaches a gradient valid only on part of the domain without claiming
    /// global smoothness.
    pub fn with_piecewise_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(&[f64]) -> Option<Vec<f64>> + Send + Sync + 'static,
    {
        self.grad = Some(Arc::new(grad));
        self.smooth = false;
        self
    }

    /// The identically zero function.
    pub fn zero(n: usize) -> Self {
        ScenarioFunction::new("zero", |_| ExtReal::ZERO).with_gradient(move |_| Some(vec![0.0; n]))
    }

    /// Indicator of the box `[lower, upper]`.
    pub fn indicator_box(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let n = lower.len();
        let (lo, hi) = (lower.clone(), upper.clone());
        ScenarioFunction::new("indicator-box", move |x| {
            let inside = x
                .iter()
                .zip(lower.iter().zip(&upper))
                .all(|(&xi, (&l, &u))| xi >= l && xi <= u);
            if inside {
                ExtReal::ZERO
            } else {
                ExtReal::PosInf
            }
        })
        // zero on the closed box: the gradient of the restriction, with the
        // boundary handled by the caller's normal cone or projection
        .with_piecewise_gradient(move |x| {
            let inside = x
                .iter()
                .zip(lo.iter().zip(&hi))
                .all(|(&xi, (&l, &u))| xi >= l && xi <= u);
            inside.then(|| vec![0.0; n])
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: &[f64]) -> ExtReal {
        (self.eval)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.grad.as_ref().and_then(|g| g(x))
    }

    pub fn has_gradient(&self) -> bool {
        self.grad.is_some()
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    /// Checks properness on a set of probe points: never `−∞`, finite at
    /// least once.
    pub fn check_proper(&self, probes: &[Vec<f64>]) -> Result<()> {
        let mut finite_somewhere = false;
        for x in probes {
            match self.eval(x) {
                ExtReal::NegInf => {
                    return Err(Error::Improper(format!(
                        "`{}` evaluates to -inf at {x:?}",
                        self.label
                    )))
                }
                ExtReal::Finite(_) => finite_somewhere = true,
                ExtReal::PosInf => {}
            }
        }
        if finite_somewhere || probes.is_empty() {
            Ok(())
        } else {
            Err(Error::Improper(format!(
                "`{}` is +inf at every probe point",
                self.label
            )))
        }
    }

    /// Largest absolute deviation between the declared gradient and central
    /// differences at `x`, or `None` when no gradient is declared there or a
    /// stencil point leaves the finite region.
    pub fn gradient_fd_error(&self, x: &[f64], h: f64) -> Option<f64> {
        let g = self.gradient(x)?;
        let mut worst = 0.0f64;
        let mut probe = x.to_vec();
        for k in 0..x.len() {
            probe[k] = x[k] + h;
            let up = self.eval(&probe).finite()?;
            probe[k] = x[k] - h;
            let down = self.eval(&probe).finite()?;
            probe[k] = x[k];
            worst = worst.max(((up - down) / (2.0 * h) - g[k]).abs());
        }
        Some(worst)
    }
}

/// The map `g(ξ, x)` generating scenario functions from support points.
pub trait SupportGenerator: Send + Sync {
    fn eval(&self, xi: &[f64], x: &[f64]) -> ExtReal;

    /// Exact minimizer over `v` of `weight · g(ξ + v, x) + ½ λ ‖v‖²`, when the
    /// generator knows one in closed form.
    fn support_step(&self, _weight: f64, _lambda: f64, _xi: &[f64], _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Gradient in `x`, where valid.
    fn gradient(&self, _xi: &[f64], _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Whether [`SupportGenerator::gradient`] is implemented, and whether it
    /// is valid everywhere (`Some(true)`) or only piecewise (`Some(false)`).
    fn gradient_kind(&self) -> Option<bool> {
        None
    }
}

impl<F> SupportGenerator for F
where
    F: Fn(&[f64], &[f64]) -> ExtReal + Send + Sync,
{
    fn eval(&self, xi: &[f64], x: &[f64]) -> ExtReal {
        self(xi, x)
    }
}

#[derive(Clone)]
pub struct Support {
    pub points: Vec<Vec<f64>>,
    pub generator: Arc<dyn SupportGenerator>,
}

impl Support {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }
}

/// Expectation maps `Σᵢ wᵢ Gᵢ(x)` feeding a composite term `h(·)`.
///
/// Components may depend on the weights themselves (a centred covariate such
/// as `z − E_w[z]`), so both the aggregate and its linearisation at the
/// current weights are exposed.
pub trait ConstraintMap: Send + Sync {
    fn dim(&self) -> usize;

    /// Per-scenario components `G_i(x)` with any weight-dependent terms frozen
    /// at `weights`; `result[i][k]` is component `k` of scenario `i`.
    fn components(&self, weights: &[f64], x: &[f64]) -> Vec<Vec<f64>>;

    fn aggregate(&self, weights: &[f64], x: &[f64]) -> Vec<f64> {
        let comps = self.components(weights, x);
        let mut out = vec![0.0; self.dim()];
        for (w, g) in weights.iter().zip(&comps) {
            for (o, gk) in out.iter_mut().zip(g) {
                *o += w * gk;
            }
        }
        out
    }
}

/// Expectation constraints `Σᵢ wᵢ Gᵢ(x) ≤ b`, i.e. `h = ι_{(−∞, b]}` composed
/// with the expectation map.
#[derive(Clone)]
pub struct CompositeBlock {
    pub map: Arc<dyn ConstraintMap>,
    pub bound: Vec<f64>,
}

/// Slack granted to `v ≤ b` so that values equal to the bound up to rounding
/// count as feasible.
pub const CONSTRAINT_SLACK: f64 = 1e-12;

impl CompositeBlock {
    pub fn dim(&self) -> usize {
        self.bound.len()
    }

    /// `h(v)` for the upper-bound indicator.
    pub fn h(&self, v: &[f64]) -> ExtReal {
        let ok = v
            .iter()
            .zip(&self.bound)
            .all(|(&vk, &bk)| vk <= bk + CONSTRAINT_SLACK * (1.0 + bk.abs()));
        if ok {
            ExtReal::ZERO
        } else {
            ExtReal::PosInf
        }
    }
}

/// `minimize f₀(x) + Σᵢ pᵢ fᵢ(x)` (plus an optional composite term) over
/// `x ∈ ℝⁿ`.
#[derive(Clone)]
pub struct StochasticProgram {
    n: usize,
    f0: ScenarioFunction,
    scenarios: Vec<ScenarioFunction>,
    support: Option<Support>,
    composite: Option<CompositeBlock>,
    p: ProbVector,
}

impl fmt::Debug for StochasticProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StochasticProgram")
            .field("n", &self.n)
            .field("s", &self.scenarios.len())
            .field("p", &self.p)
            .field("support", &self.support.as_ref().map(|s| &s.points))
            .field("composite", &self.composite.as_ref().map(|c| &c.bound))
            .finish()
    }
}

impl StochasticProgram {
    pub fn new(
        n: usize,
        f0: ScenarioFunction,
        scenarios: Vec<ScenarioFunction>,
        p: ProbVector,
    ) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::Empty("scenario list"));
        }
        if n == 0 {
            return Err(Error::Empty("decision dimension"));
        }
        Error::check_len("probability vector", scenarios.len(), p.len())?;
        Ok(StochasticProgram {
            n,
            f0,
            scenarios,
            support: None,
            composite: None,
            p,
        })
    }

    /// Builds `fᵢ = g(ξᵢ, ·)` from support points.
    pub fn from_support(
        n: usize,
        f0: ScenarioFunction,
        support: Support,
        p: ProbVector,
    ) -> Result<Self> {
        let scenarios = scenarios_from_support(&support);
        let mut program = StochasticProgram::new(n, f0, scenarios, p)?;
        program.support = Some(support);
        Ok(program)
    }

    pub fn with_composite(mut self, block: CompositeBlock) -> Result<Self> {
        Error::check_len("composite bound", block.map.dim(), block.bound.len())?;
        self.composite = Some(block);
        Ok(self)
    }

    /// Same functions, different probability vector.
    pub fn with_probabilities(&self, p: ProbVector) -> Result<Self> {
        Error::check_len("probability vector", self.s(), p.len())?;
        let mut out = self.clone();
        out.p = p;
        Ok(out)
    }

    /// Same generator, moved support points.
    pub fn with_support_points(&self, points: Vec<Vec<f64>>) -> Result<Self> {
        let support = self
            .support
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("program has no support".into()))?;
        Error::check_len("support points", self.s(), points.len())?;
        let support = Support {
            points,
            generator: support.generator.clone(),
        };
        let mut out = self.clone();
        out.scenarios = scenarios_from_support(&support);
        out.support = Some(support);
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.scenarios.len()
    }

    pub fn f0(&self) -> &ScenarioFunction {
        &self.f0
    }

    pub fn scenarios(&self) -> &[ScenarioFunction] {
        &self.scenarios
    }

    pub fn support(&self) -> Option<&Support> {
        self.support.as_ref()
    }

    pub fn composite(&self) -> Option<&CompositeBlock> {
        self.composite.as_ref()
    }

    pub fn p(&self) -> &ProbVector {
        &self.p
    }

    pub fn scenario_values(&self, x: &[f64]) -> Vec<ExtReal> {
        self.scenarios.iter().map(|f| f.eval(x)).collect()
    }

    /// The actual objective `f₀(x) + Σ pᵢ fᵢ(x)`.
    pub fn objective(&self, x: &[f64]) -> ExtReal {
        weighted_sum(self, self.p.as_slice(), x)
    }

    /// Composite term `h(Σ wᵢ Gᵢ(x))`, zero when there is no composite block.
    pub fn composite_term(&self, weights: &[f64], x: &[f64]) -> ExtReal {
        match &self.composite {
            Some(block) => block.h(&block.map.aggregate(weights, x)),
            None => ExtReal::ZERO,
        }
    }
}

fn scenarios_from_support(support: &Support) -> Vec<ScenarioFunction> {
    support
        .points
        .iter()
        .enumerate()
        .map(|(i, xi)| {
            let (xi, xi_g) = (xi.clone(), xi.clone());
            let (generator, gen_g) = (support.generator.clone(), support.generator.clone());
            let f = ScenarioFunction::new(format!("g(xi_{}, x)", i + 1), move |x| {
                generator.eval(&xi, x)
            });
            match gen_g.gradient_kind() {
                Some(true) => f.with_gradient(move |x| gen_g.gradient(&xi_g, x)),
                Some(false) => f.with_piecewise_gradient(move |x| gen_g.gradient(&xi_g, x)),
                None => f,
            }
        })
        .collect()
}

/// `f₀(x) ⊕ Σᵢ wᵢ ⊗ fᵢ(x)` (plus the composite term under the same weights).
pub fn weighted_objective(
    program: &StochasticProgram,
    weights: &[f64],
    x: &[f64],
) -> Result<ExtReal> {
    Error::check_len("weights", program.s(), weights.len())?;
    Error::check_len("decision point", program.n(), x.len())?;
    Ok(weighted_sum(program, weights, x))
}

pub(crate) fn weighted_sum(program: &StochasticProgram, weights: &[f64], x: &[f64]) -> ExtReal {
    let mut total = program.f0.eval(x);
    if total == ExtReal::PosInf {
        return total;
    }
    for (w, f) in weights.iter().zip(&program.scenarios) {
        total = total + scale(*w, f.eval(x));
    }
    total + program.composite_term(weights, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ExtReal::*;

    fn all() -> [ExtReal; 5] {
        [NegInf, Finite(-2.0), Finite(0.0), Finite(3.0), PosInf]
    }

    #[test]
    fn zero_times_infinity_is_zero() {
        assert_eq!(ext_combine(CombineOp::Mul, Finite(0.0), PosInf), Finite(0.0));
        assert_eq!(ext_combine(CombineOp::Mul, NegInf, Finite(0.0)), Finite(0.0));
    }

    #[test]
    fn infinity_minus_infinity_is_infinity() {
        assert_eq!(ext_combine(CombineOp::Add, PosInf, NegInf), PosInf);
        assert_eq!(PosInf.sub(PosInf), PosInf);
    }

    #[test]
    fn finite_sum() {
        assert_eq!(ext_combine(CombineOp::Add, Finite(2.0), Finite(3.0)), Finite(5.0));
    }

    #[test]
    fn signed_products() {
        assert_eq!(Finite(-2.0) * PosInf, NegInf);
        assert_eq!(Finite(-2.0) * NegInf, PosInf);
        assert_eq!(NegInf * NegInf, PosInf);
        assert_eq!(PosInf * NegInf, NegInf);
    }

    #[test]
    fn totality_and_commutativity() {
        for a in all() {
            for b in all() {
                for op in [CombineOp::Add, CombineOp::Mul] {
                    let r = ext_combine(op, a, b);
                    assert!(!r.to_f64().is_nan(), "{op:?}({a}, {b}) gave NaN");
                    assert_eq!(r, ext_combine(op, b, a));
                }
            }
        }
    }

    #[test]
    fn overflow_saturates() {
        assert_eq!(Finite(f64::MAX) + Finite(f64::MAX), PosInf);
        assert_eq!(ExtReal::from(f64::NAN), PosInf);
    }

    fn two_scenarios(values: [ExtReal; 2]) -> StochasticProgram {
        let scen = values
            .iter()
            .map(|&v| ScenarioFunction::new("const", move |_| v))
            .collect();
        StochasticProgram::new(
            1,
            ScenarioFunction::zero(1),
            scen,
            ProbVector::new(vec![0.5, 0.5]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_weight_annihilates_infinite_scenario() {
        let prog = two_scenarios([Finite(2.0), PosInf]);
        let v = weighted_objective(&prog, &[1.0, 0.0], &[0.0]).unwrap();
        assert_eq!(v, Finite(2.0));
    }

    #[test]
    fn positive_weight_on_infinity() {
        let prog = two_scenarios([Finite(3.0), PosInf]);
        let v = weighted_objective(&prog, &[0.5, 0.5], &[0.0]).unwrap();
        assert_eq!(v, PosInf);
    }

    #[test]
    fn finite_weighted_sum() {
        let prog = two_scenarios([Finite(1.0), Finite(2.0)]);
        let v = weighted_objective(&prog, &[0.3, 0.7], &[0.0]).unwrap();
        assert!((v.to_f64() - 1.7).abs() < 1e-12);
    }

    #[test]
    fn weight_length_is_checked() {
        let prog = two_scenarios([Finite(1.0), Finite(2.0)]);
        assert!(matches!(
            weighted_objective(&prog, &[1.0], &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn properness_probe_rejects_negative_infinity() {
        let f = ScenarioFunction::new("bad", |x| if x[0] > 0.0 { NegInf } else { ExtReal::ZERO });
        assert!(f.check_proper(&[vec![-1.0], vec![1.0]]).is_err());
        let g = ScenarioFunction::new("far", |_| PosInf);
        assert!(g.check_proper(&[vec![0.0]]).is_err());
    }

    #[test]
    fn gradient_check_on_quadratic() {
        let f = ScenarioFunction::new("sq", |x| Finite(x[0] * x[0] + 3.0 * x[1]))
            .with_gradient(|x| Some(vec![2.0 * x[0], 3.0]));
        assert!(f.gradient_fd_error(&[0.7, -1.0], 1e-5).unwrap() < 1e-7);
    }

    #[test]
    fn support_program_matches_generator() {
        let g = |xi: &[f64], x: &[f64]| Finite(xi[0] * x[0] + 0.5 * (1.0 - x[0]));
        let support = Support {
            points: vec![vec![0.0], vec![10.0]],
            generator: Arc::new(g),
        };
        let prog = StochasticProgram::from_support(
            1,
            ScenarioFunction::zero(1),
            support,
            ProbVector::new(vec![0.9, 0.1]).unwrap(),
        )
        .unwrap();
        assert_eq!(prog.scenarios()[1].eval(&[0.5]), Finite(5.25));
        let moved = prog.with_support_points(vec![vec![0.0], vec![20.0]]).unwrap();
        assert_eq!(moved.scenarios()[1].eval(&[0.5]), Finite(10.25));
    }
}
