// SPDX-License-Identifier: Apache-2.0

//! JSON instance documents and their resolution into programs.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::extreal::{CompositeBlock, ScenarioFunction, StochasticProgram, Support};
use crate::instances::catalog::{self, FairnessCovariance, MeanMode, ScenarioAffine};
use crate::simplex::ProbVector;

/// One formula from the catalog: `{"tag": ..., "params": {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormulaSpec {
    pub tag: String,
    #[serde(default)]
    pub params: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportSpec {
    pub points: Vec<Vec<f64>>,
    pub generator: FormulaSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CompositeSpec {
    FairnessCovariance {
        features: Vec<Vec<f64>>,
        sensitive: Vec<f64>,
        bound: f64,
        #[serde(default = "default_mean_mode")]
        mean_mode: MeanMode,
    },
    ScenarioAffine {
        rows: Vec<Vec<Vec<f64>>>,
        constants: Vec<Vec<f64>>,
        bound: Vec<f64>,
    },
}

fn default_mean_mode() -> MeanMode {
    MeanMode::Perturbed
}

/// How the approximating data depend on `ν`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PerturbationSpec {
    /// `pᵛ = p`.
    None,
    /// `pᵛ` moves `min(1/ν, p_from)` from scenario `from` to `to`.
    ShiftMass { from: usize, to: usize },
    /// `pᵛ` is the empirical distribution of `ν` seeded draws from `p`.
    Empirical,
    /// `pᵛ` given explicitly, independent of `ν`.
    Fixed { p_nu: Vec<f64> },
    /// Support point `scenario` moves by `direction / ν`.
    SupportShift { scenario: usize, direction: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XMethodHint {
    Grid,
    ProjectedGradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub name: String,
    pub n: usize,
    pub s: usize,
    #[serde(default)]
    pub f0: Option<FormulaSpec>,
    #[serde(default)]
    pub scenarios: Option<Vec<FormulaSpec>>,
    #[serde(default)]
    pub support: Option<SupportSpec>,
    pub p: Vec<f64>,
    #[serde(rename = "box")]
    pub bounds: BoxSpec,
    #[serde(default)]
    pub composite: Option<CompositeSpec>,
    pub perturbation: PerturbationSpec,
    #[serde(default)]
    pub x_method: Option<XMethodHint>,
    #[serde(default)]
    pub grid_step: Option<f64>,
}

/// A validated configuration with its actual program built.
#[derive(Clone, Debug)]
pub struct InstanceDef {
    pub config: InstanceConfig,
    pub actual: StochasticProgram,
}

impl InstanceConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn params<T: for<'de> Deserialize<'de>>(field: &str, value: &Value) -> Result<T> {
    serde_json::from_value(value.clone()).map_err(|e| Error::config(field, e.to_string()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearParams {
    coef: Vec<f64>,
    #[serde(default)]
    constant: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticParams {
    scale: f64,
    center: Vec<f64>,
    #[serde(default)]
    constant: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HingeParams {
    features: Vec<f64>,
    label: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeavisideParams {
    coef: Vec<f64>,
    #[serde(default)]
    offset: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxParams {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CrossEntropyParams {
    features: Vec<f64>,
    label: u8,
    #[serde(default)]
    saturate: bool,
}

/// Resolves one catalog formula on `ℝⁿ`.
pub fn build_formula(field: &str, spec: &FormulaSpec, n: usize) -> Result<ScenarioFunction> {
    let dim = |what: &str, got: usize, want: usize| -> Result<()> {
        if got == want {
            Ok(())
        } else {
            Err(Error::config(
                format!("{field}.params.{what}"),
                format!("expected length {want}, found {got}"),
            ))
        }
    };
    let field_p = format!("{field}.params");
    match spec.tag.as_str() {
        "linear" => {
            let p: LinearParams = params(&field_p, &spec.params)?;
            dim("coef", p.coef.len(), n)?;
            Ok(catalog::linear(p.coef, p.constant))
        }
        "quadratic" => {
            let p: QuadraticParams = params(&field_p, &spec.params)?;
            dim("center", p.center.len(), n)?;
            Ok(catalog::quadratic(p.scale, p.center, p.constant))
        }
        "hinge" => {
            let p: HingeParams = params(&field_p, &spec.params)?;
            dim("features", p.features.len() + 1, n)?;
            Ok(catalog::hinge(p.features, p.label))
        }
        "heaviside-composite" => {
            let p: HeavisideParams = params(&field_p, &spec.params)?;
            dim("coef", p.coef.len(), n)?;
            Ok(catalog::heaviside_composite(p.coef, p.offset))
        }
        "indicator-box" => {
            let p: BoxParams = params(&field_p, &spec.params)?;
            dim("lower", p.lower.len(), n)?;
            dim("upper", p.upper.len(), n)?;
            Ok(ScenarioFunction::indicator_box(p.lower, p.upper))
        }
        "cross-entropy" => {
            let p: CrossEntropyParams = params(&field_p, &spec.params)?;
            dim("features", p.features.len(), n)?;
            if p.label > 1 {
                return Err(Error::config(format!("{field_p}.label"), "labels are 0 or 1"));
            }
            Ok(catalog::cross_entropy(p.features, p.label, p.saturate))
        }
        "zero" => Ok(ScenarioFunction::zero(n)),
        other => Err(Error::config(
            format!("{field}.tag"),
            format!("unknown formula tag `{other}`"),
        )),
    }
}

fn build_generator(spec: &FormulaSpec, n: usize) -> Result<Arc<dyn crate::extreal::SupportGenerator>> {
    let field = "support.generator.params";
    match spec.tag.as_str() {
        "bilinear" => {
            let p: HeavisideParams = params(field, &spec.params)?;
            if p.coef.len() != n {
                return Err(Error::config(field, format!("coef must have length {n}")));
            }
            Ok(catalog::generator_arc(catalog::Bilinear {
                coef: p.coef,
                offset: p.offset,
            }))
        }
        "heaviside-affine" => {
            let p: HeavisideParams = params(field, &spec.params)?;
            if p.coef.len() != n {
                return Err(Error::config(field, format!("coef must have length {n}")));
            }
            Ok(catalog::generator_arc(catalog::HeavisideAffine {
                coef: p.coef,
                offset: p.offset,
            }))
        }
        other => Err(Error::config(
            "support.generator.tag",
            format!("unknown generator `{other}`"),
        )),
    }
}

/// Validates `config` and builds its actual program.
pub fn build_from_config(config: &InstanceConfig) -> Result<InstanceDef> {
    let (n, s) = (config.n, config.s);
    if n == 0 {
        return Err(Error::config("n", "must be positive"));
    }
    if s == 0 {
        return Err(Error::config("s", "must be positive"));
    }
    if config.p.len() != s {
        return Err(Error::config("p", format!("expected {s} entries, found {}", config.p.len())));
    }
    let p = ProbVector::new(config.p.clone()).map_err(|e| Error::config("p", e.to_string()))?;
    let b = &config.bounds;
    if b.lower.len() != n || b.upper.len() != n {
        return Err(Error::config("box", format!("corners must have length {n}")));
    }
    if b.lower.iter().zip(&b.upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
        return Err(Error::config("box", "need finite lower <= upper"));
    }
    if let Some(step) = config.grid_step {
        if !(step > 0.0) {
            return Err(Error::config("grid_step", "must be positive"));
        }
    }
    let f0 = match &config.f0 {
        Some(f) => build_formula("f0", f, n)?,
        None => ScenarioFunction::zero(n),
    };
    let mut program = match (&config.scenarios, &config.support) {
        (Some(list), None) => {
            if list.len() != s {
                return Err(Error::config(
                    "scenarios",
                    format!("expected {s} entries, found {}", list.len()),
                ));
            }
            let fs = list
                .iter()
                .enumerate()
                .map(|(i, f)| build_formula(&format!("scenarios[{i}]"), f, n))
                .collect::<Result<Vec<_>>>()?;
            StochasticProgram::new(n, f0, fs, p.clone())?
        }
        (None, Some(sup)) => {
            if sup.points.len() != s {
                return Err(Error::config(
                    "support.points",
                    format!("expected {s} points, found {}", sup.points.len()),
                ));
            }
            let m = sup.points[0].len();
            if m == 0 || sup.points.iter().any(|pt| pt.len() != m) {
                return Err(Error::config("support.points", "points must share a positive dimension"));
            }
            if sup.generator.tag == "bilinear" && m != n {
                return Err(Error::config(
                    "support.points",
                    format!("the bilinear generator needs points of length n = {n}"),
                ));
            }
            let support = Support {
                points: sup.points.clone(),
                generator: build_generator(&sup.generator, n)?,
            };
            StochasticProgram::from_support(n, f0, support, p.clone())?
        }
        _ => {
            return Err(Error::config(
                "scenarios",
                "give exactly one of `scenarios` or `support`",
            ))
        }
    };
    if let Some(c) = &config.composite {
        let block = match c {
            CompositeSpec::FairnessCovariance {
                features,
                sensitive,
                bound,
                mean_mode,
            } => {
                if features.len() != s || features.iter().any(|f| f.len() + 1 != n) {
                    return Err(Error::config(
                        "composite.params.features",
                        format!("need {s} feature vectors of length n - 1"),
                    ));
                }
                let map = FairnessCovariance::new(features.clone(), sensitive.clone(), *mean_mode, p.as_slice())
                    .map_err(|e| Error::config("composite.params", e.to_string()))?;
                CompositeBlock {
                    map: Arc::new(map),
                    bound: vec![*bound],
                }
            }
            CompositeSpec::ScenarioAffine {
                rows,
                constants,
                bound,
            } => {
                let m = bound.len();
                let ok = rows.len() == s
                    && constants.len() == s
                    && rows.iter().all(|r| r.len() == m && r.iter().all(|row| row.len() == n))
                    && constants.iter().all(|c| c.len() == m);
                if !ok || m == 0 {
                    return Err(Error::config(
                        "composite.params",
                        format!("need {s} blocks of {m} rows of length {n}"),
                    ));
                }
                CompositeBlock {
                    map: Arc::new(ScenarioAffine {
                        rows: rows.clone(),
                        constants: constants.clone(),
                    }),
                    bound: bound.clone(),
                }
            }
        };
        program = program.with_composite(block)?;
    }
    match &config.perturbation {
        PerturbationSpec::ShiftMass { from, to } => {
            if *from >= s || *to >= s || from == to {
                return Err(Error::config(
                    "perturbation.params",
                    "from/to must be distinct scenario indices",
                ));
            }
        }
        PerturbationSpec::Fixed { p_nu } => {
            if p_nu.len() != s {
                return Err(Error::config("perturbation.params.p_nu", format!("expected {s} entries")));
            }
            ProbVector::new(p_nu.clone())
                .map_err(|e| Error::config("perturbation.params.p_nu", e.to_string()))?;
        }
        PerturbationSpec::SupportShift {
            scenario,
            direction,
        } => {
            let sup = config.support.as_ref().ok_or_else(|| {
                Error::config("perturbation", "support-shift needs a `support` section")
            })?;
            if *scenario >= s || direction.len() != sup.points[0].len() {
                return Err(Error::config(
                    "perturbation.params",
                    "scenario index or direction length is wrong",
                ));
            }
        }
        PerturbationSpec::None | PerturbationSpec::Empirical => {}
    }
    if config.x_method == Some(XMethodHint::ProjectedGradient) {
        let all = std::iter::once(program.f0()).chain(program.scenarios());
        for f in all {
            if !f.is_smooth() {
                return Err(Error::config(
                    "x_method",
                    format!(
                        "projected gradient needs gradients valid everywhere, but `{}` only \
                         declares one piecewise (or none); use the grid method",
                        f.label()
                    ),
                ));
            }
        }
    }
    Ok(InstanceDef {
        config: config.clone(),
        actual: program,
    })
}
