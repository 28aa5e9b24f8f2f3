// SPDX-License-Identifier: Apache-2.0

//! Built-in examples and instances assembled from JSON configurations.

pub mod catalog;
pub mod config;

use std::sync::Arc;

use crate::analysis::theta_schedule;
use crate::error::{Error, Result};
use crate::extreal::{CompositeBlock, ExtReal, ScenarioFunction, StochasticProgram, Support};
use crate::rockafellian::RockafellianSpec;
use crate::simplex::{norm2, sample_empirical, ProbVector};
use crate::solver::{GradientConfig, GridBox, SolveConfig, StepRule, XMethod};

use catalog::{generator_arc, Bilinear, FairnessCovariance, HeavisideAffine, MeanMode};
pub use config::{build_from_config, InstanceConfig, InstanceDef};

pub const BUILTIN_NAMES: [&str; 3] = ["ex21", "ex22", "ex23"];

/// Sensitive-attribute covariance bound of the fair classifier.
pub const FAIRNESS_BOUND: f64 = 0.25;

/// Floor of the `θᵛ` schedule used by the default specs.
pub const THETA_FLOOR: f64 = 1.0;

/// Actual and perturbed programs at one `ν` with the default relaxation and
/// the decision box the solvers search.
#[derive(Clone, Debug)]
pub struct BuiltExample {
    pub name: String,
    pub nu: u64,
    pub actual: StochasticProgram,
    pub perturbed: StochasticProgram,
    pub spec: RockafellianSpec,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Oracle grid spacing.
    pub grid_step: f64,
    /// Spacing of the solver's decision grid.
    pub solve_step: f64,
    /// Solve with projected gradient instead of the reduced grid.
    pub prefer_gradient: bool,
}

impl BuiltExample {
    pub fn oracle_grid(&self) -> Result<GridBox> {
        GridBox::new(self.lower.clone(), self.upper.clone(), self.grid_step)
    }

    /// Reduced-grid solver configuration on the example box.
    pub fn solve_config(&self) -> Result<SolveConfig> {
        if self.prefer_gradient {
            return Ok(SolveConfig::new(XMethod::ProjectedGradient(GradientConfig {
                lower: self.lower.clone(),
                upper: self.upper.clone(),
                step: StepRule::Armijo {
                    initial: 1.0,
                    shrink: 0.5,
                },
                iters: 500,
                tol: 1e-10,
                restarts: 2,
            })));
        }
        let grid = GridBox::new(self.lower.clone(), self.upper.clone(), self.solve_step)?;
        Ok(SolveConfig::new(XMethod::ReducedGrid { grid }))
    }

    pub fn into_parts(self) -> (StochasticProgram, StochasticProgram, RockafellianSpec) {
        (self.actual, self.perturbed, self.spec)
    }
}

/// `build_example_with(name, nu, MeanMode::Perturbed)`.
pub fn build_example(name: &str, nu: u64) -> Result<BuiltExample> {
    build_example_with(name, nu, MeanMode::Perturbed)
}

/// Builds a built-in example; `mean_mode` only affects `ex22`.
pub fn build_example_with(name: &str, nu: u64, mean_mode: MeanMode) -> Result<BuiltExample> {
    if nu < 2 {
        return Err(Error::InvalidParameter(format!("nu must be >= 2, got {nu}")));
    }
    let nu_f = nu as f64;
    match name {
        "ex21" => {
            let f0 = ScenarioFunction::indicator_box(vec![0.0], vec![1.0]);
            let support = Support {
                points: vec![vec![0.0], vec![nu_f]],
                generator: generator_arc(Bilinear {
                    coef: vec![-0.5],
                    offset: 0.5,
                }),
            };
            let p = ProbVector::vertex(2, 0);
            let p_nu = ProbVector::new(vec![1.0 - 1.0 / nu_f, 1.0 / nu_f])?;
            let actual = StochasticProgram::from_support(1, f0, support, p.clone())?;
            let perturbed = actual.with_probabilities(p_nu.clone())?;
            let theta = theta_schedule(&p_nu, &p, THETA_FLOOR);
            Ok(BuiltExample {
                name: name.into(),
                nu,
                actual,
                perturbed,
                spec: RockafellianSpec::quadratic(p_nu, theta),
                lower: vec![0.0],
                upper: vec![1.0],
                grid_step: 1e-3,
                solve_step: 1e-3,
                prefer_gradient: false,
            })
        }
        "ex22" => {
            let xs = [-1.0, 1.0, nu_f];
            let ys = [-1.0, 1.0, 1.0];
            let zs = vec![0.0, 1.0, 1.0];
            let f0 = ScenarioFunction::new("ridge", |x: &[f64]| ExtReal::Finite(x[0] * x[0]))
                .with_gradient(|x| Some(vec![2.0 * x[0], 0.0]));
            let scenarios = xs
                .iter()
                .zip(&ys)
                .map(|(&f, &y)| catalog::hinge(vec![f], y))
                .collect();
            let p = ProbVector::new(vec![0.5, 0.5, 0.0])?;
            let p_nu = ProbVector::new(vec![0.5, 0.5 - 1.0 / nu_f, 1.0 / nu_f])?;
            let features = xs.iter().map(|&f| vec![f]).collect();
            let map = FairnessCovariance::new(features, zs, mean_mode, p.as_slice())?;
            let actual = StochasticProgram::new(2, f0, scenarios, p.clone())?.with_composite(
                CompositeBlock {
                    map: Arc::new(map),
                    bound: vec![FAIRNESS_BOUND],
                },
            )?;
            let perturbed = actual.with_probabilities(p_nu.clone())?;
            let theta = theta_schedule(&p_nu, &p, THETA_FLOOR);
            Ok(BuiltExample {
                name: name.into(),
                nu,
                actual,
                perturbed,
                spec: RockafellianSpec::Composite {
                    p_nu,
                    theta,
                    tilt: vec![0.0],
                    reweight: true,
                },
                lower: vec![-1.0, -1.0],
                upper: vec![1.0, 1.0],
                grid_step: 5e-3,
                solve_step: 1e-2,
                prefer_gradient: false,
            })
        }
        "ex23" => {
            let f0 = ScenarioFunction::new("shifted-quadratic-on-unit", |x: &[f64]| {
                if (0.0..=1.0).contains(&x[0]) {
                    ExtReal::Finite(0.25 * (x[0] - 1.0) * (x[0] - 1.0))
                } else {
                    ExtReal::PosInf
                }
            })
            .with_piecewise_gradient(|x| {
                (0.0..=1.0)
                    .contains(&x[0])
                    .then(|| vec![0.5 * (x[0] - 1.0)])
            });
            let support = Support {
                points: vec![vec![0.0], vec![1.0]],
                generator: generator_arc(HeavisideAffine {
                    coef: vec![1.0],
                    offset: 0.0,
                }),
            };
            let p = ProbVector::uniform(2)?;
            let actual = StochasticProgram::from_support(1, f0, support, p.clone())?;
            let xi_nu = vec![vec![1.0 / nu_f], vec![1.0]];
            let perturbed = actual.with_support_points(xi_nu.clone())?;
            let shift = 1.0 / nu_f;
            Ok(BuiltExample {
                name: name.into(),
                nu,
                actual,
                perturbed,
                spec: RockafellianSpec::SupportPerturbation {
                    p_nu: p.clone(),
                    xi_nu,
                    theta: theta_schedule(&p, &p, THETA_FLOOR),
                    lambda: shift.powf(-4.0 / 3.0),
                    tilt: vec![0.0; 2],
                },
                lower: vec![0.0],
                upper: vec![1.0],
                grid_step: 1e-3,
                solve_step: 1e-3,
                prefer_gradient: false,
            })
        }
        other => Err(Error::UnknownInstance(other.into())),
    }
}

/// Default grid step for configured instances.
pub const DEFAULT_GRID_STEP: f64 = 1e-2;

/// Realizes a configured instance at `ν`. Empirical perturbations draw `ν`
/// samples with `seed`.
pub fn realize(def: &InstanceDef, nu: u64, seed: u64) -> Result<BuiltExample> {
    use config::PerturbationSpec as P;
    if nu < 2 {
        return Err(Error::InvalidParameter(format!("nu must be >= 2, got {nu}")));
    }
    let cfg = &def.config;
    let actual = def.actual.clone();
    let p = actual.p().clone();
    let nu_f = nu as f64;
    let mut xi_nu = None;
    let p_nu = match &cfg.perturbation {
        P::None | P::SupportShift { .. } => p.clone(),
        P::ShiftMass { from, to } => {
            let mut q = p.as_slice().to_vec();
            let moved = (1.0 / nu_f).min(q[*from]);
            q[*from] -= moved;
            q[*to] += moved;
            ProbVector::new(q)?
        }
        P::Empirical => sample_empirical(&p, nu as usize, seed)?,
        P::Fixed { p_nu } => ProbVector::new(p_nu.clone())?,
    };
    if let P::SupportShift {
        scenario,
        direction,
    } = &cfg.perturbation
    {
        let support = actual
            .support()
            .ok_or_else(|| Error::config("perturbation", "support-shift needs a support"))?;
        let mut points = support.points.clone();
        for (c, d) in points[*scenario].iter_mut().zip(direction) {
            *c += d / nu_f;
        }
        xi_nu = Some(points);
    }
    let mut perturbed = actual.with_probabilities(p_nu.clone())?;
    if let Some(points) = &xi_nu {
        perturbed = perturbed.with_support_points(points.clone())?;
    }
    let theta = theta_schedule(&p_nu, &p, THETA_FLOOR);
    let s = actual.s();
    let spec = match (&xi_nu, actual.composite()) {
        (Some(points), _) => {
            let dist = match &cfg.perturbation {
                P::SupportShift { direction, .. } => norm2(direction) / nu_f,
                _ => unreachable!(),
            };
            let lambda = if dist > 0.0 {
                dist.powf(-4.0 / 3.0)
            } else {
                crate::analysis::THETA_CAP
            };
            RockafellianSpec::SupportPerturbation {
                p_nu,
                xi_nu: points.clone(),
                theta,
                lambda,
                tilt: vec![0.0; s],
            }
        }
        (None, Some(block)) => RockafellianSpec::Composite {
            p_nu,
            theta,
            tilt: vec![0.0; block.dim()],
            reweight: true,
        },
        (None, None) => RockafellianSpec::quadratic(p_nu, theta),
    };
    Ok(BuiltExample {
        name: cfg.name.clone(),
        nu,
        actual,
        perturbed,
        spec,
        lower: cfg.bounds.lower.clone(),
        upper: cfg.bounds.upper.clone(),
        grid_step: cfg.grid_step.unwrap_or(DEFAULT_GRID_STEP),
        solve_step: cfg.grid_step.unwrap_or(DEFAULT_GRID_STEP),
        prefer_gradient: cfg.x_method == Some(config::XMethodHint::ProjectedGradient),
    })
}
