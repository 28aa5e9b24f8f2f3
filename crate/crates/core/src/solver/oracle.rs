// SPDX-License-Identifier: Apache-2.0

//! Exhaustive joint search over perturbation and decision grids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extreal::{ExtReal, StochasticProgram};
use crate::rockafellian::{evaluate, PerturbationPoint, RockafellianSpec};
use crate::solver::grid::{better, simplex_grid, GridBox, MAX_GRID_EVALUATIONS};

/// Largest scenario count accepted for simplex perturbation grids.
pub const MAX_ORACLE_SCENARIOS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub x: GridBox,
    /// Spacing of the simplex grid for `pᵛ + u`; `None` pins `u = 0`.
    #[serde(default)]
    pub simplex_step: Option<f64>,
    /// Grid for unconstrained perturbation blocks: one support shift per
    /// scenario, the constraint shift of the composite variants.
    #[serde(default)]
    pub shift: Option<GridBox>,
    /// Levels `δ` whose `δ`-argmin sets are returned.
    #[serde(default)]
    pub deltas: Vec<f64>,
}

impl OracleConfig {
    pub fn on_box(x: GridBox) -> Self {
        OracleConfig {
            x,
            simplex_step: None,
            shift: None,
            deltas: vec![0.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArgminSet {
    pub delta: f64,
    pub points: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleResult {
    pub pert: PerturbationPoint,
    pub x: Vec<f64>,
    pub value: ExtReal,
    /// `min` over the perturbation grid at each decision grid point.
    #[serde(skip)]
    pub x_values: Vec<ExtReal>,
    pub argmin_sets: Vec<ArgminSet>,
    pub evaluations: u128,
}

impl OracleResult {
    pub fn argmin(&self, delta: f64) -> Option<&ArgminSet> {
        self.argmin_sets.iter().find(|a| a.delta == delta)
    }
}

fn candidates(
    program: &StochasticProgram,
    spec: &RockafellianSpec,
    config: &OracleConfig,
) -> Result<Vec<PerturbationPoint>> {
    let zero = PerturbationPoint::zero(spec, program);
    let u_list: Vec<Vec<f64>> = match (spec, config.simplex_step) {
        (RockafellianSpec::ExactIndicator, _) | (_, None) => vec![zero.u.clone()],
        (RockafellianSpec::Composite { reweight: false, .. }, _) => vec![zero.u.clone()],
        (_, Some(step)) => {
            let s = program.s();
            if s > MAX_ORACLE_SCENARIOS {
                return Err(Error::InvalidParameter(format!(
                    "simplex grids are limited to s <= {MAX_ORACLE_SCENARIOS}, got {s}"
                )));
            }
            let p = spec.p_nu().expect("approximating variant").as_slice();
            simplex_grid(s, step)?
                .into_iter()
                .map(|q| q.iter().zip(p).map(|(a, b)| a - b).collect())
                .collect()
        }
    };
    let shift_points = match &config.shift {
        Some(b) => Some(b.points()?),
        None => None,
    };
    let mut out = Vec::new();
    match (spec, shift_points) {
        (RockafellianSpec::Composite { reweight: false, .. }, Some(pts)) => {
            for u in pts {
                Error::check_len("constraint shift", zero.u.len(), u.len())?;
                out.push(PerturbationPoint::from_u(u));
            }
        }
        (RockafellianSpec::Composite { reweight: true, .. }, Some(pts)) => {
            for u in &u_list {
                for v in &pts {
                    out.push(PerturbationPoint {
                        u: u.clone(),
                        v: Some(v.clone()),
                    });
                }
            }
        }
        (RockafellianSpec::SupportPerturbation { .. }, Some(pts)) => {
            let s = program.s();
            let combos = (pts.len() as u128).saturating_pow(s as u32);
            if combos.saturating_mul(u_list.len() as u128) > MAX_GRID_EVALUATIONS {
                return Err(Error::GridTooLarge {
                    points: combos.saturating_mul(u_list.len() as u128),
                    limit: MAX_GRID_EVALUATIONS,
                });
            }
            let mut idx = vec![0usize; s];
            loop {
                let v: Vec<f64> = idx.iter().flat_map(|&k| pts[k].iter().copied()).collect();
                for u in &u_list {
                    out.push(PerturbationPoint {
                        u: u.clone(),
                        v: Some(v.clone()),
                    });
                }
                let mut axis = s;
                loop {
                    if axis == 0 {
                        return Ok(out);
                    }
                    axis -= 1;
                    idx[axis] += 1;
                    if idx[axis] < pts.len() {
                        break;
                    }
                    idx[axis] = 0;
                }
            }
        }
        _ => {
            for u in u_list {
                out.push(PerturbationPoint { u, v: zero.v.clone() });
            }
        }
    }
    Ok(out)
}

/// Minimizes `f(u, x) − ⟨y, u⟩` by exhaustive evaluation on the product of
/// the perturbation and decision grids. Ties go to the lexicographically
/// first decision point, then to the first perturbation candidate.
pub fn brute_force_oracle(
    program: &StochasticProgram,
    spec: &RockafellianSpec,
    config: &OracleConfig,
) -> Result<OracleResult> {
    if !matches!(spec, RockafellianSpec::ExactIndicator) {
        spec.validate(program)?;
    }
    Error::check_len("oracle box", program.n(), config.x.dim())?;
    let cands = candidates(program, spec, config)?;
    let nx = config.x.checked_total()?;
    let evaluations = nx as u128 * cands.len() as u128;
    if evaluations > MAX_GRID_EVALUATIONS {
        return Err(Error::GridTooLarge {
            points: evaluations,
            limit: MAX_GRID_EVALUATIONS,
        });
    }
    // surface dimension errors once instead of reading them as +inf
    evaluate(spec, program, &cands[0], &config.x.point(0), true)?;
    let per_x: Vec<(ExtReal, u64)> = (0..nx)
        .into_par_iter()
        .map(|i| {
            let x = config.x.point(i);
            let mut best = (ExtReal::PosInf, u64::MAX);
            for (k, pert) in cands.iter().enumerate() {
                let v = evaluate(spec, program, pert, &x, true).unwrap_or(ExtReal::PosInf);
                best = better(best, (v, k as u64));
            }
            best
        })
        .collect();
    let (value, ix) = per_x
        .iter()
        .enumerate()
        .map(|(i, (v, _))| (*v, i as u64))
        .fold((ExtReal::PosInf, u64::MAX), better);
    if ix == u64::MAX || value == ExtReal::PosInf {
        return Err(Error::Infeasible(format!(
            "every grid point has infinite value (step {})",
            config.x.step
        )));
    }
    if let ExtReal::Finite(v) = value {
        if v < -1e15 {
            return Err(Error::Unbounded(v));
        }
    }
    let x_values: Vec<ExtReal> = per_x.iter().map(|(v, _)| *v).collect();
    let argmin_sets = config
        .deltas
        .iter()
        .map(|&delta| ArgminSet {
            delta,
            points: x_values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v <= value + ExtReal::Finite(delta))
                .map(|(i, _)| config.x.point(i as u64))
                .collect(),
        })
        .collect();
    Ok(OracleResult {
        pert: cands[per_x[ix as usize].1 as usize].clone(),
        x: config.x.point(ix),
        value,
        x_values,
        argmin_sets,
        evaluations,
    })
}

/// Euclidean distance from `x` to the nearest of `points` (`+∞` if empty).
pub fn distance_to_set(x: &[f64], points: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .map(|p| {
            p.iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}
