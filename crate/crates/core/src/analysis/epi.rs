// SPDX-License-Identifier: Apache-2.0

//! Grid estimate of the truncated Hausdorff distance between epigraphs.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extreal::ExtReal;
use crate::solver::grid::{GridBox, MAX_GRID_EVALUATIONS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpiEstimate {
    pub value: f64,
    /// Grid spacing; the estimate is accurate up to about this much.
    pub resolution: f64,
}

/// Estimates `d̂l_ρ(epi a, epi b)` with points compared under the max-norm
/// of `(x, value)`. For each grid point `x` in the `ρ`-ball (max-norm) whose
/// value under one function lies in `[−∞, ρ]`, the lowest epigraph point
/// `(x, max(value, −ρ))` is matched against the other epigraph on the grid;
/// the two one-sided excesses are maximized.
pub fn epi_distance_estimate<A, B>(fn_a: A, fn_b: B, rho: f64, grid: &GridBox) -> Result<EpiEstimate>
where
    A: Fn(&[f64]) -> ExtReal + Sync,
    B: Fn(&[f64]) -> ExtReal + Sync,
{
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    let total = grid.checked_total()?;
    if (total as u128) * (total as u128) > MAX_GRID_EVALUATIONS * 10 {
        return Err(Error::GridTooLarge {
            points: (total as u128) * (total as u128),
            limit: MAX_GRID_EVALUATIONS * 10,
        });
    }
    let pts: Vec<Vec<f64>> = (0..total).map(|i| grid.point(i)).collect();
    let va: Vec<f64> = pts.par_iter().map(|x| fn_a(x).to_f64()).collect();
    let vb: Vec<f64> = pts.par_iter().map(|x| fn_b(x).to_f64()).collect();
    let one_sided = |from: &[f64], to: &[f64]| -> f64 {
        (0..pts.len())
            .into_par_iter()
            .filter(|&i| from[i] <= rho && pts[i].iter().all(|c| c.abs() <= rho))
            .map(|i| {
                let level = from[i].max(-rho);
                let mut best = f64::INFINITY;
                for j in 0..pts.len() {
                    let d = pts[i]
                        .iter()
                        .zip(&pts[j])
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if d >= best {
                        continue;
                    }
                    let gap = (to[j] - level).max(0.0);
                    best = best.min(d.max(gap));
                }
                best
            })
            .reduce(|| 0.0, f64::max)
    };
    let value = one_sided(&va, &vb).max(one_sided(&vb, &va));
    Ok(EpiEstimate {
        value,
        resolution: grid.step,
    })
}
