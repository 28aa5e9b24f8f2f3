// SPDX-License-Identifier: Apache-2.0

//! Monte Carlo check that `ν^{1/2−ε}‖pᵛ − p‖₂` decays when `pᵛ` is the
//! empirical distribution of `ν` draws from `p`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::simplex::{EmpiricalStream, ProbVector};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalRateReport {
    pub nus: Vec<u64>,
    pub epsilon: f64,
    pub trials: usize,
    /// Median of the statistic at each `ν`.
    pub median: Vec<f64>,
    /// Fraction of trials whose statistic at the largest `ν` is below the
    /// one at the smallest `ν`.
    pub fraction_decreasing: f64,
    pub median_strictly_decreasing: bool,
    /// `statistics[t][k]`: trial `t` at `nus[k]`.
    #[serde(skip)]
    pub statistics: Vec<Vec<f64>>,
}

impl EmpiricalRateReport {
    pub fn failure_rate(&self) -> f64 {
        1.0 - self.fraction_decreasing
    }
}

/// Seed of trial `k`, spread so neighbouring trials do not share streams.
pub fn trial_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn empirical_rate_check(
    p: &ProbVector,
    epsilon: f64,
    nus: &[u64],
    trials: usize,
    seed: u64,
) -> Result<EmpiricalRateReport> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 0.5), got {epsilon}"
        )));
    }
    if nus.is_empty() || nus.windows(2).any(|w| w[0] >= w[1]) || nus[0] == 0 {
        return Err(Error::InvalidParameter(
            "sample sizes must be positive and strictly increasing".into(),
        ));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let exponent = 0.5 - epsilon;
    let statistics: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut stream = EmpiricalStream::new(p, trial_seed(seed, t));
            nus.iter()
                .map(|&nu| {
                    stream.advance((nu - stream.drawn()) as usize);
                    (nu as f64).powf(exponent) * stream.frequencies().distance(p)
                })
                .collect()
        })
        .collect();
    let median: Vec<f64> = (0..nus.len())
        .map(|k| {
            let mut col: Vec<f64> = statistics.iter().map(|row| row[k]).collect();
            col.sort_by(f64::total_cmp);
            let m = col.len();
            if m % 2 == 1 {
                col[m / 2]
            } else {
                0.5 * (col[m / 2 - 1] + col[m / 2])
            }
        })
        .collect();
    let last = nus.len() - 1;
    let decreasing = statistics.iter().filter(|row| row[last] < row[0]).count();
    Ok(EmpiricalRateReport {
        nus: nus.to_vec(),
        epsilon,
        trials,
        median_strictly_decreasing: median.windows(2).all(|w| w[1] < w[0]),
        median,
        fraction_decreasing: decreasing as f64 / trials as f64,
        statistics,
    })
}
