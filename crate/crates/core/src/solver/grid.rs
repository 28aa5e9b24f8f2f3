// SPDX-License-Identifier: Apache-2.0

//! Rectangular grids over decision boxes and over the simplex.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extreal::ExtReal;
use crate::rockafellian::InfOracle;

/// Evaluation budget shared by every exhaustive search.
pub const MAX_GRID_EVALUATIONS: u128 = 100_000_000;

/// A box `[lower, upper]` sampled at spacing close to `step` in every
/// coordinate, endpoints included.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub step: f64,
}

impl GridBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, step: f64) -> Result<Self> {
        let g = GridBox { lower, upper, step };
        g.validate()?;
        Ok(g)
    }

    /// The interval `[lo, hi]` repeated in `n` coordinates.
    pub fn cube(n: usize, lo: f64, hi: f64, step: f64) -> Result<Self> {
        GridBox::new(vec![lo; n], vec![hi; n], step)
    }

    pub fn validate(&self) -> Result<()> {
        Error::check_len("grid upper corner", self.lower.len(), self.upper.len())?;
        if self.lower.is_empty() {
            return Err(Error::Empty("grid box"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid step must be positive, got {}",
                self.step
            )));
        }
        for (l, u) in self.lower.iter().zip(&self.upper) {
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(Error::InvalidParameter(format!("bad box side [{l}, {u}]")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Points per coordinate.
    pub fn counts(&self) -> Vec<u64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| ((u - l) / self.step).round() as u64 + 1)
            .collect()
    }

    pub fn total(&self) -> u128 {
        self.counts().iter().map(|&c| c as u128).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&xi, (&l, &u))| xi >= l && xi <= u)
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&xi, (&l, &u))| xi.clamp(l, u))
            .collect()
    }

    fn coordinate(&self, axis: usize, k: u64, count: u64) -> f64 {
        let (l, u) = (self.lower[axis], self.upper[axis]);
        if count <= 1 {
            l
        } else {
            l + (u - l) * (k as f64) / ((count - 1) as f64)
        }
    }

    /// Point number `index` in lexicographic order (first coordinate slowest).
    pub fn point(&self, index: u64) -> Vec<f64> {
        let counts = self.counts();
        let mut rest = index;
        let mut out = vec![0.0; counts.len()];
        for axis in (0..counts.len()).rev() {
            let k = rest % counts[axis];
            rest /= counts[axis];
            out[axis] = self.coordinate(axis, k, counts[axis]);
        }
        out
    }

    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        let total = self.checked_total()?;
        Ok((0..total).map(|i| self.point(i)).collect())
    }

    pub(crate) fn checked_total(&self) -> Result<u64> {
        self.validate()?;
        let total = self.total();
        if total > MAX_GRID_EVALUATIONS {
            return Err(Error::GridTooLarge {
                points: total,
                limit: MAX_GRID_EVALUATIONS,
            });
        }
        Ok(total as u64)
    }

    /// Values of `f` at every grid point, in grid order.
    pub fn values<F>(&self, f: F) -> Result<Vec<ExtReal>>
    where
        F: Fn(&[f64]) -> ExtReal + Sync,
    {
        let total = self.checked_total()?;
        Ok((0..total)
            .into_par_iter()
            .map(|i| f(&self.point(i)))
            .collect())
    }

    /// Smallest value and its lexicographically first grid index.
    pub fn argmin<F>(&self, f: F) -> Result<(u64, ExtReal)>
    where
        F: Fn(&[f64]) -> ExtReal + Sync,
    {
        let total = self.checked_total()?;
        let best = (0..total)
            .into_par_iter()
            .map(|i| (f(&self.point(i)), i))
            .reduce(|| (ExtReal::PosInf, u64::MAX), better);
        if best.1 == u64::MAX {
            // every value was +inf
            return Ok((0, ExtReal::PosInf));
        }
        Ok((best.1, best.0))
    }
}

/// Associative, commutative selection: smaller value, then smaller index.
pub(crate) fn better(a: (ExtReal, u64), b: (ExtReal, u64)) -> (ExtReal, u64) {
    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

impl InfOracle for GridBox {
    fn infimum(&self, f: &(dyn Fn(&[f64]) -> ExtReal + Sync)) -> Result<ExtReal> {
        Ok(self.argmin(f)?.1)
    }
}

/// All probability vectors with entries in `{0, 1/N, …, 1}`, `N = round(1/step)`,
/// in lexicographically decreasing order of the first entry.
pub fn simplex_grid(s: usize, step: f64) -> Result<Vec<Vec<f64>>> {
    if s == 0 {
        return Err(Error::Empty("simplex grid"));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidParameter(format!("simplex grid step {step}")));
    }
    let n = (1.0 / step).round() as u64;
    let count = compositions(n, s);
    if count > MAX_GRID_EVALUATIONS {
        return Err(Error::GridTooLarge {
            points: count,
            limit: MAX_GRID_EVALUATIONS,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut parts = vec![0u64; s];
    fill(&mut parts, 0, n, n, &mut out);
    Ok(out)
}

fn fill(parts: &mut [u64], idx: usize, left: u64, n: u64, out: &mut Vec<Vec<f64>>) {
    if idx + 1 == parts.len() {
        parts[idx] = left;
        out.push(parts.iter().map(|&k| k as f64 / n as f64).collect());
        return;
    }
    for k in (0..=left).rev() {
        parts[idx] = k;
        fill(parts, idx + 1, left - k, n, out);
    }
}

/// `C(n + s − 1, s − 1)`, saturating.
fn compositions(n: u64, s: usize) -> u128 {
    let mut c: u128 = 1;
    for k in 1..s as u128 {
        c = c.saturating_mul(n as u128 + k) / k;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_are_exact() {
        let g = GridBox::cube(1, 0.0, 1.0, 1e-3).unwrap();
        assert_eq!(g.total(), 1001);
        assert_eq!(g.point(0), vec![0.0]);
        assert_eq!(g.point(500), vec![0.5]);
        assert_eq!(g.point(1000), vec![1.0]);
    }

    #[test]
    fn lexicographic_order() {
        let g = GridBox::new(vec![0.0, 0.0], vec![1.0, 2.0], 1.0).unwrap();
        let pts = g.points().unwrap();
        assert_eq!(pts[0], vec![0.0, 0.0]);
        assert_eq!(pts[1], vec![0.0, 1.0]);
        assert_eq!(pts[3], vec![1.0, 0.0]);
    }

    #[test]
    fn constant_objective_picks_first_point() {
        let g = GridBox::cube(2, -1.0, 1.0, 0.1).unwrap();
        let (i, v) = g.argmin(|_| ExtReal::Finite(3.0)).unwrap();
        assert_eq!(i, 0);
        assert_eq!(g.point(i), vec![-1.0, -1.0]);
        assert_eq!(v, ExtReal::Finite(3.0));
    }

    #[test]
    fn argmin_is_deterministic_with_ties() {
        let g = GridBox::cube(1, -1.0, 1.0, 1e-4).unwrap();
        let f = |x: &[f64]| ExtReal::Finite((x[0].abs() - 0.5).abs());
        let a = g.argmin(f).unwrap();
        for _ in 0..5 {
            assert_eq!(g.argmin(f).unwrap(), a);
        }
        assert_eq!(g.point(a.0), vec![-0.5]);
    }

    #[test]
    fn oversized_grid_is_rejected() {
        let g = GridBox::cube(3, 0.0, 1.0, 1e-3).unwrap();
        assert!(matches!(g.argmin(|_| ExtReal::ZERO), Err(Error::GridTooLarge { .. })));
    }

    #[test]
    fn simplex_grid_counts() {
        assert_eq!(simplex_grid(2, 1e-3).unwrap().len(), 1001);
        let g = simplex_grid(3, 0.1).unwrap();
        assert_eq!(g.len(), 66);
        for q in &g {
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(g[0], vec![1.0, 0.0, 0.0]);
    }
}
