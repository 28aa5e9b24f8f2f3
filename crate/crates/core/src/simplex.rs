// SPDX-License-Identifier: Apache-2.0

//! Probability simplex: membership, Euclidean projection, normal cones and
//! empirical sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum and on negative entries for simplex membership.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Name of the generator behind every seeded draw in the crate.
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha 0.3), seed_from_u64";

/// A vector in the probability simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates membership. Entries in `[-1e-12, 0)` are clamped to zero and
    /// the vector renormalized.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("probability vector"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("probability vector {entries:?}")));
        }
        let sum: f64 = entries.iter().sum();
        let min = entries.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -SIMPLEX_TOL || (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::NotInSimplex { sum, min });
        }
        if min >= 0.0 {
            return Ok(ProbVector(entries));
        }
        let mut entries: Vec<f64> = entries.into_iter().map(|v| v.max(0.0)).collect();
        let total: f64 = entries.iter().sum();
        entries.iter_mut().for_each(|v| *v /= total);
        Ok(ProbVector(entries))
    }

    pub fn uniform(s: usize) -> Result<Self> {
        if s == 0 {
            return Err(Error::Empty("probability vector"));
        }
        Ok(ProbVector(vec![1.0 / s as f64; s]))
    }

    /// The `i`-th vertex `e_i` of the simplex in `ℝˢ`.
    pub fn vertex(s: usize, i: usize) -> Self {
        let mut e = vec![0.0; s];
        e[i] = 1.0;
        ProbVector(e)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Smallest positive entry.
    pub fn min_positive(&self) -> f64 {
        self.0
            .iter()
            .copied()
            .filter(|&v| v > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn distance(&self, other: &ProbVector) -> f64 {
        norm2(&sub(&self.0, &other.0))
    }

    pub fn distance_inf(&self, other: &ProbVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ProbVector::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

/// True when `q` is in the simplex up to [`SIMPLEX_TOL`].
pub fn in_simplex(q: &[f64]) -> bool {
    !q.is_empty()
        && q.iter().all(|v| v.is_finite() && *v >= -SIMPLEX_TOL)
        && (q.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sort-based threshold: returns `τ` with `Σ max(0, zᵢ − τ) = 1`.
pub(crate) fn simplex_threshold(z: &[f64]) -> f64 {
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if k == 0 || v - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    tau
}

/// Euclidean projection onto the simplex.
///
/// Points already in the simplex (entries nonnegative, sum within a few ulps
/// of one) are returned unchanged, which makes the map exactly idempotent.
pub fn project_to_simplex(z: &[f64]) -> Result<ProbVector> {
    if z.is_empty() {
        return Err(Error::Empty("projection input"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("projection input {z:?}")));
    }
    let sum: f64 = z.iter().sum();
    if z.iter().all(|&v| v >= 0.0) && (sum - 1.0).abs() <= 4.0 * f64::EPSILON * z.len() as f64 {
        return Ok(ProbVector(z.to_vec()));
    }
    let tau = simplex_threshold(z);
    let q: Vec<f64> = z.iter().map(|&v| (v - tau).max(0.0)).collect();
    Ok(ProbVector(q))
}

/// Projection onto the face `{q ∈ Δ | qᵢ = 0 for i ∉ allowed}`; `None` when
/// the face is empty.
pub fn project_to_face(z: &[f64], allowed: &[bool]) -> Result<Option<ProbVector>> {
    Error::check_len("face mask", z.len(), allowed.len())?;
    let idx: Vec<usize> = (0..z.len()).filter(|&i| allowed[i]).collect();
    if idx.is_empty() {
        return Ok(None);
    }
    let sub_z: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
    let sub_q = project_to_simplex(&sub_z)?;
    let mut q = vec![0.0; z.len()];
    for (k, &i) in idx.iter().enumerate() {
        q[i] = sub_q.0[k];
    }
    Ok(Some(ProbVector(q)))
}

/// `dist(w, N_Δ(q))`.
///
/// With `P = {i | qᵢ > 0}` and `Z` its complement this is
/// `min_μ Σ_P (wᵢ − μ)² + Σ_Z (wᵢ − μ)₊²`, a convex piecewise quadratic in
/// `μ`. The root of its derivative is bracketed by bisection, then the
/// active set at the bracket fixes `μ` in closed form.
pub fn normal_cone_distance(q: &ProbVector, w: &[f64]) -> Result<f64> {
    Error::check_len("normal cone argument", q.len(), w.len())?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("normal cone argument {w:?}")));
    }
    let positive: Vec<bool> = q.0.iter().map(|&v| v > 0.0).collect();
    let objective = |mu: f64| -> f64 {
        w.iter()
            .zip(&positive)
            .map(|(&wi, &pos)| {
                let d = wi - mu;
                if pos || d > 0.0 {
                    d * d
                } else {
                    0.0
                }
            })
            .sum()
    };
    // derivative/2: Σ_P (μ − wᵢ) + Σ_{Z, wᵢ > μ} (μ − wᵢ), nondecreasing in μ
    let slope = |mu: f64| -> f64 {
        w.iter()
            .zip(&positive)
            .filter(|(&wi, &pos)| pos || wi > mu)
            .map(|(&wi, _)| mu - wi)
            .sum()
    };
    let wmax = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let wmin = w.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (wmin - 1.0, wmax);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut best = objective(hi).min(objective(lo));
    for probe in [lo, hi] {
        let active: Vec<f64> = w
            .iter()
            .zip(&positive)
            .filter(|(&wi, &pos)| pos || wi > probe)
            .map(|(&wi, _)| wi)
            .collect();
        if !active.is_empty() {
            let mu = active.iter().sum::<f64>() / active.len() as f64;
            best = best.min(objective(mu));
        }
    }
    Ok(best.max(0.0).sqrt())
}

/// Relative frequencies of `count` seeded draws from `p`.
pub fn sample_empirical(p: &ProbVector, count: usize, seed: u64) -> Result<ProbVector> {
    if count == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    let mut stream = EmpiricalStream::new(p, seed);
    stream.advance(count);
    Ok(stream.frequencies())
}

/// Incremental sampler: frequencies at increasing sample sizes share their
/// prefix, so a single trajectory can be read at several `ν`.
#[derive(Clone, Debug)]
pub struct EmpiricalStream {
    cumulative: Vec<f64>,
    last_positive: usize,
    counts: Vec<u64>,
    drawn: u64,
    rng: ChaCha8Rng,
}

impl EmpiricalStream {
    pub fn new(p: &ProbVector, seed: u64) -> Self {
        let mut acc = 0.0;
        let cumulative = p
            .as_slice()
            .iter()
            .map(|&v| {
                acc += v;
                acc
            })
            .collect();
        let last_positive = p.as_slice().iter().rposition(|&v| v > 0.0).unwrap_or(0);
        EmpiricalStream {
            cumulative,
            last_positive,
            counts: vec![0; p.len()],
            drawn: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn draw(&mut self) -> usize {
        let u: f64 = self.rng.gen();
        // first category whose cumulative mass exceeds u; zero-mass
        // categories share their predecessor's cumulative value and are skipped
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.last_positive)
    }

    pub fn advance(&mut self, count: usize) {
        for _ in 0..count {
            let i = self.draw();
            self.counts[i] += 1;
        }
        self.drawn += count as u64;
    }

    pub fn drawn(&self) -> u64 {
        self.drawn
    }

    pub fn frequencies(&self) -> ProbVector {
        let n = self.drawn.max(1) as f64;
        let mut f: Vec<f64> = self.counts.iter().map(|&c| c as f64 / n).collect();
        // exact renormalisation keeps the sum inside the membership tolerance
        let total: f64 = f.iter().sum();
        if total > 0.0 {
            f.iter_mut().for_each(|v| *v /= total);
        }
        ProbVector(f)
    }
}

/// Uniform point on the simplex (flat Dirichlet) from normalised exponentials.
pub fn uniform_on_simplex<R: Rng + ?Sized>(rng: &mut R, s: usize) -> ProbVector {
    let e: Vec<f64> = (0..s)
        .map(|_| {
            let u: f64 = rng.gen();
            -(1.0 - u).ln()
        })
        .collect();
    let total: f64 = e.iter().sum();
    ProbVector(e.into_iter().map(|v| v / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn membership_rules() {
        assert!(ProbVector::new(vec![0.6, 0.6]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
        let p = ProbVector::new(vec![1.0 + 5e-13, -5e-13]).unwrap();
        assert_eq!(p.as_slice()[1], 0.0);
        assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn projection_examples() {
        let q = project_to_simplex(&[0.2, 0.3, 0.5]).unwrap();
        assert!(close(q.as_slice(), &[0.2, 0.3, 0.5], 1e-15));
        let q = project_to_simplex(&[0.5, 0.5, 0.5]).unwrap();
        assert!(close(q.as_slice(), &[1.0 / 3.0; 3], 1e-15));
        let q = project_to_simplex(&[2.0, 0.0]).unwrap();
        assert!(close(q.as_slice(), &[1.0, 0.0], 1e-15));
        assert!(project_to_simplex(&[]).is_err());
    }

    /// Grid search over Δ at step 1e-4 for the projection of (2, 0).
    #[test]
    fn projection_matches_grid_oracle() {
        let z = [2.0, 0.0];
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=10_000 {
            let a = k as f64 * 1e-4;
            let d = (a - z[0]).powi(2) + (1.0 - a - z[1]).powi(2);
            if d < best.0 {
                best = (d, a);
            }
        }
        let q = project_to_simplex(&z).unwrap();
        assert!((q.as_slice()[0] - best.1).abs() <= 1e-4);
    }

    #[test]
    fn projection_kkt_threshold() {
        let z = [0.9, -0.4, 0.7, 0.1];
        let q = project_to_simplex(&z).unwrap();
        let tau = simplex_threshold(&z);
        for (qi, zi) in q.as_slice().iter().zip(&z) {
            assert_eq!(*qi, (zi - tau).max(0.0));
        }
        assert!((q.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn face_projection() {
        let q = project_to_face(&[5.0, 0.2, 0.3], &[false, true, true])
            .unwrap()
            .unwrap();
        assert!(close(q.as_slice(), &[0.0, 0.45, 0.55], 1e-14));
        assert!(project_to_face(&[1.0], &[false]).unwrap().is_none());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn normal_cone_examples() {
        let half = ProbVector::new(vec![0.5, 0.5]).unwrap();
        assert!(normal_cone_distance(&half, &[3.0, 3.0]).unwrap() < 1e-12);
        let e1 = ProbVector::new(vec![1.0, 0.0]).unwrap();
        assert!(normal_cone_distance(&e1, &[0.0, -5.0]).unwrap() < 1e-12);
        let d = normal_cone_distance(&half, &[1.0, 0.0]).unwrap();
        assert!((d - 0.70711).abs() < 1e-5);
    }

    /// Scan over μ ∈ [−10, 10] at step 1e-3 for the (0.5, 0.5), (1, 0) case.
    #[test]
    fn normal_cone_matches_scan() {
        let w: [f64; 2] = [1.0, 0.0];
        let mut best = f64::INFINITY;
        let mut mu: f64 = -10.0;
        while mu <= 10.0 {
            best = best.min((w[0] - mu).powi(2) + (w[1] - mu).powi(2));
            mu += 1e-3;
        }
        let half = ProbVector::new(vec![0.5, 0.5]).unwrap();
        let d = normal_cone_distance(&half, &w).unwrap();
        assert!((d - best.sqrt()).abs() < 1e-5);
    }

    #[test]
    fn normal_cone_on_zero_coordinates() {
        // q = e1: v = (μ, ≤ μ); w = (0, 2) needs μ between 0 and 2
        let e1 = ProbVector::vertex(2, 0);
        let d = normal_cone_distance(&e1, &[0.0, 2.0]).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn sampling_examples() {
        let degenerate = ProbVector::new(vec![1.0, 0.0]).unwrap();
        for seed in 0..5 {
            let f = sample_empirical(&degenerate, 1000, seed).unwrap();
            assert_eq!(f.as_slice(), &[1.0, 0.0]);
        }
        let half = ProbVector::new(vec![0.5, 0.5]).unwrap();
        let one = sample_empirical(&half, 1, 3).unwrap();
        assert!(one.as_slice() == [1.0, 0.0] || one.as_slice() == [0.0, 1.0]);
        let p = ProbVector::new(vec![0.3, 0.7]).unwrap();
        let f = sample_empirical(&p, 100_000, 42).unwrap();
        assert!(close(f.as_slice(), p.as_slice(), 0.01));
        assert!(sample_empirical(&p, 0, 1).is_err());
    }

    #[test]
    fn zero_mass_category_never_drawn() {
        let p = ProbVector::new(vec![0.4, 0.0, 0.6, 0.0]).unwrap();
        let f = sample_empirical(&p, 50_000, 9).unwrap();
        assert_eq!(f.as_slice()[1], 0.0);
        assert_eq!(f.as_slice()[3], 0.0);
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let a = sample_empirical(&p, 777, 11).unwrap();
        let b = sample_empirical(&p, 777, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn serde_round_trip_validates() {
        let p: ProbVector = serde_json::from_str("[0.25, 0.75]").unwrap();
        assert_eq!(p.as_slice(), &[0.25, 0.75]);
        assert!(serde_json::from_str::<ProbVector>("[0.6, 0.6]").is_err());
    }
}
