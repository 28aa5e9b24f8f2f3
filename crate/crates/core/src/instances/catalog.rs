// SPDX-License-Identifier: Apache-2.0

//! Formula catalog: scenario functions, support generators and constraint
//! maps that instances are assembled from.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::extreal::{ConstraintMap, ExtReal, ScenarioFunction, SupportGenerator};
use crate::simplex::dot;

/// `H(t) = 1` for `t > 0`, else `0`.
pub fn heaviside(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `⟨coef, x⟩ + constant`.
pub fn linear(coef: Vec<f64>, constant: f64) -> ScenarioFunction {
    let g = coef.clone();
    ScenarioFunction::new("linear", move |x| ExtReal::Finite(dot(&coef, x) + constant))
        .with_gradient(move |_| Some(g.clone()))
}

/// `½ scale ‖x − center‖² + constant`.
pub fn quadratic(scale: f64, center: Vec<f64>, constant: f64) -> ScenarioFunction {
    let c = center.clone();
    ScenarioFunction::new("quadratic", move |x| {
        let sq: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
        ExtReal::Finite(0.5 * scale * sq + constant)
    })
    .with_gradient(move |x| Some(x.iter().zip(&c).map(|(a, b)| scale * (a - b)).collect()))
}

/// Hinge loss `max{0, 1 − label(⟨w, features⟩ + b)}` of the affine classifier
/// `x = (w, b)`.
pub fn hinge(features: Vec<f64>, label: f64) -> ScenarioFunction {
    let feats = features.clone();
    let margin = move |x: &[f64], f: &[f64]| {
        let d = f.len();
        label * (dot(&x[..d], f) + x[d])
    };
    ScenarioFunction::new("hinge", move |x| {
        ExtReal::Finite((1.0 - margin(x, &features)).max(0.0))
    })
    .with_piecewise_gradient(move |x| {
        let m = 1.0 - margin(x, &feats);
        if m < 0.0 {
            Some(vec![0.0; x.len()])
        } else if m > 0.0 {
            let mut g: Vec<f64> = feats.iter().map(|f| -label * f).collect();
            g.push(-label);
            Some(g)
        } else {
            None
        }
    })
}

/// `H(⟨coef, x⟩ + offset)`: gradient zero off the jump.
pub fn heaviside_composite(coef: Vec<f64>, offset: f64) -> ScenarioFunction {
    let c = coef.clone();
    ScenarioFunction::new("heaviside-composite", move |x| {
        ExtReal::Finite(heaviside(dot(&coef, x) + offset))
    })
    .with_piecewise_gradient(move |x| (dot(&c, x) + offset != 0.0).then(|| vec![0.0; x.len()]))
}

/// Logistic cross-entropy `−log g` with `g = σ(⟨features, x⟩)` for label 1
/// and `1 − g` for label 0. With `saturate`, a zero model probability is
/// kept as `+∞` rather than a large finite value.
pub fn cross_entropy(features: Vec<f64>, label: u8, saturate: bool) -> ScenarioFunction {
    let sign = if label == 1 { 1.0 } else { -1.0 };
    let feats = features.clone();
    ScenarioFunction::new("cross-entropy", move |x| {
        let t = sign * dot(&features, x);
        // log(1 + e^{−t}) evaluated stably
        let v = if t > 0.0 {
            (-t).exp().ln_1p()
        } else {
            -t + t.exp().ln_1p()
        };
        if saturate && v.is_infinite() {
            ExtReal::PosInf
        } else {
            ExtReal::from(v)
        }
    })
    .with_gradient(move |x| {
        let t = sign * dot(&feats, x);
        let w = -sign / (1.0 + t.exp());
        Some(feats.iter().map(|f| w * f).collect())
    })
}

/// `g(ξ, x) = ⟨ξ, x⟩ + ⟨coef, x⟩ + offset`.
#[derive(Clone, Debug)]
pub struct Bilinear {
    pub coef: Vec<f64>,
    pub offset: f64,
}

impl SupportGenerator for Bilinear {
    fn eval(&self, xi: &[f64], x: &[f64]) -> ExtReal {
        ExtReal::Finite(dot(xi, x) + dot(&self.coef, x) + self.offset)
    }

    fn gradient(&self, xi: &[f64], _x: &[f64]) -> Option<Vec<f64>> {
        Some(xi.iter().zip(&self.coef).map(|(a, b)| a + b).collect())
    }

    fn gradient_kind(&self) -> Option<bool> {
        Some(true)
    }
}

/// `g(ξ, x) = H(Σₖ ξₖ + ⟨coef, x⟩ + offset)`.
#[derive(Clone, Debug)]
pub struct HeavisideAffine {
    pub coef: Vec<f64>,
    pub offset: f64,
}

impl HeavisideAffine {
    fn level(&self, xi: &[f64], x: &[f64]) -> f64 {
        xi.iter().sum::<f64>() + dot(&self.coef, x) + self.offset
    }
}

impl SupportGenerator for HeavisideAffine {
    fn eval(&self, xi: &[f64], x: &[f64]) -> ExtReal {
        ExtReal::Finite(heaviside(self.level(xi, x)))
    }

    /// Either stay put (cost `weight · H`) or take the shortest shift onto
    /// `{level ≤ 0}`, `v = −(level/m)·1` with cost `½λ level²/m`. Ties keep
    /// `v = 0`.
    fn support_step(&self, weight: f64, lambda: f64, xi: &[f64], x: &[f64]) -> Option<Vec<f64>> {
        let m = xi.len();
        let level = self.level(xi, x);
        if level <= 0.0 || weight <= 0.0 || m == 0 {
            return Some(vec![0.0; m]);
        }
        let mut shift = -level / m as f64;
        // rounding can leave the shifted level a hair above zero
        for _ in 0..64 {
            let moved: Vec<f64> = xi.iter().map(|v| v + shift).collect();
            if self.level(&moved, x) <= 0.0 {
                break;
            }
            shift = shift.next_down();
        }
        let move_cost = 0.5 * lambda * shift * shift * m as f64;
        if move_cost < weight {
            Some(vec![shift; m])
        } else {
            Some(vec![0.0; m])
        }
    }

    fn gradient(&self, xi: &[f64], x: &[f64]) -> Option<Vec<f64>> {
        (self.level(xi, x) != 0.0).then(|| vec![0.0; x.len()])
    }

    fn gradient_kind(&self) -> Option<bool> {
        Some(false)
    }
}

/// How the mean of the sensitive attribute is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanMode {
    /// `z̄ = Σ wᵢ zᵢ` under the weights being evaluated.
    Perturbed,
    /// `z̄` fixed at the value under the actual probabilities.
    Frozen,
}

/// Covariance between a sensitive attribute and an affine score,
/// `Gᵢ(w, b) = (zᵢ − z̄)(⟨w, featuresᵢ⟩ + b)`.
#[derive(Clone, Debug)]
pub struct FairnessCovariance {
    pub features: Vec<Vec<f64>>,
    pub sensitive: Vec<f64>,
    /// `Some(z̄)` in frozen mode.
    pub frozen_mean: Option<f64>,
}

impl FairnessCovariance {
    pub fn new(
        features: Vec<Vec<f64>>,
        sensitive: Vec<f64>,
        mode: MeanMode,
        p: &[f64],
    ) -> Result<Self> {
        Error::check_len("sensitive attributes", features.len(), sensitive.len())?;
        Error::check_len("probabilities", features.len(), p.len())?;
        let frozen_mean = match mode {
            MeanMode::Frozen => Some(dot(p, &sensitive)),
            MeanMode::Perturbed => None,
        };
        Ok(FairnessCovariance {
            features,
            sensitive,
            frozen_mean,
        })
    }
}

impl ConstraintMap for FairnessCovariance {
    fn dim(&self) -> usize {
        1
    }

    fn components(&self, weights: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mean = self.frozen_mean.unwrap_or_else(|| {
            let total: f64 = weights.iter().sum();
            dot(weights, &self.sensitive) / total
        });
        self.features
            .iter()
            .zip(&self.sensitive)
            .map(|(f, z)| {
                let d = f.len();
                vec![(z - mean) * (dot(&x[..d], f) + x[d])]
            })
            .collect()
    }
}

/// `Gᵢ(x) = Aᵢ x + cᵢ` with one row per constraint.
#[derive(Clone, Debug)]
pub struct ScenarioAffine {
    /// `rows[i][k]`: coefficients of constraint `k` in scenario `i`.
    pub rows: Vec<Vec<Vec<f64>>>,
    pub constants: Vec<Vec<f64>>,
}

impl ConstraintMap for ScenarioAffine {
    fn dim(&self) -> usize {
        self.constants.first().map_or(0, Vec::len)
    }

    fn components(&self, _weights: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .zip(&self.constants)
            .map(|(rows, c)| rows.iter().zip(c).map(|(r, ck)| dot(r, x) + ck).collect())
            .collect()
    }
}

pub(crate) fn generator_arc<G: SupportGenerator + 'static>(g: G) -> Arc<dyn SupportGenerator> {
    Arc::new(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heaviside_step_reaches_zero_level() {
        let g = HeavisideAffine {
            coef: vec![1.0],
            offset: 0.0,
        };
        // ξ = 0.01, x = 0: shifting costs ½·λ·10⁻⁴
        let v = g.support_step(0.5, 100.0, &[0.01], &[0.0]).unwrap();
        assert_eq!(g.eval(&[0.01 + v[0]], &[0.0]), ExtReal::ZERO);
        let v = g.support_step(0.5, 1e6, &[0.01], &[0.0]).unwrap();
        assert_eq!(v, vec![0.0]);
        for &(xi, x) in &[(0.3, 0.7), (1.0 / 3.0, 0.1), (0.1, 0.2)] {
            let v = g.support_step(1.0, 1.0, &[xi], &[x]).unwrap();
            assert_eq!(g.eval(&[xi + v[0]], &[x]), ExtReal::ZERO, "{xi} {x}");
        }
    }

    #[test]
    fn heaviside_step_beats_grid() {
        let g = HeavisideAffine {
            coef: vec![1.0],
            offset: 0.0,
        };
        for &(w, lambda, xi, x) in &[(0.5, 10.0, 0.2, 0.1), (0.5, 30.0, 0.2, 0.1), (0.2, 3.0, 0.5, 0.0)] {
            let obj = |v: f64| w * g.eval(&[xi + v], &[x]).to_f64() + 0.5 * lambda * v * v;
            let v = g.support_step(w, lambda, &[xi], &[x]).unwrap()[0];
            let grid = (0..=4000)
                .map(|k| obj(-2.0 + k as f64 * 1e-3))
                .fold(f64::INFINITY, f64::min);
            assert!(obj(v) <= grid + 1e-12);
        }
    }

    #[test]
    fn hinge_gradient_matches_differences() {
        let f = hinge(vec![2.0], -1.0);
        let x = [0.3, -0.4];
        let err = f.gradient_fd_error(&x, 1e-6).unwrap();
        assert!(err < 1e-6);
    }

    #[test]
    fn cross_entropy_is_stable() {
        let f = cross_entropy(vec![1.0], 1, false);
        assert!((f.eval(&[0.0]).to_f64() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(f.eval(&[-1000.0]).to_f64() > 999.0);
        assert!(f.gradient_fd_error(&[0.7], 1e-6).unwrap() < 1e-6);
    }

    #[test]
    fn covariance_means() {
        let m = FairnessCovariance::new(
            vec![vec![-1.0], vec![1.0]],
            vec![0.0, 1.0],
            MeanMode::Frozen,
            &[0.5, 0.5],
        )
        .unwrap();
        // ½[(−½)(−a + α) + ½(a + α)] = a/2
        let agg = m.aggregate(&[0.5, 0.5], &[0.5, 0.3]);
        assert!((agg[0] - 0.25).abs() < 1e-15);
    }
}
