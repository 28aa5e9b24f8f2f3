// SPDX-License-Identifier: Apache-2.0

//! Φ-divergences `d_Φ(q | q̄) = Σ q̄ᵢ Φ(qᵢ / q̄ᵢ)` with the conventions
//! `0 · Φ(0/0) = 0` and `0 · Φ(β/0) = β · lim_{t→∞} Φ(t)/t`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extreal::{scale, ExtReal};
use crate::simplex::ProbVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiFamily {
    KullbackLeibler,
    Burg,
    JDivergence,
    ChiSquared,
    ModifiedChiSquared,
    Variational,
    Hellinger,
}

impl PhiFamily {
    pub const ALL: [PhiFamily; 7] = [
        PhiFamily::KullbackLeibler,
        PhiFamily::Burg,
        PhiFamily::JDivergence,
        PhiFamily::ChiSquared,
        PhiFamily::ModifiedChiSquared,
        PhiFamily::Variational,
        PhiFamily::Hellinger,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            PhiFamily::KullbackLeibler => "kullback-leibler",
            PhiFamily::Burg => "burg",
            PhiFamily::JDivergence => "j-divergence",
            PhiFamily::ChiSquared => "chi-squared",
            PhiFamily::ModifiedChiSquared => "modified-chi-squared",
            PhiFamily::Variational => "variational",
            PhiFamily::Hellinger => "hellinger",
        }
    }

    /// `lim_{t→∞} Φ(t)/t`.
    pub fn limit_slope(self) -> ExtReal {
        match self {
            PhiFamily::KullbackLeibler | PhiFamily::JDivergence | PhiFamily::ChiSquared => {
                ExtReal::PosInf
            }
            PhiFamily::Burg
            | PhiFamily::ModifiedChiSquared
            | PhiFamily::Variational
            | PhiFamily::Hellinger => ExtReal::Finite(1.0),
        }
    }

    /// Smallest `t ≥ 0` minimizing `Φ(t) − slope · t`, or `+∞` when the
    /// infimum is not attained (slope at or beyond the limit slope).
    pub fn tilted_minimizer(self, slope: f64) -> f64 {
        match self {
            PhiFamily::KullbackLeibler => slope.exp(),
            PhiFamily::Burg => {
                if slope < 1.0 {
                    1.0 / (1.0 - slope)
                } else {
                    f64::INFINITY
                }
            }
            PhiFamily::JDivergence => j_derivative_inverse(slope),
            PhiFamily::ChiSquared => (1.0 + 0.5 * slope).max(0.0),
            PhiFamily::ModifiedChiSquared => {
                if slope < 1.0 {
                    1.0 / (1.0 - slope).sqrt()
                } else {
                    f64::INFINITY
                }
            }
            PhiFamily::Variational => {
                if slope < -1.0 {
                    0.0
                } else if slope < 1.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            }
            PhiFamily::Hellinger => {
                if slope < 1.0 {
                    1.0 / ((1.0 - slope) * (1.0 - slope))
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Validates `Φ(1) = 0`, positivity away from 1 on `(0, 10]`, `+∞` on
    /// negatives and midpoint convexity on `[0, 10]`.
    pub fn check_axioms(self) -> Result<()> {
        let fail = |what: String| Err(Error::InvalidParameter(format!("{}: {what}", self.tag())));
        if phi_eval(self, 1.0) != ExtReal::ZERO {
            return fail("phi(1) != 0".into());
        }
        if phi_eval(self, -0.5) != ExtReal::PosInf {
            return fail("phi is finite on negatives".into());
        }
        for k in 1..=1000 {
            let t = k as f64 * 0.01;
            if (t - 1.0).abs() > 1e-9 && phi_eval(self, t).to_f64() <= 0.0 {
                return fail(format!("phi({t}) is not positive"));
            }
            if phi_eval(self, t).finite().is_none() {
                return fail(format!("phi({t}) is not real"));
            }
        }
        for i in 0..=100 {
            for j in (i + 1)..=100 {
                let (a, b) = (i as f64 * 0.1, j as f64 * 0.1);
                let mid = phi_eval(self, 0.5 * (a + b)).to_f64();
                let chord = 0.5 * phi_eval(self, a).to_f64() + 0.5 * phi_eval(self, b).to_f64();
                if mid > chord + 1e-10 {
                    return fail(format!("midpoint convexity fails on [{a}, {b}]"));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for PhiFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PhiFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        let family = match key.as_str() {
            "kl" | "kullback-leibler" => PhiFamily::KullbackLeibler,
            "burg" => PhiFamily::Burg,
            "j" | "j-divergence" => PhiFamily::JDivergence,
            "chi2" | "chi-squared" => PhiFamily::ChiSquared,
            "modified-chi2" | "modified-chi-squared" => PhiFamily::ModifiedChiSquared,
            "variational" | "tv" => PhiFamily::Variational,
            "hellinger" => PhiFamily::Hellinger,
            _ => return Err(Error::InvalidParameter(format!("unknown divergence `{s}`"))),
        };
        Ok(family)
    }
}

/// `Φ(t)`, with `+∞` for `t < 0`.
pub fn phi_eval(family: PhiFamily, t: f64) -> ExtReal {
    if t.is_nan() || t < 0.0 {
        return ExtReal::PosInf;
    }
    if t == f64::INFINITY {
        return ExtReal::PosInf;
    }
    let v = match family {
        PhiFamily::KullbackLeibler => {
            if t == 0.0 {
                1.0
            } else {
                t * t.ln() - t + 1.0
            }
        }
        PhiFamily::Burg => {
            if t == 0.0 {
                return ExtReal::PosInf;
            }
            -t.ln() + t - 1.0
        }
        PhiFamily::JDivergence => {
            if t == 0.0 {
                return ExtReal::PosInf;
            }
            (t - 1.0) * t.ln()
        }
        PhiFamily::ChiSquared => (t - 1.0) * (t - 1.0),
        PhiFamily::ModifiedChiSquared => {
            if t == 0.0 {
                return ExtReal::PosInf;
            }
            (t - 1.0) * (t - 1.0) / t
        }
        PhiFamily::Variational => (t - 1.0).abs(),
        PhiFamily::Hellinger => {
            let r = t.sqrt() - 1.0;
            r * r
        }
    };
    ExtReal::from(v)
}

/// One term `q̄ Φ(q / q̄)` under the zero conventions.
pub fn phi_term(family: PhiFamily, q: f64, q_base: f64) -> ExtReal {
    if q_base > 0.0 {
        scale(q_base, phi_eval(family, q / q_base))
    } else if q == 0.0 {
        ExtReal::ZERO
    } else if q < 0.0 {
        ExtReal::PosInf
    } else {
        scale(q, family.limit_slope())
    }
}

pub fn phi_divergence(family: PhiFamily, q: &ProbVector, q_base: &ProbVector) -> Result<ExtReal> {
    Error::check_len("divergence arguments", q_base.len(), q.len())?;
    Ok(divergence_raw(family, q.as_slice(), q_base.as_slice()))
}

pub(crate) fn divergence_raw(family: PhiFamily, q: &[f64], q_base: &[f64]) -> ExtReal {
    q.iter()
        .zip(q_base)
        .fold(ExtReal::ZERO, |acc, (&qi, &bi)| acc + phi_term(family, qi, bi))
}

/// Inverse of `Φ'(t) = ln t + 1 − 1/t` for the J-divergence, solved in
/// `y = ln t` where the map `y ↦ y + 1 − e^{−y}` is increasing.
fn j_derivative_inverse(slope: f64) -> f64 {
    let g = |y: f64| y + 1.0 - (-y).exp() - slope;
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) > 0.0 {
        lo *= 2.0;
        if lo < -800.0 {
            return 0.0;
        }
    }
    while g(hi) < 0.0 {
        hi *= 2.0;
        if hi > 800.0 {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}
