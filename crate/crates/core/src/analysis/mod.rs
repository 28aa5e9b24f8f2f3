// SPDX-License-Identifier: Apache-2.0

//! Rate constants and bounds, empirical sampling rates, epigraphical
//! distances and first-order residuals.

pub mod empirical;
pub mod epi;
pub mod rate;
pub mod residual;

pub use empirical::{empirical_rate_check, trial_seed, EmpiricalRateReport};
pub use epi::{epi_distance_estimate, EpiEstimate};
pub use rate::{
    eta_bound, fit_rate_exponent, rate_constants, theta_schedule, verify_rate_inequality,
    RateCertificate, RateRow, THETA_CAP,
};
pub use residual::{box_normal_cone_distance, optimality_residual, F0Geometry, ResidualReport};
