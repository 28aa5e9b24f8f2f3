// SPDX-License-Identifier: Apache-2.0

//! Rockafellian relaxation for finite-support stochastic programs whose
//! probability vector (and possibly support) is only known approximately.

pub mod analysis;
pub mod cli;
pub mod divergence;
pub mod error;
pub mod extreal;
pub mod instances;
pub mod regularizer;
pub mod rockafellian;
pub mod solver;
pub mod simplex;

pub use error::{Error, Result};
pub use extreal::{ExtReal, ScenarioFunction, StochasticProgram};
pub use simplex::ProbVector;
