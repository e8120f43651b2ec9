//! Two-stage simulation-trained parameter estimation.
//!
//! A two-stage estimator compresses an observed record `y` into a short
//! feature vector `z = h(y)` and maps it to a parameter estimate
//! `θ̂ = g(z)`, where `g` is fitted offline on pairs `(θ_i, h(y_i))`
//! simulated from the model with `θ_i` drawn from a prior.
//!
//! Numerical modules are generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod asymptotics;
pub mod baselines;
pub mod compression;
pub mod domain;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod prior;
pub mod regression;
pub mod scalar;
pub mod seed;
pub mod simulators;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;
pub use seed::SeedSpec;

pub type ParameterVector = domain::ParameterVector<f64>;
pub type ObservationSeries = domain::ObservationSeries<f64>;
pub type PriorSpec = prior::PriorSpec<f64>;
pub type ModelSpec = simulators::ModelSpec<f64>;
pub type SecondStage = regression::SecondStage<f64>;
pub type Matrix = linalg::Matrix<f64>;

/// Single-precision aliases.
pub mod f32 {
    pub type ParameterVector = crate::domain::ParameterVector<f32>;
    pub type ObservationSeries = crate::domain::ObservationSeries<f32>;
    pub type PriorSpec = crate::prior::PriorSpec<f32>;
    pub type ModelSpec = crate::simulators::ModelSpec<f32>;
}
