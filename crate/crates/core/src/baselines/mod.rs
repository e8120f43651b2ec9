//! Comparison estimators for the controlled system: an augmented-state
//! extended Kalman filter and a multi-start prediction-error method.

pub mod ekf;
pub mod optimize;
pub mod pem;

pub use ekf::{ekf_estimate, EkfConfig, EkfResult};
pub use pem::{pem_estimate, pem_from_starts, PemConfig, PemResult};
