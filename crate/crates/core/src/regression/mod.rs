//! Second-stage regressors mapping compressed features to θ̂.

pub mod linear;
pub mod mlp;
pub mod poly;

use serde::{Deserialize, Serialize};

use crate::domain::ParameterVector;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub use linear::{fit_linear, LinearFit, LinearSecondStage, Ridge};
pub use mlp::{fit_mlp, MlpConfig, MlpFit, MlpSecondStage};
pub use poly::PolyFeatureMap;

/// A trained second stage g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SecondStage<T> {
    Linear(LinearSecondStage<T>),
    Mlp(MlpSecondStage<T>),
}

impl<T: Real> SecondStage<T> {
    pub fn input_dim(&self) -> usize {
        match self {
            SecondStage::Linear(s) => s.input_dim(),
            SecondStage::Mlp(s) => s.input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            SecondStage::Linear(s) => s.output_dim(),
            SecondStage::Mlp(s) => s.output_dim,
        }
    }
}

/// θ̂ = g(z).
pub fn predict<T: Real>(stage: &SecondStage<T>, z: &[T]) -> Result<ParameterVector<T>> {
    if z.len() != stage.input_dim() {
        return Err(Error::config(format!(
            "second stage expects {} features, got {}",
            stage.input_dim(),
            z.len()
        )));
    }
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("non-finite feature value"));
    }
    let raw = match stage {
        SecondStage::Linear(s) => s.predict_raw(z)?,
        SecondStage::Mlp(s) => s.predict_raw(z)?,
    };
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("second stage produced a non-finite estimate"));
    }
    ParameterVector::new(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    #[test]
    fn predict_checks_input() {
        let map = PolyFeatureMap::new(2, 1).unwrap();
        let beta = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let stage = SecondStage::Linear(LinearSecondStage::new(map, beta).unwrap());
        assert_eq!(predict(&stage, &[1.0, 1.0]).unwrap().as_slice(), &[6.0]);
        assert!(matches!(predict(&stage, &[1.0]), Err(Error::Config(_))));
        assert!(matches!(predict(&stage, &[1.0, f64::NAN]), Err(Error::Domain(_))));
    }
}
