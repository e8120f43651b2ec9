use serde::{Deserialize, Serialize};

use crate::domain::ParameterVector;
use crate::error::{Error, Result};
use crate::linalg::{default_rank_tolerance, least_squares, ridge_least_squares, Matrix};
use crate::regression::poly::PolyFeatureMap;
use crate::scalar::Real;

/// Ridge policy for [`fit_linear`].
///
/// In config files this is written as `"none"`, `"auto"` or a number λ.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RidgeRepr<T>",
    into = "RidgeRepr<T>",
    bound(serialize = "T: Real", deserialize = "T: Real")
)]
pub enum Ridge<T> {
    /// Plain least squares; a singular Gram matrix is an error.
    None,
    /// Minimise (1/m)Σ‖θ̃ − βᵀJ‖² + λ‖β‖².
    Fixed(T),
    /// Plain least squares, falling back to a penalty of
    /// 10⁻¹⁰·trace(Σ J Jᵀ)/p when the Gram matrix is singular.
    #[default]
    Auto,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RidgeRepr<T> {
    Named(String),
    Value(T),
}

impl<T: Real> TryFrom<RidgeRepr<T>> for Ridge<T> {
    type Error = Error;

    fn try_from(r: RidgeRepr<T>) -> Result<Self> {
        match r {
            RidgeRepr::Named(s) if s == "none" => Ok(Ridge::None),
            RidgeRepr::Named(s) if s == "auto" => Ok(Ridge::Auto),
            RidgeRepr::Named(s) => Err(Error::config(format!("unknown ridge policy {s:?}"))),
            RidgeRepr::Value(v) => Ok(Ridge::Fixed(v)),
        }
    }
}

impl<T> From<Ridge<T>> for RidgeRepr<T> {
    fn from(r: Ridge<T>) -> Self {
        match r {
            Ridge::None => RidgeRepr::Named("none".into()),
            Ridge::Auto => RidgeRepr::Named("auto".into()),
            Ridge::Fixed(v) => RidgeRepr::Value(v),
        }
    }
}

/// β̂ together with fit diagnostics.
#[derive(Debug, Clone)]
pub struct LinearFit<T> {
    /// p × d coefficient matrix.
    pub beta: Matrix<T>,
    /// (1/m) Σ ‖θ̃_i − β̂ᵀJ_i‖².
    pub training_mse: T,
    /// ‖Σ J_i(θ̃_i − β̂ᵀJ_i)ᵀ‖ / ‖Σ J_i θ̃_iᵀ‖.
    pub normal_residual: T,
    /// Condition estimate of the design matrix.
    pub condition: f64,
    /// Effective penalty λ actually applied (0 for a plain fit).
    pub ridge_applied: T,
}

/// Least-squares coefficients β̂ = argmin (1/m) Σ ‖θ̃_i − βᵀJ_i‖² (+ ridge).
///
/// Solved by pivoted QR on the stacked design matrix rather than by
/// inverting Σ J Jᵀ.
pub fn fit_linear<T: Real>(
    features: &[Vec<T>],
    targets: &[ParameterVector<T>],
    ridge: Ridge<T>,
) -> Result<LinearFit<T>> {
    let m = features.len();
    if m == 0 || m != targets.len() {
        return Err(Error::config(format!(
            "need equally many feature vectors and targets (got {m} and {})",
            targets.len()
        )));
    }
    let p = features[0].len();
    let d = targets[0].dim();
    if features.iter().any(|f| f.len() != p) || targets.iter().any(|t| t.dim() != d) {
        return Err(Error::config("inconsistent feature or target dimensions"));
    }
    if features.iter().any(|f| f.iter().any(|x| !x.is_finite())) {
        return Err(Error::domain("non-finite feature value"));
    }
    let design = Matrix::from_row_major(m, p, features.concat())?;
    let rhs = Matrix::from_row_major(m, d, targets.iter().flat_map(|t| t.as_slice().to_vec()).collect())?;
    let mf = T::from_count(m);

    let plain = || least_squares(&design, &rhs, default_rank_tolerance::<T>(m, p));
    let (ls, lambda) = match ridge {
        Ridge::None => (plain()?, T::zero()),
        Ridge::Fixed(lambda) => {
            if !(lambda >= T::zero() && lambda.is_finite()) {
                return Err(Error::config("ridge penalty must be finite and non-negative"));
            }
            if lambda == T::zero() {
                (plain()?, T::zero())
            } else {
                (ridge_least_squares(&design, &rhs, (mf * lambda).sqrt())?, lambda)
            }
        }
        Ridge::Auto => match plain() {
            Ok(ls) => (ls, T::zero()),
            Err(Error::RankDeficient { condition }) => {
                let gram_trace: T = design.as_slice().iter().map(|&x| x * x).sum();
                let weight2 = T::lit(1e-10) * gram_trace / T::from_count(p);
                if !(weight2 > T::zero()) {
                    return Err(Error::RankDeficient { condition });
                }
                let ls = ridge_least_squares(&design, &rhs, weight2.sqrt())?;
                (ls, weight2 / mf)
            }
            Err(e) => return Err(e),
        },
    };

    let beta = ls.solution;
    let fitted = &design * &beta;
    let resid = rhs.sub(&fitted);
    let training_mse = resid.frobenius_norm().powi(2) / mf;
    let xt = design.transpose();
    let normal = (&xt * &resid).frobenius_norm();
    let scale = (&xt * &rhs).frobenius_norm();
    let normal_residual = if scale > T::zero() { normal / scale } else { normal };
    Ok(LinearFit {
        beta,
        training_mse,
        normal_residual,
        condition: ls.condition,
        ridge_applied: lambda,
    })
}

/// g(z) = βᵀJ(z).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSecondStage<T> {
    pub feature_map: PolyFeatureMap,
    /// p × d.
    pub beta: Matrix<T>,
}

impl<T: Real> LinearSecondStage<T> {
    pub fn new(feature_map: PolyFeatureMap, beta: Matrix<T>) -> Result<Self> {
        if beta.rows() != feature_map.output_dim() || beta.cols() == 0 {
            return Err(Error::config(format!(
                "β is {}x{} but the feature map has {} features",
                beta.rows(),
                beta.cols(),
                feature_map.output_dim()
            )));
        }
        if !beta.is_finite() {
            return Err(Error::domain("β has a non-finite entry"));
        }
        Ok(Self { feature_map, beta })
    }

    /// Maps raw features through J and fits β̂.
    pub fn fit(
        feature_map: PolyFeatureMap,
        zs: &[Vec<T>],
        targets: &[ParameterVector<T>],
        ridge: Ridge<T>,
    ) -> Result<(Self, LinearFit<T>)> {
        let features = zs.iter().map(|z| feature_map.features(z)).collect::<Result<Vec<_>>>()?;
        let fit = fit_linear(&features, targets, ridge)?;
        Ok((Self::new(feature_map, fit.beta.clone())?, fit))
    }

    pub fn input_dim(&self) -> usize {
        self.feature_map.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.beta.cols()
    }

    pub fn predict_raw(&self, z: &[T]) -> Result<Vec<T>> {
        let j = self.feature_map.features(z)?;
        Ok(self.beta.tr_mul_vec(&j))
    }

    /// d × n Jacobian βᵀ∇J(z) of the prediction.
    pub fn prediction_jacobian(&self, z: &[T]) -> Result<Matrix<T>> {
        let jac = self.feature_map.jacobian(z)?;
        Ok(&self.beta.transpose() * &jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(x: f64) -> ParameterVector<f64> {
        ParameterVector::scalar(x).unwrap()
    }

    #[test]
    fn exact_line() {
        let feats = vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]];
        let targets = vec![pv(1.0), pv(3.0), pv(5.0)];
        let fit = fit_linear(&feats, &targets, Ridge::None).unwrap();
        assert!((fit.beta[(0, 0)] - 1.0).abs() < 1e-10);
        assert!((fit.beta[(1, 0)] - 2.0).abs() < 1e-10);
        assert!(fit.training_mse < 1e-20);
    }

    #[test]
    fn constant_targets() {
        let feats: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64, (i * i) as f64]).collect();
        let targets = vec![pv(4.25); 10];
        let fit = fit_linear(&feats, &targets, Ridge::None).unwrap();
        let design = Matrix::from_rows(&feats).unwrap();
        for y in design.mul_vec(&fit.beta.column(0)) {
            assert!((y - 4.25).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_gram_policy() {
        let feats = vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]];
        let targets = vec![pv(1.0), pv(2.0), pv(3.0)];
        assert!(matches!(
            fit_linear(&feats, &targets, Ridge::None),
            Err(Error::RankDeficient { .. })
        ));
        let auto = fit_linear(&feats, &targets, Ridge::Auto).unwrap();
        assert!(auto.ridge_applied > 0.0);
        assert!(auto.training_mse < 1e-12);
        let fixed = fit_linear(&feats, &targets, Ridge::Fixed(0.1)).unwrap();
        assert!(fixed.training_mse > auto.training_mse);
        assert!(fit_linear(&feats, &targets, Ridge::Fixed(-1.0)).is_err());
    }

    #[test]
    fn fixed_ridge_matches_closed_form() {
        // One feature: β = Σxy / (Σx² + mλ).
        let xs = [1.0, 2.0, -1.0, 0.5];
        let ys = [2.0, 3.5, -2.5, 1.0];
        let lambda = 0.3;
        let feats: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let targets: Vec<_> = ys.iter().map(|&y| pv(y)).collect();
        let fit = fit_linear(&feats, &targets, Ridge::Fixed(lambda)).unwrap();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let want = sxy / (sxx + 4.0 * lambda);
        assert!((fit.beta[(0, 0)] - want).abs() < 1e-12);
    }

    #[test]
    fn input_validation() {
        assert!(fit_linear::<f64>(&[], &[], Ridge::None).is_err());
        let feats = vec![vec![1.0], vec![1.0, 2.0]];
        assert!(fit_linear(&feats, &[pv(1.0), pv(2.0)], Ridge::None).is_err());
        let nan = vec![vec![f64::NAN]];
        assert!(fit_linear(&nan, &[pv(1.0)], Ridge::None).is_err());
    }

    #[test]
    fn ridge_config_forms() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct W {
            ridge: Ridge<f64>,
        }
        for r in [Ridge::None, Ridge::Auto, Ridge::Fixed(0.25)] {
            let text = toml::to_string(&W { ridge: r }).unwrap();
            assert_eq!(toml::from_str::<W>(&text).unwrap().ridge, r);
        }
        assert_eq!(toml::from_str::<W>("ridge = \"auto\"").unwrap().ridge, Ridge::Auto);
        assert!(toml::from_str::<W>("ridge = \"sometimes\"").is_err());
    }

    #[test]
    fn stage_shape_checks() {
        let map = PolyFeatureMap::new(1, 1).unwrap();
        assert!(LinearSecondStage::new(map.clone(), Matrix::<f64>::zeros(3, 1)).is_err());
        let stage = LinearSecondStage::new(map, Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap()).unwrap();
        assert_eq!(stage.predict_raw(&[4.0]).unwrap(), vec![9.0]);
        assert!(stage.predict_raw(&[4.0, 1.0]).is_err());
    }
}
