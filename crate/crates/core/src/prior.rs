use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::ParameterVector;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed::SeedSpec;

/// Prior over the parameter space. Only uniform boxes are supported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PriorSpec<T> {
    UniformBox { lower: Vec<T>, upper: Vec<T> },
}

impl<T: Real> PriorSpec<T> {
    pub fn uniform_box(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        let prior = PriorSpec::UniformBox { lower, upper };
        prior.validate()?;
        Ok(prior)
    }

    /// Scalar uniform prior U[lower, upper].
    pub fn uniform(lower: T, upper: T) -> Result<Self> {
        Self::uniform_box(vec![lower], vec![upper])
    }

    pub fn validate(&self) -> Result<()> {
        let PriorSpec::UniformBox { lower, upper } = self;
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::config(format!(
                "prior bounds must be non-empty and of equal length (got {} and {})",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config(format!(
                    "prior bound {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        let PriorSpec::UniformBox { lower, .. } = self;
        lower.len()
    }

    /// Mean of the prior, used as the trivial predict-the-mean baseline.
    pub fn mean(&self) -> Vec<T> {
        let PriorSpec::UniformBox { lower, upper } = self;
        lower
            .iter()
            .zip(upper)
            .map(|(&lo, &hi)| (lo + hi) / T::lit(2.0))
            .collect()
    }

    /// Per-coordinate variance (b − a)²/12.
    pub fn variance(&self) -> Vec<T> {
        let PriorSpec::UniformBox { lower, upper } = self;
        lower
            .iter()
            .zip(upper)
            .map(|(&lo, &hi)| (hi - lo).powi(2) / T::lit(12.0))
            .collect()
    }

    /// Draws one parameter vector from `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector<T> {
        let PriorSpec::UniformBox { lower, upper } = self;
        let values = lower
            .iter()
            .zip(upper)
            .map(|(&lo, &hi)| {
                let u = T::lit(rng.random::<f64>());
                // u < 1, but rounding in lo + w·u can still land on hi.
                (lo + (hi - lo) * u).min(hi)
            })
            .collect();
        ParameterVector::new(values).expect("finite prior bounds give finite draws")
    }

    pub fn contains(&self, theta: &ParameterVector<T>) -> bool {
        let PriorSpec::UniformBox { lower, upper } = self;
        theta.dim() == lower.len()
            && theta
                .as_slice()
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(t, (lo, hi))| lo <= t && t <= hi)
    }
}

/// Draws `count` i.i.d. parameters from `prior`, deterministically in `seed`.
pub fn sample_prior<T: Real>(prior: &PriorSpec<T>, count: usize, seed: SeedSpec) -> Result<Vec<ParameterVector<T>>> {
    prior.validate()?;
    if count == 0 {
        return Err(Error::config("sample count must be at least 1"));
    }
    let mut rng = seed.rng();
    Ok((0..count).map(|_| prior.draw(&mut rng)).collect())
}
