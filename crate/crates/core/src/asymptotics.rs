//! Large-sample quantities for the quantile-based estimator: the quantile
//! CLT covariance Σ, the Delta-method covariance Σ_TS, the Cramér–Rao
//! bound of the SNR experiment, and Monte Carlo checkers for the quantile
//! limit theorems.

use std::io::Write;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compression::{order_statistics, QuantileLevels};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::regression::LinearSecondStage;
use crate::scalar::Real;
use crate::seed::SeedSpec;
use crate::stats::{mean, normal_cdf, normal_pdf, normal_quantile, sample_variance};

/// Continuous observation density f_θ with cdf F_θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensitySpec<T> {
    Gaussian { mu: T, sigma2: T },
}

impl<T: Real> DensitySpec<T> {
    pub fn gaussian(mu: T, sigma2: T) -> Result<Self> {
        let d = DensitySpec::Gaussian { mu, sigma2 };
        d.validate()?;
        Ok(d)
    }

    /// Observation density of the SNR model at θ: N(μ, μ²/θ).
    pub fn snr(mu: T, theta: T) -> Result<Self> {
        if !(theta > T::zero()) {
            return Err(Error::domain(format!("SNR parameter must be positive, got {theta}")));
        }
        Self::gaussian(mu, mu * mu / theta)
    }

    pub fn validate(&self) -> Result<()> {
        let DensitySpec::Gaussian { mu, sigma2 } = *self;
        if !mu.is_finite() || !(sigma2 > T::zero() && sigma2.is_finite()) {
            return Err(Error::config(format!(
                "Gaussian density needs finite mean and positive variance, got ({mu}, {sigma2})"
            )));
        }
        Ok(())
    }

    fn mu_sd(&self) -> (T, T) {
        let DensitySpec::Gaussian { mu, sigma2 } = *self;
        (mu, sigma2.sqrt())
    }

    pub fn pdf(&self, x: T) -> T {
        let (mu, sd) = self.mu_sd();
        normal_pdf((x - mu) / sd) / sd
    }

    pub fn cdf(&self, x: T) -> T {
        let (mu, sd) = self.mu_sd();
        normal_cdf((x - mu) / sd)
    }

    pub fn quantile(&self, gamma: T) -> T {
        let (mu, sd) = self.mu_sd();
        mu + sd * normal_quantile(gamma)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let (mu, sd) = self.mu_sd();
        let z: f64 = rng.sample(StandardNormal);
        mu + sd * T::lit(z)
    }

    /// h⁰(γ) = (F⁻¹(γ_1), …, F⁻¹(γ_n)).
    pub fn population_quantiles(&self, levels: &QuantileLevels) -> Vec<T> {
        levels.gammas::<T>().into_iter().map(|g| self.quantile(g)).collect()
    }

    /// Asymptotic variance γ(1−γ)/f(F⁻¹(γ))² of √N(q̂_N(γ) − F⁻¹(γ)).
    pub fn quantile_variance(&self, gamma: T) -> Result<T> {
        let f = self.pdf(self.quantile(gamma));
        if !(f > T::zero()) || !f.is_finite() {
            return Err(Error::Support { gamma: gamma.as_f64() });
        }
        Ok(gamma * (T::one() - gamma) / (f * f))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCovariance<T> {
    pub levels: QuantileLevels,
    /// n × n, diagonal.
    pub sigma: Matrix<T>,
}

/// Σ = diag(γ_k(1−γ_k)/f(F⁻¹(γ_k))²).
pub fn quantile_covariance<T: Real>(
    density: &DensitySpec<T>,
    levels: &QuantileLevels,
) -> Result<QuantileCovariance<T>> {
    density.validate()?;
    let diag = levels
        .gammas::<T>()
        .into_iter()
        .map(|g| density.quantile_variance(g))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantileCovariance {
        levels: *levels,
        sigma: Matrix::from_diagonal(&diag),
    })
}

/// Σ_TS = β̄ᵀ∇J(h⁰) Σ ∇J(h⁰)ᵀβ̄, the d × d asymptotic covariance of
/// √N(θ̂ − θ̄) for a polynomial second stage on quantile features.
pub fn ts_asymptotic_variance<T: Real>(
    stage: &LinearSecondStage<T>,
    density: &DensitySpec<T>,
    levels: &QuantileLevels,
) -> Result<Matrix<T>> {
    if stage.input_dim() != levels.n() {
        return Err(Error::config(format!(
            "second stage expects {} features but there are {} quantile levels",
            stage.input_dim(),
            levels.n()
        )));
    }
    let cov = quantile_covariance(density, levels)?;
    let h0 = density.population_quantiles(levels);
    let g = stage.prediction_jacobian(&h0)?;
    let mut sandwich = &(&g * &cov.sigma) * &g.transpose();
    sandwich.symmetrize();
    Ok(sandwich)
}

/// How to evaluate the Cramér–Rao bound of the SNR experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CrbMode {
    /// The closed form 4θμ²/N printed with the SNR experiment.
    Paper,
    /// 1/Î(θ), with Î the Monte Carlo variance of the score over
    /// `records` simulated records.
    Independent { records: usize, seed: SeedSpec },
}

/// Minimum number of records for [`CrbMode::Independent`].
pub const MIN_SCORE_RECORDS: usize = 100_000;

/// Score ∂/∂θ log p(y; θ) of an SNR record through its sufficient
/// statistic S = Σ(y_t − μ)². With σ² = μ²/θ,
/// ∂/∂θ log p = (−N/(2σ²) + S/(2σ⁴)) · (−μ²/θ²).
pub fn snr_score(mu: f64, theta: f64, n: usize, s: f64) -> f64 {
    let s2 = mu * mu / theta;
    (-(n as f64) / (2.0 * s2) + s / (2.0 * s2 * s2)) * (-mu * mu / (theta * theta))
}

/// Closed-form Fisher-information CRB of the SNR parameter, 2θ²/N.
pub fn crb_snr_analytic(theta: f64, n: usize) -> f64 {
    2.0 * theta * theta / n as f64
}

pub fn crb_snr(mu: f64, theta: f64, n: usize, mode: CrbMode) -> Result<f64> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::domain(format!("SNR parameter must be positive, got {theta}")));
    }
    if n == 0 {
        return Err(Error::config("record length must be at least 1"));
    }
    if !mu.is_finite() || mu == 0.0 {
        return Err(Error::domain("the SNR bound needs a finite non-zero mean"));
    }
    match mode {
        CrbMode::Paper => Ok(4.0 * theta * mu * mu / n as f64),
        CrbMode::Independent { records, seed } => {
            if records < MIN_SCORE_RECORDS {
                return Err(Error::config(format!(
                    "score-variance oracle needs at least {MIN_SCORE_RECORDS} records, got {records}"
                )));
            }
            let fisher = sample_variance(&score_draws(mu, theta, n, records, seed));
            Ok(1.0 / fisher)
        }
    }
}

/// Score values of `records` independent SNR records. S/σ² is drawn
/// directly as a χ²_N variate, which has the law of Σ((y_t − μ)/σ)².
fn score_draws(mu: f64, theta: f64, n: usize, records: usize, seed: SeedSpec) -> Vec<f64> {
    let s2 = mu * mu / theta;
    let chi = ChiSquared::new(n as f64).expect("positive degrees of freedom");
    const CHUNK: usize = 4096;
    (0..records.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = seed.child(c as u64).rng();
            let len = CHUNK.min(records - c * CHUNK);
            (0..len)
                .map(|_| snr_score(mu, theta, n, s2 * chi.sample(&mut rng)))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Floor-index sample quantile q̂_N(γ) = y_(⌊γN⌋), index clamped to [1, N].
pub fn sample_quantile<T: Real>(y: &[T], gamma: f64) -> T {
    let n = y.len();
    let idx = ((gamma * n as f64).floor() as usize).clamp(1, n);
    order_statistics(y, &[idx])[0]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileCltReport {
    pub gamma: f64,
    pub n: usize,
    pub runs: usize,
    /// Sample variance of √N(q̂_N(γ) − F⁻¹(γ)) over the runs.
    pub empirical_var_scaled: f64,
    pub theoretical_var: f64,
    pub ratio: f64,
    /// Sample mean of √N(q̂_N(γ) − F⁻¹(γ)) and its standard error.
    pub empirical_mean_scaled: f64,
    pub mean_std_error: f64,
}

/// √N(q̂_N(γ) − F⁻¹(γ)) for `runs` independent records, run r drawn from
/// `seed.child(r)`.
pub fn scaled_quantile_errors(
    density: &DensitySpec<f64>,
    gamma: f64,
    n: usize,
    runs: usize,
    seed: SeedSpec,
) -> Vec<f64> {
    let q = density.quantile(gamma);
    let root_n = (n as f64).sqrt();
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed.child(r as u64).rng();
            let y: Vec<f64> = (0..n).map(|_| density.sample(&mut rng)).collect();
            root_n * (sample_quantile(&y, gamma) - q)
        })
        .collect()
}

/// Monte Carlo check of √N(q̂_N(γ) − F⁻¹(γ)) → N(0, γ(1−γ)/f²).
pub fn quantile_clt_check(
    density: &DensitySpec<f64>,
    gamma: f64,
    n: usize,
    runs: usize,
    seed: SeedSpec,
) -> Result<QuantileCltReport> {
    density.validate()?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::config(format!("quantile level must lie in (0, 1), got {gamma}")));
    }
    if runs < 100 {
        return Err(Error::config(format!("need at least 100 runs, got {runs}")));
    }
    if n == 0 {
        return Err(Error::config("record length must be at least 1"));
    }
    let theoretical_var = density.quantile_variance(gamma)?;
    let errors = scaled_quantile_errors(density, gamma, n, runs, seed);
    let empirical_var_scaled = sample_variance(&errors);
    Ok(QuantileCltReport {
        gamma,
        n,
        runs,
        empirical_var_scaled,
        theoretical_var,
        ratio: empirical_var_scaled / theoretical_var,
        empirical_mean_scaled: mean(&errors),
        mean_std_error: (empirical_var_scaled / runs as f64).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileConsistencyReport {
    pub n: usize,
    pub seeds: usize,
    pub gammas: Vec<f64>,
    /// 3·√(γ(1−γ))/(f(F⁻¹(γ))·√N) per level.
    pub bounds: Vec<f64>,
    /// Mean |q̂_N(γ) − F⁻¹(γ)| over seeds, per level.
    pub mean_abs_error: Vec<f64>,
    /// Fraction of seeds with every level inside its bound.
    pub pass_rate: f64,
}

/// Checks |q̂_N(γ_k) − F⁻¹(γ_k)| against three asymptotic standard errors
/// at every level, over `seeds` independent records of length `n`.
pub fn quantile_consistency_check(
    density: &DensitySpec<f64>,
    levels: &QuantileLevels,
    n: usize,
    seeds: usize,
    seed: SeedSpec,
) -> Result<QuantileConsistencyReport> {
    density.validate()?;
    if seeds == 0 {
        return Err(Error::config("need at least one seed"));
    }
    if n < levels.min_len() {
        return Err(Error::InputTooShort {
            required: levels.min_len(),
            actual: n,
        });
    }
    let gammas = levels.gammas::<f64>();
    let truth = density.population_quantiles(levels);
    let bounds = gammas
        .iter()
        .map(|&g| density.quantile_variance(g).map(|v| 3.0 * v.sqrt() / (n as f64).sqrt()))
        .collect::<Result<Vec<_>>>()?;
    let indices = levels.indices(n);
    let errors: Vec<Vec<f64>> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let mut rng = seed.child(s as u64).rng();
            let y: Vec<f64> = (0..n).map(|_| density.sample(&mut rng)).collect();
            order_statistics(&y, &indices)
                .iter()
                .zip(&truth)
                .map(|(q, t)| (q - t).abs())
                .collect()
        })
        .collect();
    let passes = errors
        .iter()
        .filter(|e| e.iter().zip(&bounds).all(|(e, b)| e < b))
        .count();
    let mean_abs_error = (0..gammas.len())
        .map(|k| errors.iter().map(|e| e[k]).sum::<f64>() / seeds as f64)
        .collect();
    Ok(QuantileConsistencyReport {
        n,
        seeds,
        gammas,
        bounds,
        mean_abs_error,
        pass_rate: passes as f64 / seeds as f64,
    })
}

/// One line of an asymptotics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub quantity: String,
    pub value: f64,
    pub reference: f64,
    pub ratio: f64,
}

impl ReportRow {
    pub fn new(quantity: impl Into<String>, value: f64, reference: f64) -> Self {
        Self {
            quantity: quantity.into(),
            value,
            reference,
            ratio: value / reference,
        }
    }
}

/// Writes rows as CSV with header `quantity,value,reference,ratio`.
pub fn write_report<W: Write>(rows: &[ReportRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
