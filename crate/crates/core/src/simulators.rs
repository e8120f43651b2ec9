//! Parametric data generators.
//!
//! * [`simulate_snr`]: i.i.d. `y_t = μ + e_t`, `e_t ~ N(0, μ²/θ)`, so θ is
//!   the signal-to-noise ratio.
//! * [`simulate_nonlinear`]: the controlled two-state system
//!
//!   ```text
//!   x1[k+1] = x1[k]/2 + u[k] + v11[k]
//!   x2[k+1] = a(θ) x2[k] + b(θ) u[k] + v12[k]
//!   y[k]    = x2[k] + v2[k]
//!   a(θ) = (1 − θ²) sin(50 θ²) − θ,   b(θ) = θ / (1 + θ²)
//!   ```
//!
//!   driven by white Gaussian input `u[k]`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{ObservationSeries, ParameterVector};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed::SeedSpec;

/// Admissible parameter range of the controlled system.
pub const NONLINEAR_THETA_BOUND: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrModelSpec<T> {
    /// Known mean μ.
    pub mu: T,
    /// Record length N.
    pub n: usize,
}

impl<T: Real> SnrModelSpec<T> {
    pub fn new(mu: T, n: usize) -> Result<Self> {
        let spec = Self { mu, n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::config("SNR model mean must be finite"));
        }
        if self.n == 0 {
            return Err(Error::config("record length must be at least 1"));
        }
        Ok(())
    }

    /// Noise variance σ² = μ²/θ.
    pub fn noise_variance(&self, theta: T) -> T {
        self.mu * self.mu / theta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearSystemSpec<T> {
    pub n: usize,
    pub v11_var: T,
    pub v12_var: T,
    pub v2_var: T,
    pub input_var: T,
    pub x0: [T; 2],
}

impl<T: Real> NonlinearSystemSpec<T> {
    /// Nominal noise levels (0.9, 0.1, 0.01), unit input variance, zero
    /// initial state.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            v11_var: T::lit(0.9),
            v12_var: T::lit(0.1),
            v2_var: T::lit(0.01),
            input_var: T::one(),
            x0: [T::zero(); 2],
        }
    }

    /// Same system with every process and measurement noise switched off.
    pub fn noise_free(n: usize) -> Self {
        Self {
            v11_var: T::zero(),
            v12_var: T::zero(),
            v2_var: T::zero(),
            ..Self::new(n)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("record length must be at least 1"));
        }
        let vars = [self.v11_var, self.v12_var, self.v2_var];
        if vars.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::config("noise variances must be finite and non-negative"));
        }
        if !(self.input_var.is_finite() && self.input_var > T::zero()) {
            return Err(Error::config("input variance must be positive"));
        }
        if !(self.x0[0].is_finite() && self.x0[1].is_finite()) {
            return Err(Error::config("initial state must be finite"));
        }
        Ok(())
    }
}

/// x2 pole a(θ) = (1 − θ²) sin(50 θ²) − θ.
pub fn pole<T: Real>(theta: T) -> T {
    let t2 = theta * theta;
    (T::one() - t2) * (T::lit(50.0) * t2).sin() - theta
}

/// Input gain b(θ) = θ / (1 + θ²).
pub fn input_gain<T: Real>(theta: T) -> T {
    theta / (T::one() + theta * theta)
}

/// Noise-free x2 update a(θ) x2 + b(θ) u.
pub fn x2_step<T: Real>(theta: T, x2: T, u: T) -> T {
    pole(theta) * x2 + input_gain(theta) * u
}

/// ∂a/∂θ = −2θ sin(50θ²) + 100θ (1 − θ²) cos(50θ²) − 1.
pub fn pole_derivative<T: Real>(theta: T) -> T {
    let t2 = theta * theta;
    let arg = T::lit(50.0) * t2;
    -T::lit(2.0) * theta * arg.sin() + T::lit(100.0) * theta * (T::one() - t2) * arg.cos() - T::one()
}

/// ∂b/∂θ = (1 − θ²) / (1 + θ²)².
pub fn input_gain_derivative<T: Real>(theta: T) -> T {
    let t2 = theta * theta;
    (T::one() - t2) / ((T::one() + t2) * (T::one() + t2))
}

fn gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R, sd: T) -> T {
    let z: f64 = rng.sample(StandardNormal);
    T::lit(z) * sd
}

/// Draws an SNR record of length `spec.n` at SNR `theta`.
pub fn simulate_snr<T: Real>(
    spec: &SnrModelSpec<T>,
    theta: &ParameterVector<T>,
    seed: SeedSpec,
) -> Result<ObservationSeries<T>> {
    spec.validate()?;
    let theta_s = theta.expect_scalar("SNR model")?;
    if theta_s <= T::zero() {
        return Err(Error::domain(format!(
            "SNR parameter must be positive (noise variance μ²/θ), got {theta_s}"
        )));
    }
    let sd = spec.noise_variance(theta_s).sqrt();
    let mut rng = seed.rng();
    let outputs = (0..spec.n).map(|_| spec.mu + gaussian(&mut rng, sd)).collect();
    ObservationSeries::new(outputs, None).map(|s| s.with_label(theta.clone()))
}

/// Draws an input/output record of the controlled system at `theta`.
pub fn simulate_nonlinear<T: Real>(
    spec: &NonlinearSystemSpec<T>,
    theta: &ParameterVector<T>,
    seed: SeedSpec,
) -> Result<ObservationSeries<T>> {
    spec.validate()?;
    let th = theta.expect_scalar("controlled system")?;
    if !(th.abs() <= T::lit(NONLINEAR_THETA_BOUND)) {
        return Err(Error::domain(format!(
            "parameter {th} outside [-{NONLINEAR_THETA_BOUND}, {NONLINEAR_THETA_BOUND}]"
        )));
    }
    let sd_u = spec.input_var.sqrt();
    let sd11 = spec.v11_var.sqrt();
    let sd12 = spec.v12_var.sqrt();
    let sd2 = spec.v2_var.sqrt();
    let (a, b) = (pole(th), input_gain(th));
    let half = T::lit(0.5);

    let mut rng = seed.rng();
    let [mut x1, mut x2] = spec.x0;
    let mut outputs = Vec::with_capacity(spec.n);
    let mut inputs = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let u = gaussian(&mut rng, sd_u);
        let v11 = gaussian(&mut rng, sd11);
        let v12 = gaussian(&mut rng, sd12);
        let v2 = gaussian(&mut rng, sd2);
        outputs.push(x2 + v2);
        inputs.push(u);
        // x1 never reaches the output but keeps the draw order of the full
        // state equations.
        x1 = half * x1 + u + v11;
        x2 = a * x2 + b * u + v12;
    }
    if outputs.iter().any(|y| !y.is_finite()) {
        return Err(Error::ModelExplosion(format!(
            "output overflowed at θ = {th} (|a(θ)| = {}) over {} steps",
            a.abs(),
            spec.n
        )));
    }
    ObservationSeries::new(outputs, Some(inputs)).map(|s| s.with_label(theta.clone()))
}

/// Either data generator, as selected by an estimator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec<T> {
    Snr(SnrModelSpec<T>),
    Nonlinear(NonlinearSystemSpec<T>),
}

impl<T: Real> ModelSpec<T> {
    pub fn record_len(&self) -> usize {
        match self {
            ModelSpec::Snr(s) => s.n,
            ModelSpec::Nonlinear(s) => s.n,
        }
    }

    /// Same model with record length `n`.
    pub fn with_record_len(&self, n: usize) -> Self {
        match self {
            ModelSpec::Snr(s) => ModelSpec::Snr(SnrModelSpec { n, ..s.clone() }),
            ModelSpec::Nonlinear(s) => ModelSpec::Nonlinear(NonlinearSystemSpec { n, ..s.clone() }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Snr(s) => s.validate(),
            ModelSpec::Nonlinear(s) => s.validate(),
        }
    }

    pub fn simulate(&self, theta: &ParameterVector<T>, seed: SeedSpec) -> Result<ObservationSeries<T>> {
        match self {
            ModelSpec::Snr(s) => simulate_snr(s, theta, seed),
            ModelSpec::Nonlinear(s) => simulate_nonlinear(s, theta, seed),
        }
    }
}
