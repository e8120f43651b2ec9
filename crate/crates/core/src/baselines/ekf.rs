//! Extended Kalman filter on the controlled system with θ appended as a
//! third, slowly drifting state:
//!
//! ```text
//! x1' = x1/2 + u
//! x2' = a(θ) x2 + b(θ) u
//! θ'  = θ
//! y   = x2 + v
//! ```

#![allow(clippy::needless_range_loop)]

use serde::{Deserialize, Serialize};

use crate::domain::ObservationSeries;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::simulators::{input_gain, input_gain_derivative, pole, pole_derivative, NONLINEAR_THETA_BOUND};

pub type Mat3<T> = [[T; 3]; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EkfConfig<T> {
    pub p0: Mat3<T>,
    pub q: Mat3<T>,
    pub r: T,
    pub x0: [T; 3],
    /// Keep every filtered state and covariance.
    pub record_trace: bool,
}

fn diag<T: Real>(d: [f64; 3]) -> Mat3<T> {
    let mut m = [[T::zero(); 3]; 3];
    for i in 0..3 {
        m[i][i] = T::lit(d[i]);
    }
    m
}

impl<T: Real> EkfConfig<T> {
    fn with_p0(p33: f64) -> Self {
        Self {
            p0: diag([0.1, 0.1, p33]),
            q: diag([0.9, 0.1, 1e-6]),
            r: T::lit(0.01),
            x0: [T::zero(); 3],
            record_trace: false,
        }
    }

    /// P0 = diag(0.1, 0.1, 0.5).
    pub fn large() -> Self {
        Self::with_p0(0.5)
    }

    /// P0 = diag(0.1, 0.1, 0.01).
    pub fn small() -> Self {
        Self::with_p0(0.01)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("P0", &self.p0), ("Q", &self.q)] {
            if m.iter().flatten().any(|x| !x.is_finite()) || asymmetry(m) > T::zero() {
                return Err(Error::config(format!("{name} must be finite and symmetric")));
            }
            if !is_psd(m, T::zero()) {
                return Err(Error::config(format!("{name} must be positive semidefinite")));
            }
        }
        if !(self.r > T::zero() && self.r.is_finite()) {
            return Err(Error::config("measurement variance R must be positive"));
        }
        if self.x0.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("initial state must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfStep<T> {
    /// Filtered state after the measurement update at this step.
    pub state: [T; 3],
    pub covariance: Mat3<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfResult<T> {
    /// Final θ state, clamped to the admissible range.
    pub theta_hat: T,
    /// Gaussian innovation negative log-likelihood Σ ½(ln 2πS + e²/S).
    pub nll: T,
    pub trace: Vec<EkfStep<T>>,
}

/// Mean transition of the augmented state.
pub fn transition<T: Real>(x: &[T; 3], u: T) -> [T; 3] {
    let th = x[2];
    [T::lit(0.5) * x[0] + u, pole(th) * x[1] + input_gain(th) * u, th]
}

/// ∂transition/∂x.
pub fn transition_jacobian<T: Real>(x: &[T; 3], u: T) -> Mat3<T> {
    let th = x[2];
    let z = T::zero();
    [
        [T::lit(0.5), z, z],
        [z, pole(th), x[1] * pole_derivative(th) + u * input_gain_derivative(th)],
        [z, z, T::one()],
    ]
}

fn mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut c = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn transpose<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    let mut t = *a;
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

fn norm<T: Real>(a: &Mat3<T>) -> T {
    a.iter().flatten().map(|&x| x * x).sum::<T>().sqrt()
}

pub fn asymmetry<T: Real>(a: &Mat3<T>) -> T {
    let mut d = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            d += (a[i][j] - a[j][i]) * (a[i][j] - a[j][i]);
        }
    }
    d.sqrt()
}

fn symmetrize<T: Real>(a: &mut Mat3<T>) {
    for i in 0..3 {
        for j in (i + 1)..3 {
            let m = (a[i][j] + a[j][i]) / T::lit(2.0);
            a[i][j] = m;
            a[j][i] = m;
        }
    }
}

/// All principal minors ≥ −tol (scaled by the matrix size).
pub fn is_psd<T: Real>(p: &Mat3<T>, tol: T) -> bool {
    let scale = p[0][0]
        .abs()
        .max(p[1][1].abs())
        .max(p[2][2].abs())
        .max(T::min_positive_value());
    let eps = tol * scale;
    let minor = |i: usize, j: usize| p[i][i] * p[j][j] - p[i][j] * p[j][i];
    let det = p[0][0] * minor(1, 2) - p[0][1] * (p[1][0] * p[2][2] - p[1][2] * p[2][0])
        + p[0][2] * (p[1][0] * p[2][1] - p[1][1] * p[2][0]);
    (0..3).all(|i| p[i][i] >= -eps)
        && minor(0, 1) >= -eps * scale
        && minor(0, 2) >= -eps * scale
        && minor(1, 2) >= -eps * scale
        && det >= -eps * scale * scale
}

const PSD_TOL: f64 = 1e-9;

fn diverged(step: usize, reason: impl Into<String>) -> Error {
    Error::FilterDivergence {
        step,
        reason: reason.into(),
    }
}

/// Runs the filter over the record and returns the final θ estimate.
pub fn ekf_estimate<T: Real>(series: &ObservationSeries<T>, config: &EkfConfig<T>) -> Result<EkfResult<T>> {
    config.validate()?;
    let inputs = series
        .inputs()
        .ok_or_else(|| Error::config("the EKF needs a record with inputs"))?;
    let half = T::lit(0.5);
    let two_pi = T::lit(std::f64::consts::TAU);
    let tol = T::lit(PSD_TOL);
    let mut x = config.x0;
    let mut p = config.p0;
    let mut nll = T::zero();
    let mut trace = Vec::with_capacity(if config.record_trace { series.len() } else { 0 });

    for (k, (&y, &u)) in series.outputs().iter().zip(inputs).enumerate() {
        // Measurement update with H = (0, 1, 0), Joseph form.
        let s = p[1][1] + config.r;
        if !(s > T::zero()) || !s.is_finite() {
            return Err(diverged(k, format!("innovation variance {s}")));
        }
        let gain = [p[0][1] / s, p[1][1] / s, p[2][1] / s];
        let e = y - x[1];
        nll += half * ((two_pi * s).ln() + e * e / s);
        for i in 0..3 {
            x[i] += gain[i] * e;
        }
        let mut ikh = [[T::zero(); 3]; 3];
        for i in 0..3 {
            ikh[i][i] = T::one();
            ikh[i][1] -= gain[i];
        }
        let mut updated = mul(&mul(&ikh, &p), &transpose(&ikh));
        for i in 0..3 {
            for j in 0..3 {
                updated[i][j] += gain[i] * config.r * gain[j];
            }
        }
        symmetrize(&mut updated);
        p = updated;
        if x.iter().any(|v| !v.is_finite()) || p.iter().flatten().any(|v| !v.is_finite()) {
            return Err(diverged(k, "non-finite state or covariance"));
        }
        if asymmetry(&p) > T::lit(1e-12) * norm(&p) {
            return Err(diverged(k, "covariance lost symmetry"));
        }
        if !is_psd(&p, tol) {
            return Err(diverged(k, "covariance lost positive semidefiniteness"));
        }
        if config.record_trace {
            trace.push(EkfStep {
                state: x,
                covariance: p,
            });
        }

        // Time update.
        let f = transition_jacobian(&x, u);
        x = transition(&x, u);
        let mut predicted = mul(&mul(&f, &p), &transpose(&f));
        for i in 0..3 {
            for j in 0..3 {
                predicted[i][j] += config.q[i][j];
            }
        }
        symmetrize(&mut predicted);
        p = predicted;
    }

    let bound = T::lit(NONLINEAR_THETA_BOUND);
    let theta_hat = x[2].max(-bound).min(bound);
    if !theta_hat.is_finite() {
        return Err(diverged(series.len(), "non-finite parameter estimate"));
    }
    Ok(EkfResult { theta_hat, nll, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ParameterVector;
    use crate::seed::SeedSpec;
    use crate::simulators::{simulate_nonlinear, NonlinearSystemSpec};
    use rand::Rng;

    fn record(theta: f64, n: usize, seed: u64) -> ObservationSeries<f64> {
        let spec = NonlinearSystemSpec::new(n);
        simulate_nonlinear(&spec, &ParameterVector::scalar(theta).unwrap(), SeedSpec::new(seed, 0)).unwrap()
    }

    #[test]
    fn large_prior_on_stable_parameter() {
        let cfg = EkfConfig {
            record_trace: true,
            ..EkfConfig::large()
        };
        let r = ekf_estimate(&record(0.5, 1000, 1), &cfg).unwrap();
        assert!(r.theta_hat.abs() <= 0.9);
        assert_eq!(r.trace.len(), 1000);
        for step in &r.trace {
            assert!(is_psd(&step.covariance, 1e-9));
            assert!(asymmetry(&step.covariance) <= 1e-12 * norm(&step.covariance));
        }
    }

    #[test]
    fn frozen_parameter_stays_put() {
        let spec = NonlinearSystemSpec::noise_free(500);
        let series = simulate_nonlinear(&spec, &ParameterVector::scalar(0.2).unwrap(), SeedSpec::new(3, 0)).unwrap();
        let mut cfg = EkfConfig::small();
        cfg.p0[2][2] = 0.0;
        cfg.q[2][2] = 0.0;
        cfg.x0 = [0.0, 0.0, 0.2];
        let r = ekf_estimate(&series, &cfg).unwrap();
        assert_eq!(r.theta_hat, 0.2);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = SeedSpec::new(7, 7).rng();
        let h = 1e-6;
        for _ in 0..20 {
            let x = [
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-0.9..0.9),
            ];
            let u: f64 = rng.random_range(-2.0..2.0);
            let jac = transition_jacobian(&x, u);
            for j in 0..3 {
                let (mut xp, mut xm) = (x, x);
                xp[j] += h;
                xm[j] -= h;
                let (fp, fm) = (transition(&xp, u), transition(&xm, u));
                for i in 0..3 {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    let err = (fd - jac[i][j]).abs() / jac[i][j].abs().max(1.0);
                    assert!(err <= 1e-5, "({i},{j}) at {x:?}, u={u}: {fd} vs {}", jac[i][j]);
                }
            }
        }
    }

    #[test]
    fn finite_on_reference_parameters() {
        for &theta in &[-0.8, -0.4, 0.0, 0.4, 0.8] {
            for seed in 0..20 {
                let series = record(theta, 1000, seed);
                for cfg in [EkfConfig::large(), EkfConfig::small()] {
                    let r = ekf_estimate(&series, &cfg);
                    assert!(r.is_ok(), "θ={theta} seed={seed}: {r:?}");
                }
            }
        }
    }

    #[test]
    fn deterministic() {
        let series = record(-0.3, 400, 5);
        let a = ekf_estimate(&series, &EkfConfig::large()).unwrap();
        let b = ekf_estimate(&series, &EkfConfig::large()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_autonomous_records_and_bad_config() {
        let series = ObservationSeries::new(vec![1.0, 2.0], None).unwrap();
        assert!(matches!(
            ekf_estimate(&series, &EkfConfig::large()),
            Err(Error::Config(_))
        ));
        let mut cfg = EkfConfig::<f64>::large();
        cfg.r = 0.0;
        assert!(cfg.validate().is_err());
        cfg = EkfConfig::large();
        cfg.p0[0][0] = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn psd_check() {
        let mut p = diag::<f64>([1.0, 2.0, 3.0]);
        assert!(is_psd(&p, 0.0));
        p[0][1] = 5.0;
        p[1][0] = 5.0;
        assert!(!is_psd(&p, 1e-9));
    }
}
