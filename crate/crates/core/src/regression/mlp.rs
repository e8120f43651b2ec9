//! Two-layer ReLU network second stage.
//!
//! Inputs and targets are standardised with training-set moments; the
//! network itself sees `x̃ = (z − shift)/scale` and predicts standardised
//! targets. Parameters live in one flat vector laid out as
//! `[W1 (H×n, row-major), b1 (H), W2 (d×H, row-major), b2 (d)]`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::ParameterVector;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed::SeedSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub seed: SeedSpec,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 200,
            batch_size: 64,
            step_size: 1e-3,
            seed: SeedSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSecondStage<T> {
    pub input_dim: usize,
    pub hidden: usize,
    pub output_dim: usize,
    pub params: Vec<T>,
    pub input_shift: Vec<T>,
    pub input_scale: Vec<T>,
    pub output_shift: Vec<T>,
    pub output_scale: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct MlpFit<T> {
    /// Mean squared error on the training set, in target units.
    pub training_mse: T,
    /// Standardised loss of the last epoch.
    pub final_loss: T,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl<T: Real> MlpSecondStage<T> {
    pub fn param_count(input_dim: usize, hidden: usize, output_dim: usize) -> usize {
        hidden * input_dim + hidden + output_dim * hidden + output_dim
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let w1 = self.hidden * self.input_dim;
        let b1 = w1 + self.hidden;
        let w2 = b1 + self.output_dim * self.hidden;
        (w1, b1, w2)
    }

    pub fn with_params(&self, params: Vec<T>) -> Self {
        assert_eq!(params.len(), self.params.len());
        Self { params, ..self.clone() }
    }

    fn normalize_input(&self, z: &[T]) -> Vec<T> {
        z.iter()
            .zip(&self.input_shift)
            .zip(&self.input_scale)
            .map(|((&x, &m), &s)| (x - m) / s)
            .collect()
    }

    fn normalize_target(&self, t: &[T]) -> Vec<T> {
        t.iter()
            .zip(&self.output_shift)
            .zip(&self.output_scale)
            .map(|((&x, &m), &s)| (x - m) / s)
            .collect()
    }

    /// Standardised forward pass; returns (pre-activations, output).
    fn forward(&self, params: &[T], x: &[T]) -> (Vec<T>, Vec<T>) {
        let (ow1, ob1, ow2) = self.offsets();
        let (n, h, d) = (self.input_dim, self.hidden, self.output_dim);
        let pre: Vec<T> = (0..h)
            .map(|j| {
                let row = &params[j * n..(j + 1) * n];
                row.iter().zip(x).map(|(&w, &xi)| w * xi).sum::<T>() + params[ow1 + j]
            })
            .collect();
        let out = (0..d)
            .map(|k| {
                let row = &params[ob1 + k * h..ob1 + (k + 1) * h];
                row.iter().zip(&pre).map(|(&w, &a)| w * a.max(T::zero())).sum::<T>() + params[ow2 + k]
            })
            .collect();
        (pre, out)
    }

    pub fn predict_raw(&self, z: &[T]) -> Result<Vec<T>> {
        if z.len() != self.input_dim {
            return Err(Error::config(format!(
                "network expects input of length {}, got {}",
                self.input_dim,
                z.len()
            )));
        }
        let (_, out) = self.forward(&self.params, &self.normalize_input(z));
        Ok(out
            .iter()
            .zip(&self.output_shift)
            .zip(&self.output_scale)
            .map(|((&o, &m), &s)| o * s + m)
            .collect())
    }

    /// Standardised loss (1/(B·d)) Σ ‖out − t̃‖² over already-normalised
    /// samples, and its gradient w.r.t. `params`.
    fn loss_gradient_normalized(&self, params: &[T], xs: &[&[T]], ts: &[&[T]]) -> (T, Vec<T>) {
        let (ow1, ob1, ow2) = self.offsets();
        let (n, h, d) = (self.input_dim, self.hidden, self.output_dim);
        let mut grad = vec![T::zero(); params.len()];
        let mut loss = T::zero();
        let norm = T::from_count(xs.len() * d);
        let mut delta_h = vec![T::zero(); h];
        for (x, t) in xs.iter().zip(ts) {
            let (pre, out) = self.forward(params, x);
            delta_h.iter_mut().for_each(|v| *v = T::zero());
            for k in 0..d {
                let err = out[k] - t[k];
                loss += err * err;
                let g = T::lit(2.0) * err / norm;
                grad[ow2 + k] += g;
                for j in 0..h {
                    let hj = pre[j].max(T::zero());
                    grad[ob1 + k * h + j] += g * hj;
                    delta_h[j] += g * params[ob1 + k * h + j];
                }
            }
            for j in 0..h {
                if pre[j] > T::zero() {
                    let g = delta_h[j];
                    grad[ow1 + j] += g;
                    for i in 0..n {
                        grad[j * n + i] += g * x[i];
                    }
                }
            }
        }
        (loss / norm, grad)
    }

    /// Standardised training loss and its analytic gradient on raw samples,
    /// using this network's parameters and normalisation.
    pub fn loss_gradient(&self, zs: &[Vec<T>], targets: &[Vec<T>]) -> (T, Vec<T>) {
        let xs: Vec<Vec<T>> = zs.iter().map(|z| self.normalize_input(z)).collect();
        let ts: Vec<Vec<T>> = targets.iter().map(|t| self.normalize_target(t)).collect();
        let xr: Vec<&[T]> = xs.iter().map(Vec::as_slice).collect();
        let tr: Vec<&[T]> = ts.iter().map(Vec::as_slice).collect();
        self.loss_gradient_normalized(&self.params, &xr, &tr)
    }
}

fn column_moments<T: Real>(rows: &[Vec<T>], dim: usize) -> (Vec<T>, Vec<T>) {
    let m = T::from_count(rows.len());
    let mut shift = vec![T::zero(); dim];
    for r in rows {
        for (s, &x) in shift.iter_mut().zip(r) {
            *s += x;
        }
    }
    shift.iter_mut().for_each(|s| *s /= m);
    let mut scale = vec![T::zero(); dim];
    for r in rows {
        for ((s, &x), &mu) in scale.iter_mut().zip(r).zip(&shift) {
            *s += (x - mu) * (x - mu);
        }
    }
    let scale = scale
        .into_iter()
        .map(|v| {
            let sd = (v / m).sqrt();
            if sd > T::zero() && sd.is_finite() {
                sd
            } else {
                T::one()
            }
        })
        .collect();
    (shift, scale)
}

/// Trains the network by mini-batch Adam on mean-squared error.
pub fn fit_mlp<T: Real>(
    zs: &[Vec<T>],
    targets: &[ParameterVector<T>],
    config: &MlpConfig,
) -> Result<(MlpSecondStage<T>, MlpFit<T>)> {
    let m = zs.len();
    if m == 0 || m != targets.len() {
        return Err(Error::config(format!(
            "need equally many feature vectors and targets (got {m} and {})",
            targets.len()
        )));
    }
    if config.hidden == 0 || config.batch_size == 0 {
        return Err(Error::config("hidden width and batch size must be positive"));
    }
    if !(config.step_size > 0.0 && config.step_size.is_finite()) {
        return Err(Error::config("step size must be positive"));
    }
    let n = zs[0].len();
    let d = targets[0].dim();
    if n == 0 || zs.iter().any(|z| z.len() != n) || targets.iter().any(|t| t.dim() != d) {
        return Err(Error::config("inconsistent feature or target dimensions"));
    }
    if zs.iter().any(|z| z.iter().any(|x| !x.is_finite())) {
        return Err(Error::domain("non-finite feature value"));
    }
    let target_rows: Vec<Vec<T>> = targets.iter().map(|t| t.as_slice().to_vec()).collect();
    let (input_shift, input_scale) = column_moments(zs, n);
    let (output_shift, output_scale) = column_moments(&target_rows, d);

    let h = config.hidden;
    let mut rng = config.seed.rng();
    let mut params = Vec::with_capacity(MlpSecondStage::<T>::param_count(n, h, d));
    let he = (2.0 / n as f64).sqrt();
    params.extend((0..h * n).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal) * he)));
    params.extend((0..h).map(|_| T::zero()));
    let glorot = (1.0 / h as f64).sqrt();
    params.extend((0..d * h).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal) * glorot)));
    params.extend((0..d).map(|_| T::zero()));

    let mut net = MlpSecondStage {
        input_dim: n,
        hidden: h,
        output_dim: d,
        params,
        input_shift,
        input_scale,
        output_shift,
        output_scale,
    };
    let xs: Vec<Vec<T>> = zs.iter().map(|z| net.normalize_input(z)).collect();
    let ts: Vec<Vec<T>> = target_rows.iter().map(|t| net.normalize_target(t)).collect();

    let (b1, b2, eps) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2), T::lit(ADAM_EPS));
    let lr = T::lit(config.step_size);
    let mut first = vec![T::zero(); net.params.len()];
    let mut second = vec![T::zero(); net.params.len()];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..m).collect();
    let mut final_loss = T::nan();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = T::zero();
        for batch in order.chunks(config.batch_size) {
            let xb: Vec<&[T]> = batch.iter().map(|&i| xs[i].as_slice()).collect();
            let tb: Vec<&[T]> = batch.iter().map(|&i| ts[i].as_slice()).collect();
            let (loss, grad) = net.loss_gradient_normalized(&net.params, &xb, &tb);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            epoch_loss += loss * T::from_count(batch.len());
            step += 1;
            let c1 = T::one() - b1.powi(step);
            let c2 = T::one() - b2.powi(step);
            for (((p, g), mo), sm) in net.params.iter_mut().zip(&grad).zip(&mut first).zip(&mut second) {
                *mo = b1 * *mo + (T::one() - b1) * *g;
                *sm = b2 * *sm + (T::one() - b2) * *g * *g;
                *p -= lr * (*mo / c1) / ((*sm / c2).sqrt() + eps);
            }
        }
        final_loss = epoch_loss / T::from_count(m);
        if !final_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
    }

    let mut sse = T::zero();
    for (z, t) in zs.iter().zip(&target_rows) {
        let pred = net.predict_raw(z)?;
        sse += pred.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
    }
    let training_mse = sse / T::from_count(m);
    if !training_mse.is_finite() {
        return Err(Error::Divergence { epoch: config.epochs });
    }
    Ok((
        net,
        MlpFit {
            training_mse,
            final_loss,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn linear_data(m: usize) -> (Vec<Vec<f64>>, Vec<ParameterVector<f64>>) {
        let zs: Vec<Vec<f64>> = (0..m).map(|i| vec![-1.0 + 2.0 * i as f64 / (m - 1) as f64]).collect();
        let ts = zs
            .iter()
            .map(|z| ParameterVector::scalar(2.0 * z[0]).unwrap())
            .collect();
        (zs, ts)
    }

    #[test]
    fn learns_linear_map() {
        let (zs, ts) = linear_data(512);
        let config = MlpConfig {
            hidden: 16,
            epochs: 200,
            seed: SeedSpec::new(1, 0),
            ..MlpConfig::default()
        };
        let (_, fit) = fit_mlp(&zs, &ts, &config).unwrap();
        assert!(fit.training_mse <= 1e-3, "mse = {}", fit.training_mse);
    }

    #[test]
    fn zero_epochs_returns_initial_network() {
        let (zs, ts) = linear_data(32);
        let config = MlpConfig {
            hidden: 8,
            epochs: 0,
            ..MlpConfig::default()
        };
        let (net, fit) = fit_mlp(&zs, &ts, &config).unwrap();
        assert!(fit.training_mse.is_finite());
        assert!(net.predict_raw(&[0.3]).unwrap()[0].is_finite());
    }

    #[test]
    fn deterministic_given_seed() {
        let (zs, ts) = linear_data(64);
        let config = MlpConfig {
            hidden: 8,
            epochs: 5,
            seed: SeedSpec::new(3, 3),
            ..MlpConfig::default()
        };
        let (a, _) = fit_mlp(&zs, &ts, &config).unwrap();
        let (b, _) = fit_mlp(&zs, &ts, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let (zs, ts) = linear_data(64);
        let config = MlpConfig {
            hidden: 4,
            epochs: 3,
            step_size: 1e300,
            ..MlpConfig::default()
        };
        assert!(matches!(fit_mlp(&zs, &ts, &config), Err(Error::Divergence { .. })));
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = SeedSpec::new(5, 0).rng();
        let zs: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..3).map(|_| rng.random::<f64>() - 0.5).collect())
            .collect();
        let targets: Vec<ParameterVector<f64>> = zs
            .iter()
            .map(|z| ParameterVector::new(vec![z[0] - z[1] * z[2], z[2].sin()]).unwrap())
            .collect();
        let config = MlpConfig {
            hidden: 6,
            epochs: 2,
            seed: SeedSpec::new(5, 1),
            ..MlpConfig::default()
        };
        let (net, _) = fit_mlp(&zs, &targets, &config).unwrap();
        let rows: Vec<Vec<f64>> = targets.iter().map(|t| t.as_slice().to_vec()).collect();
        let (_, grad) = net.loss_gradient(&zs, &rows);
        let h = 1e-5;
        let mut checked = 0;
        while checked < 10 {
            let i = rng.random_range(0..net.params.len());
            let mut plus = net.params.clone();
            plus[i] += h;
            let mut minus = net.params.clone();
            minus[i] -= h;
            let fd = (net.with_params(plus).loss_gradient(&zs, &rows).0
                - net.with_params(minus).loss_gradient(&zs, &rows).0)
                / (2.0 * h);
            if grad[i].abs() < 1e-8 && fd.abs() < 1e-8 {
                continue;
            }
            let rel = (fd - grad[i]).abs() / grad[i].abs().max(fd.abs());
            assert!(rel <= 1e-4, "param {i}: analytic {} vs fd {fd}", grad[i]);
            checked += 1;
        }
    }

    #[test]
    fn input_validation() {
        let (zs, ts) = linear_data(8);
        let bad = MlpConfig {
            hidden: 0,
            ..MlpConfig::default()
        };
        assert!(fit_mlp(&zs, &ts, &bad).is_err());
        assert!(fit_mlp(&zs[..4], &ts, &MlpConfig::default()).is_err());
        let (net, _) = fit_mlp(
            &zs,
            &ts,
            &MlpConfig {
                epochs: 0,
                hidden: 2,
                ..MlpConfig::default()
            },
        )
        .unwrap();
        assert!(net.predict_raw(&[1.0, 2.0]).is_err());
    }
}
