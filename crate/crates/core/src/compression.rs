//! First-stage compressors: map a length-N record to a fixed n-vector.

use serde::{Deserialize, Serialize};

use crate::domain::ObservationSeries;
use crate::error::{Error, Result};
use crate::linalg::{default_rank_tolerance, least_squares, ridge_least_squares, Matrix};
use crate::scalar::Real;

/// Quantile levels γ_k = k/(n+1), k = 1..n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantileLevels {
    n: usize,
}

impl QuantileLevels {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("need at least one quantile level"));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gammas<T: Real>(&self) -> Vec<T> {
        (1..=self.n)
            .map(|k| T::from_count(k) / T::from_count(self.n + 1))
            .collect()
    }

    /// Shortest record whose floor indices are all ≥ 1.
    pub fn min_len(&self) -> usize {
        self.n + 1
    }

    /// 1-based order-statistic indices ⌊γ_k N⌋ = ⌊kN/(n+1)⌋, clamped to
    /// [1, N]. Integer arithmetic avoids rounding at exact multiples.
    pub fn indices(&self, len: usize) -> Vec<usize> {
        (1..=self.n)
            .map(|k| ((k * len) / (self.n + 1)).clamp(1, len.max(1)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArxOrder {
    pub na: usize,
    pub nb: usize,
}

impl ArxOrder {
    pub fn new(na: usize, nb: usize) -> Result<Self> {
        if na + nb == 0 {
            return Err(Error::config("ARX order needs n_a + n_b ≥ 1"));
        }
        Ok(Self { na, nb })
    }

    /// Number of coefficients n_a + n_b.
    pub fn dim(&self) -> usize {
        self.na + self.nb
    }

    /// First regression row (0-based): max(n_a, n_b).
    fn first_row(&self) -> usize {
        self.na.max(self.nb)
    }

    /// Shortest record with more regression rows than coefficients.
    pub fn min_len(&self) -> usize {
        self.first_row() + self.dim() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    Quantile,
    Arx,
}

/// Raised when the ARX regressors were degenerate and a tiny ridge penalty
/// had to be added.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankWarning {
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedFeatures<T> {
    pub z: Vec<T>,
    pub source: FeatureSource,
    pub warning: Option<RankWarning>,
}

impl<T: Real> CompressedFeatures<T> {
    pub fn new(z: Vec<T>, source: FeatureSource) -> Self {
        Self {
            z,
            source,
            warning: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }
}

/// Empirical quantiles `(y_(⌊γ_1 N⌋), …, y_(⌊γ_n N⌋))` of the outputs.
pub fn compress_quantiles<T: Real>(
    series: &ObservationSeries<T>,
    levels: &QuantileLevels,
) -> Result<CompressedFeatures<T>> {
    let y = series.outputs();
    if y.len() < levels.min_len() {
        return Err(Error::InputTooShort {
            required: levels.min_len(),
            actual: y.len(),
        });
    }
    let indices = levels.indices(y.len());
    Ok(CompressedFeatures::new(
        order_statistics(y, &indices),
        FeatureSource::Quantile,
    ))
}

/// Order statistics at strictly increasing 1-based `indices`.
///
/// Works from the largest index down with repeated selection, shrinking the
/// search window each time; equivalent to a full sort at O(N) per level.
pub(crate) fn order_statistics<T: Real>(y: &[T], indices: &[usize]) -> Vec<T> {
    let mut buf = y.to_vec();
    let mut out = vec![T::zero(); indices.len()];
    let mut upper = buf.len();
    for (slot, &idx) in indices.iter().enumerate().rev() {
        debug_assert!(idx >= 1 && idx <= upper);
        let (_, v, _) =
            buf[..upper].select_nth_unstable_by(idx - 1, |a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        out[slot] = *v;
        upper = idx - 1;
    }
    out
}

/// Least-squares ARX(n_a, n_b) coefficients
/// `(a_1..a_{n_a}, b_1..b_{n_b})` of `y_t ≈ Σ a_i y_{t−i} + Σ b_j u_{t−j}`
/// over rows t = max(n_a, n_b)+1 .. N.
///
/// Degenerate regressors (e.g. an identically zero input) are handled by a
/// ridge penalty of 10⁻¹⁰·trace(Gram)/n and flagged in
/// [`CompressedFeatures::warning`].
pub fn compress_arx<T: Real>(series: &ObservationSeries<T>, order: &ArxOrder) -> Result<CompressedFeatures<T>> {
    let (phi, target) = arx_regression(series, order)?;
    let tol = default_rank_tolerance::<T>(phi.rows(), phi.cols());
    let (ls, warning) = match least_squares(&phi, &target, tol) {
        Ok(ls) => (ls, None),
        Err(Error::RankDeficient { condition }) => {
            let gram_trace: T = phi.as_slice().iter().map(|&x| x * x).sum();
            let penalty = T::lit(1e-10) * gram_trace / T::from_count(order.dim());
            if !(penalty > T::zero()) {
                return Err(Error::RankDeficient { condition });
            }
            let ls = ridge_least_squares(&phi, &target, penalty.sqrt())?;
            (ls, Some(RankWarning { condition }))
        }
        Err(e) => return Err(e),
    };
    let z = ls.solution.column(0);
    if z.iter().any(|x| !x.is_finite()) {
        return Err(Error::ModelExplosion("ARX coefficients are not finite".into()));
    }
    Ok(CompressedFeatures {
        z,
        source: FeatureSource::Arx,
        warning,
    })
}

/// Regressor matrix Φ (rows φ_tᵀ) and target column y_t.
pub(crate) fn arx_regression<T: Real>(
    series: &ObservationSeries<T>,
    order: &ArxOrder,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let u = series
        .inputs()
        .ok_or_else(|| Error::config("ARX compression needs an input signal"))?;
    let y = series.outputs();
    if y.len() < order.min_len() {
        return Err(Error::InputTooShort {
            required: order.min_len(),
            actual: y.len(),
        });
    }
    let start = order.first_row();
    let rows = y.len() - start;
    let mut phi = Matrix::zeros(rows, order.dim());
    let mut target = Matrix::zeros(rows, 1);
    for (r, t) in (start..y.len()).enumerate() {
        for i in 0..order.na {
            phi[(r, i)] = y[t - 1 - i];
        }
        for j in 0..order.nb {
            phi[(r, order.na + j)] = u[t - 1 - j];
        }
        target[(r, 0)] = y[t];
    }
    Ok((phi, target))
}

/// A configured first stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Compressor {
    Quantiles { levels: QuantileLevels },
    Arx { order: ArxOrder },
}

impl Compressor {
    pub fn quantiles(n: usize) -> Result<Self> {
        Ok(Compressor::Quantiles {
            levels: QuantileLevels::new(n)?,
        })
    }

    pub fn arx(na: usize, nb: usize) -> Result<Self> {
        Ok(Compressor::Arx {
            order: ArxOrder::new(na, nb)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Compressor::Quantiles { levels } => levels.n(),
            Compressor::Arx { order } => order.dim(),
        }
    }

    pub fn min_len(&self) -> usize {
        match self {
            Compressor::Quantiles { levels } => levels.min_len(),
            Compressor::Arx { order } => order.min_len(),
        }
    }

    pub fn compress<T: Real>(&self, series: &ObservationSeries<T>) -> Result<CompressedFeatures<T>> {
        match self {
            Compressor::Quantiles { levels } => compress_quantiles(series, levels),
            Compressor::Arx { order } => compress_arx(series, order),
        }
    }
}
