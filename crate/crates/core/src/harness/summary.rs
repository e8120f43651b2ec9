use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stats::{
    excess_kurtosis, interpolated_quantile, ks_distance_fitted_normal, mean, median, sample_variance, skewness,
};

/// One estimate from one Monte Carlo run. Timing lives in [`TimingRecord`]
/// so that this file is reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: usize,
    pub m: usize,
    pub n: usize,
    pub method: String,
    pub run: usize,
    pub theta0: f64,
    pub theta_hat: Option<f64>,
    /// Objective value or negative log-likelihood where the method has one.
    pub objective: Option<f64>,
    /// `ok` or the error kind.
    pub status: String,
}

impl RunRecord {
    pub fn error(&self) -> Option<f64> {
        self.theta_hat.map(|t| t - self.theta0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub cell: usize,
    pub n: usize,
    pub method: String,
    pub run: usize,
    pub micros: f64,
}

/// Moments of θ̂ − θ_0 within one (cell, method) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub m: usize,
    pub n: usize,
    pub method: String,
    pub runs: usize,
    pub failures: usize,
    /// (1/R) Σ (θ̂ − θ_0)² over successful runs.
    pub mse: Option<f64>,
    pub bias: Option<f64>,
    /// (1/R) Σ (θ̂ − mean θ̂)², so that mse = bias² + variance.
    pub variance: Option<f64>,
    pub median_abs_error: Option<f64>,
    pub crb_paper: Option<f64>,
    pub crb_independent: Option<f64>,
}

/// Groups runs by (cell, method) in order of first appearance and
/// accumulates in index order.
pub fn aggregate(runs: &[RunRecord]) -> Vec<CellSummary> {
    let mut keys: Vec<(usize, String)> = Vec::new();
    for r in runs {
        let key = (r.cell, r.method.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(cell, method)| {
            let group: Vec<&RunRecord> = runs.iter().filter(|r| r.cell == cell && r.method == method).collect();
            let errors: Vec<f64> = group.iter().filter_map(|r| r.error()).collect();
            let failures = group.len() - errors.len();
            let (mse, bias, variance, mae) = if errors.is_empty() {
                (None, None, None, None)
            } else {
                let k = errors.len() as f64;
                let bias = errors.iter().sum::<f64>() / k;
                let mse = errors.iter().map(|e| e * e).sum::<f64>() / k;
                let variance = errors.iter().map(|e| (e - bias) * (e - bias)).sum::<f64>() / k;
                let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
                (Some(mse), Some(bias), Some(variance), Some(median(&abs)))
            };
            CellSummary {
                cell,
                m: group[0].m,
                n: group[0].n,
                method,
                runs: group.len(),
                failures,
                mse,
                bias,
                variance,
                median_abs_error: mae,
                crb_paper: None,
                crb_independent: None,
            }
        })
        .collect()
}

/// Latency quantiles of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub method: String,
    pub n: usize,
    pub samples: usize,
    pub median_micros: f64,
    pub q1_micros: f64,
    pub q3_micros: f64,
    pub iqr_micros: f64,
    /// Samples outside [q1 − 1.5·IQR, q3 + 1.5·IQR].
    pub outliers: usize,
}

pub fn timing_summary(method: &str, n: usize, micros: &[f64]) -> Option<TimingSummary> {
    if micros.is_empty() {
        return None;
    }
    let q1 = interpolated_quantile(micros, 0.25);
    let q3 = interpolated_quantile(micros, 0.75);
    let iqr = q3 - q1;
    let outliers = micros
        .iter()
        .filter(|&&x| x < q1 - 1.5 * iqr || x > q3 + 1.5 * iqr)
        .count();
    Some(TimingSummary {
        method: method.to_string(),
        n,
        samples: micros.len(),
        median_micros: median(micros),
        q1_micros: q1,
        q3_micros: q3,
        iqr_micros: iqr,
        outliers,
    })
}

/// Timing summaries per (n, method) of a set of timing records, in order
/// of first appearance.
pub fn summarize_timings(records: &[TimingRecord]) -> Vec<TimingSummary> {
    let mut keys: Vec<(usize, String)> = Vec::new();
    for r in records {
        let key = (r.n, r.method.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .filter_map(|(n, method)| {
            let xs: Vec<f64> = records
                .iter()
                .filter(|r| r.n == n && r.method == method)
                .map(|r| r.micros)
                .collect();
            timing_summary(&method, n, &xs)
        })
        .collect()
}

/// Shape statistics of a sample of scaled errors. Moments are `None` when
/// the sample has no spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityStats {
    pub samples: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
    pub ks_fitted_normal: Option<f64>,
}

pub fn normality_stats(xs: &[f64]) -> NormalityStats {
    NormalityStats {
        samples: xs.len(),
        mean: if xs.is_empty() { f64::NAN } else { mean(xs) },
        variance: if xs.len() < 2 { f64::NAN } else { sample_variance(xs) },
        skewness: skewness(xs),
        excess_kurtosis: excess_kurtosis(xs),
        ks_fitted_normal: ks_distance_fitted_normal(xs),
    }
}

pub fn write_csv_to<W: Write, S: Serialize>(writer: W, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv<S: Serialize>(path: impl AsRef<Path>, rows: &[S]) -> Result<()> {
    write_csv_to(File::create(path)?, rows)
}

pub fn read_csv_from<R: Read, S: DeserializeOwned>(reader: R) -> Result<Vec<S>> {
    let mut r = csv::Reader::from_reader(reader);
    Ok(r.deserialize().collect::<std::result::Result<Vec<S>, _>>()?)
}

pub fn read_csv<S: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<S>> {
    read_csv_from(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(cell: usize, method: &str, i: usize, theta_hat: Option<f64>) -> RunRecord {
        RunRecord {
            cell,
            m: 10,
            n: 20,
            method: method.into(),
            run: i,
            theta0: 5.0,
            theta_hat,
            objective: None,
            status: if theta_hat.is_some() { "ok" } else { "domain" }.into(),
        }
    }

    #[test]
    fn single_run_mse_is_squared_error() {
        let s = aggregate(&[run(0, "ts", 0, Some(5.3))]);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mse, Some((5.3f64 - 5.0).powi(2)));
        assert_eq!(s[0].variance, Some(0.0));
    }

    #[test]
    fn moment_identity_and_failures() {
        let runs: Vec<_> = (0..50)
            .map(|i| {
                run(
                    0,
                    "ts",
                    i,
                    if i % 7 == 3 {
                        None
                    } else {
                        Some(5.0 + (i as f64 * 0.37).sin())
                    },
                )
            })
            .collect();
        let s = &aggregate(&runs)[0];
        let (mse, bias, var) = (s.mse.unwrap(), s.bias.unwrap(), s.variance.unwrap());
        assert!((mse - (bias * bias + var)).abs() <= 1e-10 * mse);
        assert_eq!(s.failures, 7);
        assert_eq!(s.runs, 50);
    }

    #[test]
    fn groups_keep_first_appearance_order() {
        let runs = vec![
            run(1, "b", 0, Some(1.0)),
            run(0, "a", 0, Some(2.0)),
            run(1, "b", 1, Some(3.0)),
        ];
        let s = aggregate(&runs);
        assert_eq!((s[0].cell, s[0].method.as_str(), s[0].runs), (1, "b", 2));
        assert_eq!((s[1].cell, s[1].method.as_str()), (0, "a"));
    }

    #[test]
    fn all_failed_group() {
        let s = aggregate(&[run(0, "ekf", 0, None)]);
        assert_eq!(s[0].mse, None);
        assert_eq!(s[0].failures, 1);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let runs: Vec<_> = (0..20)
            .map(|i| run(0, "ts", i, Some(5.0 + 1.0 / (i as f64 + 3.0))))
            .collect();
        let mut buf = Vec::new();
        write_csv_to(&mut buf, &runs).unwrap();
        let back: Vec<RunRecord> = read_csv_from(buf.as_slice()).unwrap();
        assert_eq!(back, runs);
        assert_eq!(aggregate(&back), aggregate(&runs));
    }

    #[test]
    fn timing_quantiles() {
        let xs: Vec<f64> = (1..=100).map(|i| i as f64).chain([1000.0]).collect();
        let t = timing_summary("ts", 5, &xs).unwrap();
        assert_eq!(t.median_micros, 51.0);
        assert_eq!(t.outliers, 1);
        assert!(timing_summary("ts", 5, &[]).is_none());
    }

    #[test]
    fn degenerate_normality_sample() {
        let s = normality_stats(&[0.0; 40]);
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.skewness, None);
        assert_eq!(s.excess_kurtosis, None);
        assert_eq!(s.ks_fitted_normal, None);
    }
}
