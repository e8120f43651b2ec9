use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    crb_snr, quantile_consistency_check, scaled_quantile_errors, ts_asymptotic_variance, CrbMode, DensitySpec,
    ReportRow,
};
use crate::baselines::{ekf_estimate, pem_estimate, EkfConfig, PemConfig};
use crate::compression::{Compressor, QuantileLevels};
use crate::domain::{ObservationSeries, ParameterVector};
use crate::error::{Error, Result};
use crate::estimator::{train, TrainedEstimator};
use crate::harness::spec::{CampaignSpec, Experiment};
use crate::harness::summary::{
    aggregate, normality_stats, summarize_timings, write_csv, CellSummary, NormalityStats, RunRecord, TimingRecord,
};
use crate::regression::SecondStage;
use crate::seed::SeedSpec;
use crate::simulators::{ModelSpec, NonlinearSystemSpec, SnrModelSpec};
use crate::stats::{mean, sample_variance};

const TRAIN_TAG: u64 = 1;
const TEST_TAG: u64 = 2;
const CRB_TAG: u64 = 3;
const THETA_TAG: u64 = 4;
const PEM_TAG: u64 = 5;
const CLT_TAG: u64 = 6;
const LEMMA_TAG: u64 = 7;

/// Results of one campaign. Everything except `timings` is a pure
/// function of the [`CampaignSpec`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct McSummary {
    pub cells: Vec<CellSummary>,
    pub runs: Vec<RunRecord>,
    pub timings: Vec<TimingRecord>,
    /// Extra named quantities (normality statistics, sandwich ratio,
    /// CRB lines, training times).
    pub report: Vec<ReportRow>,
}

impl McSummary {
    fn from_runs(runs: Vec<RunRecord>, timings: Vec<TimingRecord>) -> Self {
        Self {
            cells: aggregate(&runs),
            runs,
            timings,
            report: Vec::new(),
        }
    }

    /// Writes `summary.csv`, `runs.csv`, `timing.csv` and, when present,
    /// `timing_summary.csv` and `report.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        write_csv(dir.join("runs.csv"), &self.runs)?;
        write_csv(dir.join("summary.csv"), &self.cells)?;
        write_csv(dir.join("timing.csv"), &self.timings)?;
        let timing = summarize_timings(&self.timings);
        if !timing.is_empty() {
            write_csv(dir.join("timing_summary.csv"), &timing)?;
        }
        if !self.report.is_empty() {
            write_csv(dir.join("report.csv"), &self.report)?;
        }
        Ok(())
    }

    pub fn cell(&self, cell: usize, method: &str) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.cell == cell && c.method == method)
    }
}

fn failed_run(cell: usize, m: usize, n: usize, method: &str, run: usize, theta0: f64, err: &Error) -> RunRecord {
    RunRecord {
        cell,
        m,
        n,
        method: method.into(),
        run,
        theta0,
        theta_hat: None,
        objective: None,
        status: err.kind().into(),
    }
}

fn ok_run(cell: usize, m: usize, n: usize, method: &str, run: usize, theta0: f64, theta_hat: f64) -> RunRecord {
    RunRecord {
        cell,
        m,
        n,
        method: method.into(),
        run,
        theta0,
        theta_hat: Some(theta_hat),
        objective: None,
        status: "ok".into(),
    }
}

fn scalar(theta: f64) -> Result<ParameterVector<f64>> {
    ParameterVector::scalar(theta)
}

/// Test records at θ_0 for one SNR cell, each estimated by `est`.
fn snr_test_runs(
    spec: &CampaignSpec,
    est: &TrainedEstimator<f64>,
    cell: usize,
    m: usize,
    n: usize,
    seed: SeedSpec,
) -> Result<(Vec<RunRecord>, Vec<TimingRecord>)> {
    let theta0 = spec.campaign.theta0;
    let model = SnrModelSpec::new(spec.snr.mu, n)?;
    let truth = scalar(theta0)?;
    let out: Vec<(RunRecord, Option<TimingRecord>)> = (0..spec.campaign.runs)
        .into_par_iter()
        .map(|r| {
            let record = crate::simulators::simulate_snr(&model, &truth, seed.child(r as u64));
            match record.and_then(|y| est.infer_timed(&y)) {
                Ok((th, dt)) => (
                    ok_run(cell, m, n, "ts", r, theta0, th.first()),
                    Some(TimingRecord {
                        cell,
                        n,
                        method: "ts".into(),
                        run: r,
                        micros: dt.as_secs_f64() * 1e6,
                    }),
                ),
                Err(e) => (failed_run(cell, m, n, "ts", r, theta0, &e), None),
            }
        })
        .collect();
    let (runs, timings): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    Ok((runs, timings.into_iter().flatten().collect()))
}

/// MSE of the quantile estimator over the (m, N) grid at θ_0, with both
/// CRB lines per cell. A cell whose training fails is recorded as R
/// failed runs.
pub fn run_consistency(spec: &CampaignSpec) -> Result<McSummary> {
    spec.check_experiment(Experiment::Consistency)?;
    spec.validate()?;
    let seed = spec.seed();
    let theta0 = spec.campaign.theta0;
    let mut runs = Vec::new();
    let mut timings = Vec::new();
    let mut train_secs = Vec::new();
    for (cell, &(m, n)) in spec.campaign.grid.iter().enumerate() {
        let config = spec.snr_ts_config(m, n, seed.child(TRAIN_TAG).child(cell as u64))?;
        match train(&config) {
            Ok(est) => {
                train_secs.push((cell, est.metadata.train_secs));
                let (r, t) = snr_test_runs(spec, &est, cell, m, n, seed.child(TEST_TAG).child(cell as u64))?;
                runs.extend(r);
                timings.extend(t);
            }
            Err(e) => runs.extend((0..spec.campaign.runs).map(|r| failed_run(cell, m, n, "ts", r, theta0, &e))),
        }
    }
    let mut summary = McSummary::from_runs(runs, timings);
    for c in &mut summary.cells {
        c.crb_paper = crb_snr(spec.snr.mu, theta0, c.n, CrbMode::Paper).ok();
        let mode = CrbMode::Independent {
            records: spec.snr.crb_records,
            seed: seed.child(CRB_TAG).child(c.cell as u64),
        };
        c.crb_independent = crb_snr(spec.snr.mu, theta0, c.n, mode).ok();
    }
    summary
        .timings
        .extend(train_secs.into_iter().map(|(cell, secs)| TimingRecord {
            cell,
            n: spec.campaign.grid[cell].1,
            method: "ts-train".into(),
            run: 0,
            micros: secs * 1e6,
        }));
    Ok(summary)
}

/// Shape of √N(θ̂ − θ_0) plus the sandwich check Σ_TS/N against the
/// empirical variance of θ̂.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub m: usize,
    pub n: usize,
    pub stats: NormalityStats,
    /// √N(θ̂ − θ_0) per successful run, in run order.
    pub sample: Vec<f64>,
    /// Σ_TS/N; `None` when the second stage is not polynomial-on-quantiles.
    pub sandwich_var: Option<f64>,
    pub empirical_var: f64,
}

impl NormalityReport {
    pub fn sandwich_ratio(&self) -> Option<f64> {
        self.sandwich_var.map(|s| s / self.empirical_var)
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        let s = &self.stats;
        let mut rows = vec![
            ReportRow::new("standardized_mean", s.mean, 0.0),
            ReportRow::new(
                "standardized_variance",
                s.variance,
                self.sandwich_var.map_or(f64::NAN, |v| v * self.n as f64),
            ),
            ReportRow::new("skewness", s.skewness.unwrap_or(f64::NAN), 0.0),
            ReportRow::new("excess_kurtosis", s.excess_kurtosis.unwrap_or(f64::NAN), 0.0),
            ReportRow::new("ks_fitted_normal", s.ks_fitted_normal.unwrap_or(f64::NAN), 0.08),
        ];
        if let Some(v) = self.sandwich_var {
            rows.push(ReportRow::new("sandwich_var_over_n", v, self.empirical_var));
        }
        rows
    }
}

/// Builds the normality report from estimates at a known θ_0.
pub fn normality_from_estimates(
    m: usize,
    n: usize,
    theta0: f64,
    estimates: &[f64],
    sandwich_var: Option<f64>,
) -> NormalityReport {
    let root_n = (n as f64).sqrt();
    let sample: Vec<f64> = estimates.iter().map(|t| root_n * (t - theta0)).collect();
    NormalityReport {
        m,
        n,
        stats: normality_stats(&sample),
        empirical_var: if estimates.len() < 2 {
            f64::NAN
        } else {
            sample_variance(estimates)
        },
        sample,
        sandwich_var,
    }
}

/// Σ_TS/N for a trained polynomial-on-quantiles estimator at θ_0.
pub fn sandwich_variance(est: &TrainedEstimator<f64>, mu: f64, theta0: f64, n: usize) -> Result<Option<f64>> {
    let (Compressor::Quantiles { levels }, SecondStage::Linear(stage)) = (&est.compressor, &est.stage) else {
        return Ok(None);
    };
    let density = DensitySpec::snr(mu, theta0)?;
    let v = ts_asymptotic_variance(stage, &density, levels)?;
    Ok(Some(v[(0, 0)] / n as f64))
}

/// Runs R test records at the largest grid cell.
pub fn run_normality(spec: &CampaignSpec) -> Result<(McSummary, NormalityReport)> {
    spec.check_experiment(Experiment::Normality)?;
    spec.validate()?;
    let seed = spec.seed();
    let theta0 = spec.campaign.theta0;
    let (cell, &(m, n)) = spec
        .campaign
        .grid
        .iter()
        .enumerate()
        .max_by_key(|(i, &(m, n))| (n, m, usize::MAX - i))
        .expect("grid validated non-empty");
    let config = spec.snr_ts_config(m, n, seed.child(TRAIN_TAG).child(cell as u64))?;
    let est = train(&config)?;
    let (runs, mut timings) = snr_test_runs(spec, &est, cell, m, n, seed.child(TEST_TAG).child(cell as u64))?;
    timings.push(TimingRecord {
        cell,
        n,
        method: "ts-train".into(),
        run: 0,
        micros: est.metadata.train_secs * 1e6,
    });
    let estimates: Vec<f64> = runs.iter().filter_map(|r| r.theta_hat).collect();
    let report = normality_from_estimates(
        m,
        n,
        theta0,
        &estimates,
        sandwich_variance(&est, spec.snr.mu, theta0, n)?,
    );
    let mut summary = McSummary::from_runs(runs, timings);
    summary.report = report.rows();
    Ok((summary, report))
}

/// Method names of the controlled-system comparison, in output order.
pub fn baseline_methods(spec: &CampaignSpec) -> Vec<String> {
    let mut v = vec!["ts".to_string(), "ekf-large".into(), "ekf-small".into()];
    v.extend(spec.nonlinear.pem_inits.iter().map(|k| format!("pem-{k}")));
    v
}

struct BaselineOutcome {
    theta_hat: f64,
    objective: Option<f64>,
}

fn run_method(
    method: &str,
    est: &TrainedEstimator<f64>,
    record: &ObservationSeries<f64>,
    pem_seed: SeedSpec,
) -> Result<BaselineOutcome> {
    match method {
        "ts" => est.infer(record).map(|t| BaselineOutcome {
            theta_hat: t.first(),
            objective: None,
        }),
        "ekf-large" | "ekf-small" => {
            let cfg = if method == "ekf-large" {
                EkfConfig::large()
            } else {
                EkfConfig::small()
            };
            ekf_estimate(record, &cfg).map(|r| BaselineOutcome {
                theta_hat: r.theta_hat,
                objective: Some(r.nll),
            })
        }
        m => {
            let k: usize = m
                .strip_prefix("pem-")
                .and_then(|k| k.parse().ok())
                .ok_or_else(|| Error::config(format!("unknown method {m:?}")))?;
            pem_estimate(record, &PemConfig::with_inits(k, pem_seed)).map(|r| BaselineOutcome {
                theta_hat: r.theta_hat,
                objective: Some(r.best_objective),
            })
        }
    }
}

/// TS (ARX + MLP, trained once) against the EKF and PEM baselines on R
/// records with θ_0 drawn from the prior. Records are simulated in
/// parallel; estimates run one at a time so that the timings are not
/// disturbed by each other.
pub fn run_baseline_compare(spec: &CampaignSpec) -> Result<McSummary> {
    spec.check_experiment(Experiment::BaselineCompare)?;
    spec.validate()?;
    let seed = spec.seed();
    let nl = &spec.nonlinear;
    let config = spec.nonlinear_ts_config(seed.child(TRAIN_TAG))?;
    let est = train(&config)?;
    let methods = baseline_methods(spec);

    let mut rng = seed.child(THETA_TAG).rng();
    let thetas: Vec<f64> = (0..spec.campaign.runs)
        .map(|_| rng.random_range(nl.prior_lower..=nl.prior_upper))
        .collect();
    let model = NonlinearSystemSpec::new(nl.record_len);
    let records: Vec<Result<ObservationSeries<f64>>> = thetas
        .par_iter()
        .enumerate()
        .map(|(r, &t)| crate::simulators::simulate_nonlinear(&model, &scalar(t)?, seed.child(TEST_TAG).child(r as u64)))
        .collect();

    let (m, n) = (nl.train_m, nl.record_len);
    let mut runs = Vec::new();
    let mut timings = Vec::new();
    for (r, (record, &theta0)) in records.iter().zip(&thetas).enumerate() {
        for method in &methods {
            let record = match record {
                Ok(y) => y,
                Err(e) => {
                    runs.push(failed_run(0, m, n, method, r, theta0, e));
                    continue;
                }
            };
            let start = Instant::now();
            let out = run_method(method, &est, record, seed.child(PEM_TAG).child(r as u64));
            let micros = start.elapsed().as_secs_f64() * 1e6;
            match out {
                Ok(o) => {
                    runs.push(RunRecord {
                        objective: o.objective,
                        ..ok_run(0, m, n, method, r, theta0, o.theta_hat)
                    });
                    timings.push(TimingRecord {
                        cell: 0,
                        n,
                        method: method.clone(),
                        run: r,
                        micros,
                    });
                }
                Err(e) => runs.push(failed_run(0, m, n, method, r, theta0, &e)),
            }
        }
    }
    let mut summary = McSummary::from_runs(runs, timings);
    summary
        .report
        .push(ReportRow::new("ts_train_secs", est.metadata.train_secs, 1.0));
    summary
        .report
        .push(ReportRow::new("ts_training_mse", est.metadata.training_mse, 1.0));
    Ok(summary)
}

/// Median absolute error of one method in a summary's runs.
pub fn median_abs_error(summary: &McSummary, method: &str) -> Option<f64> {
    summary
        .cells
        .iter()
        .find(|c| c.method == method)
        .and_then(|c| c.median_abs_error)
}

#[allow(clippy::too_many_arguments)]
fn timed_loop(
    label: &str,
    cell: usize,
    m: usize,
    records: &[(f64, ObservationSeries<f64>)],
    spec: &CampaignSpec,
    mut f: impl FnMut(&ObservationSeries<f64>, usize) -> Result<BaselineOutcome>,
    runs: &mut Vec<RunRecord>,
    timings: &mut Vec<TimingRecord>,
) {
    let b = &spec.bench;
    let n = records[0].1.len();
    for i in 0..b.warmup {
        let _ = f(&records[i % records.len()].1, i);
    }
    for r in 0..b.measured {
        let (theta0, y) = &records[r % records.len()];
        let start = Instant::now();
        let out = f(y, r);
        let micros = start.elapsed().as_secs_f64() * 1e6;
        match out {
            Ok(o) => {
                runs.push(RunRecord {
                    objective: o.objective,
                    ..ok_run(cell, m, n, label, r, *theta0, o.theta_hat)
                });
                timings.push(TimingRecord {
                    cell,
                    n,
                    method: label.into(),
                    run: r,
                    micros,
                });
            }
            Err(e) => runs.push(failed_run(cell, m, n, label, r, *theta0, &e)),
        }
    }
}

/// Distinct records cycled through by the benchmark.
const BENCH_RECORDS: usize = 20;

/// Steady-state latency per method: `warmup` discarded calls, then
/// `measured` timed calls, one at a time.
///
/// Cell 0.. are the quantile + polynomial estimator (trained once at the
/// first record length) on each `bench.record_lens` entry; the last cell
/// is the controlled-system configuration with TS, both EKFs and PEM at
/// the largest start count.
pub fn run_bench(spec: &CampaignSpec) -> Result<McSummary> {
    spec.check_experiment(Experiment::Bench)?;
    spec.validate()?;
    let seed = spec.seed();
    let b = &spec.bench;
    let theta0 = spec.campaign.theta0;
    let mut runs = Vec::new();
    let mut timings = Vec::new();

    let config = spec.snr_ts_config(b.train_m, b.record_lens[0], seed.child(TRAIN_TAG))?;
    let quant = train(&config)?;
    for (cell, &n) in b.record_lens.iter().enumerate() {
        let model = ModelSpec::Snr(SnrModelSpec::new(spec.snr.mu, n)?);
        let records = (0..BENCH_RECORDS)
            .map(|i| {
                Ok((
                    theta0,
                    model.simulate(
                        &scalar(theta0)?,
                        seed.child(TEST_TAG).child(cell as u64).child(i as u64),
                    )?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let f = |y: &ObservationSeries<f64>, _| {
            quant.infer(y).map(|t| BaselineOutcome {
                theta_hat: t.first(),
                objective: None,
            })
        };
        timed_loop(
            "ts-quantile-poly",
            cell,
            b.train_m,
            &records,
            spec,
            f,
            &mut runs,
            &mut timings,
        );
    }

    let nl = &spec.nonlinear;
    let cell = b.record_lens.len();
    let est = train(&spec.nonlinear_ts_config(seed.child(TRAIN_TAG).child(cell as u64))?)?;
    let model = NonlinearSystemSpec::new(nl.record_len);
    let mut rng = seed.child(THETA_TAG).rng();
    let records = (0..BENCH_RECORDS)
        .map(|i| {
            let t: f64 = rng.random_range(nl.prior_lower..=nl.prior_upper);
            Ok((
                t,
                crate::simulators::simulate_nonlinear(
                    &model,
                    &scalar(t)?,
                    seed.child(TEST_TAG).child(cell as u64).child(i as u64),
                )?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_inits = nl.pem_inits.iter().copied().max().unwrap_or(10);
    let pem = format!("pem-{max_inits}");
    for method in ["ts", "ekf-large", "ekf-small", pem.as_str()] {
        let f = |y: &ObservationSeries<f64>, r: usize| run_method(method, &est, y, seed.child(PEM_TAG).child(r as u64));
        timed_loop(method, cell, nl.train_m, &records, spec, f, &mut runs, &mut timings);
    }
    Ok(McSummary::from_runs(runs, timings))
}

/// Quantile CLT, quantile consistency and CRB lines as report rows. Runs
/// hold the CLT sample √N(q̂_N(γ) − F⁻¹(γ)) in `theta_hat` with θ_0 = 0.
pub fn run_asymptotics(spec: &CampaignSpec) -> Result<McSummary> {
    spec.check_experiment(Experiment::Asymptotics)?;
    spec.validate()?;
    let a = &spec.asymptotics;
    let seed = spec.seed();
    let mut report = Vec::new();
    let mut timings = Vec::new();
    let clock = |label: &str, start: Instant| TimingRecord {
        cell: 0,
        n: 0,
        method: label.into(),
        run: 0,
        micros: start.elapsed().as_secs_f64() * 1e6,
    };

    let start = Instant::now();
    if a.clt_runs < 2 || a.clt_n == 0 {
        return Err(Error::config("asymptotics needs clt_runs ≥ 2 and clt_n ≥ 1"));
    }
    let density = DensitySpec::gaussian(a.clt_mu, a.clt_sigma2)?;
    let theory = density.quantile_variance(a.gamma)?;
    let errors = scaled_quantile_errors(&density, a.gamma, a.clt_n, a.clt_runs, seed.child(CLT_TAG));
    report.push(ReportRow::new(
        "quantile_clt_variance",
        sample_variance(&errors),
        theory,
    ));
    report.push(ReportRow::new(
        "quantile_clt_mean",
        mean(&errors),
        (sample_variance(&errors) / a.clt_runs as f64).sqrt(),
    ));
    let runs: Vec<RunRecord> = errors
        .iter()
        .enumerate()
        .map(|(r, &e)| ok_run(0, 0, a.clt_n, "quantile-clt", r, 0.0, e))
        .collect();
    timings.push(clock("quantile-clt", start));

    let start = Instant::now();
    let density = DensitySpec::gaussian(a.lemma_mu, a.lemma_sigma2)?;
    let levels = QuantileLevels::new(a.lemma_quantiles)?;
    let lemma = quantile_consistency_check(&density, &levels, a.lemma_n, a.lemma_seeds, seed.child(LEMMA_TAG))?;
    report.push(ReportRow::new("quantile_consistency_pass_rate", lemma.pass_rate, 0.9));
    for (k, (e, b)) in lemma.mean_abs_error.iter().zip(&lemma.bounds).enumerate() {
        report.push(ReportRow::new(format!("quantile_mean_abs_error_{}", k + 1), *e, *b));
    }
    timings.push(clock("quantile-consistency", start));

    let start = Instant::now();
    let (mu, theta, n) = (spec.snr.mu, spec.campaign.theta0, a.crb_n);
    let paper = crb_snr(mu, theta, n, CrbMode::Paper)?;
    let mode = CrbMode::Independent {
        records: spec.snr.crb_records,
        seed: seed.child(CRB_TAG),
    };
    let independent = crb_snr(mu, theta, n, mode)?;
    let analytic = crate::asymptotics::crb_snr_analytic(theta, n);
    report.push(ReportRow::new("crb_paper", paper, analytic));
    report.push(ReportRow::new("crb_independent", independent, analytic));
    report.push(ReportRow::new("crb_paper_over_independent", paper, independent));
    let flagged = (paper / independent - 1.0).abs() > 0.1;
    report.push(ReportRow::new(
        "crb_discrepancy_flag",
        f64::from(u8::from(flagged)),
        0.0,
    ));
    timings.push(clock("crb", start));

    let mut summary = McSummary::from_runs(runs, timings);
    summary.report = report;
    Ok(summary)
}

/// True when the `crb_paper` and `crb_independent` lines of a report
/// disagree by more than 10%.
pub fn crb_discrepancy(report: &[ReportRow]) -> bool {
    report
        .iter()
        .any(|r| r.quantity == "crb_discrepancy_flag" && r.value != 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::summary::read_csv;

    fn small_spec(experiment: Experiment) -> CampaignSpec {
        let mut s = CampaignSpec::default();
        s.campaign.experiment = Some(experiment);
        s.campaign.runs = 20;
        s.campaign.grid = vec![(200, 100), (400, 400)];
        s.snr.crb_records = 100_000;
        s.nonlinear.train_m = 200;
        s.nonlinear.record_len = 300;
        s.mlp.epochs = 20;
        s.bench.warmup = 2;
        s.bench.measured = 5;
        s.bench.record_lens = vec![500, 1000];
        s.bench.train_m = 100;
        s.asymptotics.clt_n = 200;
        s.asymptotics.clt_runs = 200;
        s.asymptotics.lemma_n = 500;
        s.asymptotics.lemma_seeds = 10;
        s.asymptotics.crb_n = 1000;
        s
    }

    #[test]
    fn consistency_cells_and_crb_lines() {
        let spec = small_spec(Experiment::Consistency);
        let s = run_consistency(&spec).unwrap();
        assert_eq!(s.cells.len(), 2);
        assert_eq!(s.runs.len(), 40);
        for c in &s.cells {
            let (mse, bias, var) = (c.mse.unwrap(), c.bias.unwrap(), c.variance.unwrap());
            assert!((mse - (bias * bias + var)).abs() <= 1e-10 * mse);
            assert_eq!(c.crb_paper, Some(500.0 / c.n as f64));
            let ind = c.crb_independent.unwrap();
            assert!((ind / (50.0 / c.n as f64) - 1.0).abs() < 0.05, "{ind}");
        }
    }

    #[test]
    fn consistency_is_deterministic_and_reaggregates() {
        let spec = small_spec(Experiment::Consistency);
        let a = run_consistency(&spec).unwrap();
        let b = run_consistency(&spec).unwrap();
        assert_eq!(a.runs, b.runs);
        assert_eq!(a.cells, b.cells);
        let dir = tempfile::tempdir().unwrap();
        a.write(dir.path()).unwrap();
        let back: Vec<RunRecord> = read_csv(dir.path().join("runs.csv")).unwrap();
        let mut cells = aggregate(&back);
        for (c, orig) in cells.iter_mut().zip(&a.cells) {
            c.crb_paper = orig.crb_paper;
            c.crb_independent = orig.crb_independent;
        }
        assert_eq!(cells, a.cells);
    }

    #[test]
    fn failed_cell_is_recorded() {
        let mut spec = small_spec(Experiment::Consistency);
        // N = 3 is shorter than five quantile levels need.
        spec.campaign.grid = vec![(50, 3), (100, 100)];
        let s = run_consistency(&spec).unwrap();
        let bad = s.cell(0, "ts").unwrap();
        assert_eq!(bad.failures, 20);
        assert_eq!(bad.mse, None);
        assert!(s
            .runs
            .iter()
            .filter(|r| r.cell == 0)
            .all(|r| r.status != "ok" && r.theta_hat.is_none()));
        assert!(s.cell(1, "ts").unwrap().mse.is_some());
    }

    #[test]
    fn wrong_experiment_rejected() {
        let spec = small_spec(Experiment::Bench);
        assert!(matches!(run_consistency(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn constant_estimates_are_degenerate() {
        let r = normality_from_estimates(10, 100, 5.0, &[5.0; 30], None);
        assert!(r.sample.iter().all(|&x| x == 0.0));
        assert_eq!(r.stats.skewness, None);
        assert_eq!(r.stats.ks_fitted_normal, None);
        assert_eq!(r.sandwich_ratio(), None);
    }

    #[test]
    fn normality_uses_largest_cell() {
        let spec = small_spec(Experiment::Normality);
        let (s, r) = run_normality(&spec).unwrap();
        assert_eq!((r.m, r.n), (400, 400));
        assert_eq!(r.sample.len(), 20);
        assert!(r.sandwich_var.unwrap() > 0.0);
        assert_eq!(s.cells.len(), 1);
        let (_, again) = run_normality(&spec).unwrap();
        assert_eq!(again.sample, r.sample);
    }

    #[test]
    fn baseline_compare_rows() {
        let mut spec = small_spec(Experiment::BaselineCompare);
        spec.campaign.runs = 4;
        let s = run_baseline_compare(&spec).unwrap();
        let methods = baseline_methods(&spec);
        assert_eq!(s.runs.len(), 4 * methods.len());
        assert!(s.runs.iter().all(|r| r.theta0.abs() <= 0.9));
        for m in &methods {
            assert!(s.cells.iter().any(|c| &c.method == m));
        }
        let again = run_baseline_compare(&spec).unwrap();
        assert_eq!(again.runs, s.runs);
    }

    #[test]
    fn bench_counts() {
        let spec = small_spec(Experiment::Bench);
        let s = run_bench(&spec).unwrap();
        let t = summarize_timings(&s.timings);
        assert_eq!(t.len(), 2 + 4);
        assert!(t.iter().all(|t| t.samples == 5 && t.median_micros > 0.0));
    }

    #[test]
    fn asymptotics_report_flags_crb() {
        let spec = small_spec(Experiment::Asymptotics);
        let s = run_asymptotics(&spec).unwrap();
        let paper = s.report.iter().find(|r| r.quantity == "crb_paper").unwrap();
        assert_eq!(paper.value, 500.0 / 1000.0);
        assert!(crb_discrepancy(&s.report));
        assert_eq!(s.runs.len(), 200);
    }
}
