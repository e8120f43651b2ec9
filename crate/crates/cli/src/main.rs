//! Command-line front end: simulation, training, inference, Monte Carlo
//! campaigns and baselines.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use twostage::asymptotics::ReportRow;
use twostage::baselines::{ekf_estimate, pem_estimate, EkfConfig, PemConfig};
use twostage::estimator::{fit_on, generate_training_set, TrainedEstimator};
use twostage::harness::campaigns::{
    crb_discrepancy, run_asymptotics, run_baseline_compare, run_bench, run_consistency, run_normality, McSummary,
};
use twostage::harness::summary::{summarize_timings, write_csv, write_csv_to};
use twostage::harness::CampaignSpec;
use twostage::regression::predict;
use twostage::{Error, ObservationSeries, ParameterVector, Result, SeedSpec};

#[derive(Parser)]
#[command(
    name = "twostage",
    version,
    about = "Two-stage simulation-trained parameter estimation"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Campaign configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `campaign.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `campaign.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Snr,
    Nonlinear,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    EkfLarge,
    EkfSmall,
    Pem,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::EkfLarge => "ekf-large",
            Method::EkfSmall => "ekf-small",
            Method::Pem => "pem",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one record and write it as `record.csv`.
    Simulate {
        #[arg(long, value_enum, default_value = "snr")]
        model: ModelKind,
        /// Parameter value to simulate at
        #[arg(long, allow_negative_numbers = true)]
        theta: f64,
        /// Record length (default: the config's record length for the model).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train an estimator and write `model.toml`.
    Train {
        #[arg(long, value_enum, default_value = "snr")]
        model: ModelKind,
        /// Training records (default: first grid cell, or nonlinear.train_m).
        #[arg(long)]
        m: Option<usize>,
        /// Record length (default: first grid cell, or nonlinear.record_len).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Estimate θ from a record with a trained model.
    Estimate {
        /// `model.toml` written by `train`
        #[arg(long)]
        model: PathBuf,
        /// Record CSV with header `t,y,u`
        #[arg(long)]
        record: PathBuf,
        /// Leave out the timing column.
        #[arg(long)]
        no_timing: bool,
    },
    /// Estimate θ from a record with the EKF or PEM baseline.
    Baselines {
        #[arg(long, value_enum)]
        method: Method,
        /// Record CSV with header `t,y,u`
        #[arg(long)]
        record: PathBuf,
        /// PEM starting points.
        #[arg(long, default_value_t = 10)]
        n_init: usize,
        /// True parameter, copied to the output when known.
        #[arg(long, allow_negative_numbers = true)]
        theta0: Option<f64>,
    },
    /// MSE over the (m, N) grid with CRB lines.
    McConsistency,
    /// Shape of √N(θ̂ − θ_0) at the largest grid cell.
    McNormality,
    /// TS against EKF and PEM on the controlled system.
    CompareBaselines,
    /// Inference latency per method.
    Bench,
    /// Quantile CLT, quantile consistency and CRB report.
    Asymptotics,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Train { .. } => "train",
            Command::Estimate { .. } => "estimate",
            Command::Baselines { .. } => "baselines",
            Command::McConsistency => "consistency",
            Command::McNormality => "normality",
            Command::CompareBaselines => "baseline-compare",
            Command::Bench => "bench",
            Command::Asymptotics => "asymptotics",
        }
    }
}

/// A `quantity,value` line of the single-shot commands' summaries.
#[derive(Serialize)]
struct KeyValue {
    quantity: &'static str,
    value: String,
}

fn kv(quantity: &'static str, value: impl ToString) -> KeyValue {
    KeyValue {
        quantity,
        value: value.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error,usage,{}", sanitize(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error,{},{}", e.kind(), sanitize(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}

fn sanitize(msg: &str) -> String {
    msg.replace(['\n', '\r'], " ")
}

fn load_spec(common: &Common) -> Result<CampaignSpec> {
    let mut spec = match &common.config {
        Some(path) => CampaignSpec::load(path)?,
        None => CampaignSpec::default(),
    };
    if let Some(seed) = common.seed {
        spec.campaign.seed = seed;
    }
    Ok(spec)
}

fn out_dir(common: &Common, spec: &CampaignSpec, name: &str) -> Result<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| spec.campaign.out.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(name));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn read_record(path: &Path) -> Result<ObservationSeries> {
    let file = File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    ObservationSeries::read_csv(BufReader::new(file))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.common.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let spec = load_spec(&cli.common)?;
    let name = cli.command.name();
    let common = &cli.common;
    match cli.command {
        Command::Simulate { model, theta, n } => simulate(common, &spec, model, theta, n),
        Command::Train { model, m, n } => train(common, &spec, model, m, n),
        Command::Estimate {
            model,
            record,
            no_timing,
        } => estimate(common, &model, &record, !no_timing),
        Command::Baselines {
            method,
            record,
            n_init,
            theta0,
        } => baselines(common, &spec, method, &record, n_init, theta0),
        Command::McConsistency => campaign(common, &spec, name, run_consistency(&spec)?),
        Command::McNormality => {
            let (summary, report) = run_normality(&spec)?;
            let dir = out_dir(common, &spec, name)?;
            #[derive(Serialize)]
            struct Sample {
                index: usize,
                standardized_error: f64,
            }
            let sample: Vec<Sample> = report
                .sample
                .iter()
                .enumerate()
                .map(|(index, &standardized_error)| Sample {
                    index,
                    standardized_error,
                })
                .collect();
            write_csv(dir.join("sample.csv"), &sample)?;
            campaign(common, &spec, name, summary)?;
            write_csv_to(io::stdout().lock(), &report.rows())
        }
        Command::CompareBaselines => campaign(common, &spec, name, run_baseline_compare(&spec)?),
        Command::Bench => {
            let summary = run_bench(&spec)?;
            campaign(common, &spec, name, summary.clone())?;
            write_csv_to(io::stdout().lock(), &summarize_timings(&summary.timings))
        }
        Command::Asymptotics => {
            let summary = run_asymptotics(&spec)?;
            let dir = out_dir(common, &spec, name)?;
            summary.write(&dir)?;
            // The report is this command's summary.
            write_csv(dir.join("summary.csv"), &summary.report)?;
            write_csv_to(io::stdout().lock(), &summary.report)?;
            if crb_discrepancy(&summary.report) {
                let row = summary
                    .report
                    .iter()
                    .find(|r| r.quantity == "crb_paper_over_independent")
                    .expect("row present");
                eprintln!(
                    "warning,crb_discrepancy,paper-mode CRB is {:.3} times the score-variance CRB",
                    row.ratio
                );
            }
            Ok(())
        }
    }
}

fn campaign(common: &Common, spec: &CampaignSpec, name: &str, summary: McSummary) -> Result<()> {
    let dir = out_dir(common, spec, name)?;
    summary.write(&dir)?;
    if name != "normality" && name != "bench" {
        write_csv_to(io::stdout().lock(), &summary.cells)?;
    }
    Ok(())
}

fn simulate(common: &Common, spec: &CampaignSpec, model: ModelKind, theta: f64, n: Option<usize>) -> Result<()> {
    let seed = spec.seed();
    let (model_spec, label) = match model {
        ModelKind::Snr => {
            let n = n.unwrap_or(spec.campaign.grid[0].1);
            (spec.snr_ts_config(1, n, seed)?.model, "snr")
        }
        ModelKind::Nonlinear => {
            let n = n.unwrap_or(spec.nonlinear.record_len);
            (spec.nonlinear_ts_config(seed)?.model.with_record_len(n), "nonlinear")
        }
    };
    let record = model_spec.simulate(&ParameterVector::scalar(theta)?, seed)?;
    let dir = out_dir(common, spec, "simulate")?;
    record.write_csv(File::create(dir.join("record.csv"))?)?;
    let y = record.outputs();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    write_csv(
        dir.join("summary.csv"),
        &[
            kv("model", label),
            kv("theta", theta),
            kv("n", record.len()),
            kv("seed", spec.campaign.seed),
            kv("mean_y", mean),
        ],
    )?;
    #[derive(Serialize)]
    struct Row {
        run: usize,
        model: &'static str,
        theta: f64,
        n: usize,
        seed: u64,
    }
    write_csv(
        dir.join("runs.csv"),
        &[Row {
            run: 0,
            model: label,
            theta,
            n: record.len(),
            seed: spec.campaign.seed,
        }],
    )?;
    write_csv::<KeyValue>(dir.join("timing.csv"), &[])?;
    println!("{}", dir.join("record.csv").display());
    Ok(())
}

fn train(common: &Common, spec: &CampaignSpec, model: ModelKind, m: Option<usize>, n: Option<usize>) -> Result<()> {
    let seed = spec.seed();
    let config = match model {
        ModelKind::Snr => {
            let (m0, n0) = spec.campaign.grid[0];
            spec.snr_ts_config(m.unwrap_or(m0), n.unwrap_or(n0), seed)?
        }
        ModelKind::Nonlinear => {
            let mut c = spec.nonlinear_ts_config(seed)?;
            c.m = m.unwrap_or(c.m);
            c.model = c.model.with_record_len(n.unwrap_or(c.record_len()));
            c
        }
    };
    let start = Instant::now();
    let set = generate_training_set(&config)?;
    let mut est = fit_on(&config, &set)?;
    let secs = start.elapsed().as_secs_f64();
    est.metadata.train_secs = secs;

    let dir = out_dir(common, spec, "train")?;
    est.save(dir.join("model.toml"))?;
    let meta = &est.metadata;
    write_csv(
        dir.join("summary.csv"),
        &[
            kv("m", meta.m),
            kv("record_len", meta.record_len),
            kv("training_mse", meta.training_mse),
            kv("rank_warnings", meta.rank_warnings),
            kv("seed", spec.campaign.seed),
        ],
    )?;
    #[derive(Serialize)]
    struct Row {
        index: usize,
        theta: f64,
        fitted: f64,
    }
    let rows = set
        .features
        .iter()
        .zip(&set.thetas)
        .enumerate()
        .map(|(index, (z, t))| {
            Ok(Row {
                index,
                theta: t.first(),
                fitted: predict(&est.stage, z)?.first(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(dir.join("runs.csv"), &rows)?;
    write_csv(dir.join("timing.csv"), &[kv("train_secs", secs)])?;
    println!("{}", dir.join("model.toml").display());
    Ok(())
}

fn estimate(common: &Common, model: &Path, record: &Path, timing: bool) -> Result<()> {
    let est = TrainedEstimator::<f64>::load(model)?;
    let series = read_record(record)?;
    let (theta, dt) = est.infer_timed(&series)?;
    let micros = dt.as_secs_f64() * 1e6;
    let mut header: Vec<String> = (1..=theta.dim()).map(|k| format!("theta_hat_{k}")).collect();
    let mut row: Vec<String> = theta.as_slice().iter().map(f64::to_string).collect();
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("runs.csv"))?;
        w.write_record(&header)?;
        w.write_record(&row)?;
        w.flush()?;
        let summary: Vec<KeyValue> = theta.as_slice().iter().map(|t| kv("theta_hat", t)).collect();
        write_csv(dir.join("summary.csv"), &summary)?;
        write_csv(dir.join("timing.csv"), &[kv("infer_micros", micros)])?;
    }
    if timing {
        header.push("infer_micros".into());
        row.push(micros.to_string());
    }
    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record(&header)?;
    w.write_record(&row)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BaselineRow {
    method: &'static str,
    theta0: Option<f64>,
    theta_hat: f64,
    objective_or_nll: f64,
    infer_micros: f64,
}

fn baselines(
    common: &Common,
    spec: &CampaignSpec,
    method: Method,
    record: &Path,
    n_init: usize,
    theta0: Option<f64>,
) -> Result<()> {
    let series = read_record(record)?;
    let start = Instant::now();
    let (theta_hat, objective) = match method {
        Method::EkfLarge => ekf_estimate(&series, &EkfConfig::large()).map(|r| (r.theta_hat, r.nll))?,
        Method::EkfSmall => ekf_estimate(&series, &EkfConfig::small()).map(|r| (r.theta_hat, r.nll))?,
        Method::Pem => pem_estimate(
            &series,
            &PemConfig::with_inits(n_init, SeedSpec::new(spec.campaign.seed, 0)),
        )
        .map(|r| (r.theta_hat, r.best_objective))?,
    };
    let infer_micros = start.elapsed().as_secs_f64() * 1e6;
    let row = BaselineRow {
        method: method.name(),
        theta0,
        theta_hat,
        objective_or_nll: objective,
        infer_micros,
    };
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir)?;
        #[derive(Serialize)]
        struct Deterministic {
            method: &'static str,
            theta0: Option<f64>,
            theta_hat: f64,
            objective_or_nll: f64,
        }
        let d = Deterministic {
            method: row.method,
            theta0,
            theta_hat,
            objective_or_nll: objective,
        };
        write_csv(dir.join("runs.csv"), &[&d])?;
        write_csv(
            dir.join("summary.csv"),
            &[ReportRow::new("theta_hat", theta_hat, theta0.unwrap_or(f64::NAN))],
        )?;
        write_csv(dir.join("timing.csv"), &[kv("infer_micros", infer_micros)])?;
    }
    write_csv_to(io::stdout().lock(), &[row])?;
    io::stdout().flush()?;
    Ok(())
}
