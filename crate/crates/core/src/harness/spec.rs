use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compression::Compressor;
use crate::error::{Error, Result};
use crate::estimator::{SecondStageSpec, TsConfig};
use crate::prior::PriorSpec;
use crate::regression::{MlpConfig, Ridge};
use crate::seed::SeedSpec;
use crate::simulators::{ModelSpec, NonlinearSystemSpec, SnrModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Consistency,
    Normality,
    BaselineCompare,
    Bench,
    Asymptotics,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Consistency => "consistency",
            Experiment::Normality => "normality",
            Experiment::BaselineCompare => "baseline-compare",
            Experiment::Bench => "bench",
            Experiment::Asymptotics => "asymptotics",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSection {
    /// Optional; when present it must match the subcommand.
    pub experiment: Option<Experiment>,
    pub runs: usize,
    pub seed: u64,
    /// θ_0 for the SNR campaigns.
    pub theta0: f64,
    /// (m, N) cells.
    pub grid: Vec<(usize, usize)>,
    pub out: Option<PathBuf>,
}

impl Default for CampaignSection {
    fn default() -> Self {
        Self {
            experiment: None,
            runs: 100,
            seed: 1,
            theta0: 5.0,
            grid: vec![(100, 100), (1000, 1000), (10_000, 10_000)],
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnrSection {
    pub mu: f64,
    pub prior_lower: f64,
    pub prior_upper: f64,
    pub quantiles: usize,
    pub degree: usize,
    pub ridge: Ridge<f64>,
    /// Records for the score-variance CRB oracle.
    pub crb_records: usize,
}

impl Default for SnrSection {
    fn default() -> Self {
        Self {
            mu: 5.0,
            prior_lower: 2.0,
            prior_upper: 10.0,
            quantiles: 5,
            degree: 2,
            ridge: Ridge::Auto,
            crb_records: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearSection {
    pub prior_lower: f64,
    pub prior_upper: f64,
    pub record_len: usize,
    pub train_m: usize,
    pub arx_na: usize,
    pub arx_nb: usize,
    pub pem_inits: Vec<usize>,
}

impl Default for NonlinearSection {
    fn default() -> Self {
        Self {
            prior_lower: -0.9,
            prior_upper: 0.9,
            record_len: 1000,
            train_m: 2000,
            arx_na: 5,
            arx_nb: 5,
            pem_inits: vec![1, 5, 10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSection {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
}

impl Default for MlpSection {
    fn default() -> Self {
        let d = MlpConfig::default();
        Self {
            hidden: d.hidden,
            epochs: d.epochs,
            batch_size: d.batch_size,
            step_size: d.step_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub warmup: usize,
    pub measured: usize,
    /// Record lengths for the quantile + polynomial estimator.
    pub record_lens: Vec<usize>,
    /// Training count for the benchmarked quantile estimator.
    pub train_m: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            warmup: 30,
            measured: 200,
            record_lens: vec![10_000, 20_000],
            train_m: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymptoticsSection {
    pub gamma: f64,
    /// Gaussian used by the quantile CLT check.
    pub clt_mu: f64,
    pub clt_sigma2: f64,
    pub clt_n: usize,
    pub clt_runs: usize,
    pub lemma_n: usize,
    pub lemma_seeds: usize,
    pub lemma_mu: f64,
    pub lemma_sigma2: f64,
    pub lemma_quantiles: usize,
    /// Record length at which the CRB lines are reported.
    pub crb_n: usize,
}

impl Default for AsymptoticsSection {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            clt_mu: 0.0,
            clt_sigma2: 1.0,
            clt_n: 10_000,
            clt_runs: 2000,
            lemma_n: 10_000,
            lemma_seeds: 50,
            lemma_mu: 5.0,
            lemma_sigma2: 5.0,
            lemma_quantiles: 5,
            crb_n: 10_000,
        }
    }
}

/// A full campaign description, one section per concern.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSpec {
    pub campaign: CampaignSection,
    pub snr: SnrSection,
    pub nonlinear: NonlinearSection,
    pub mlp: MlpSection,
    pub bench: BenchSection,
    pub asymptotics: AsymptoticsSection,
}

impl CampaignSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.campaign;
        if c.runs == 0 {
            return Err(Error::config("campaign.runs must be at least 1"));
        }
        if c.grid.is_empty() {
            return Err(Error::config("campaign.grid must not be empty"));
        }
        if c.grid.iter().any(|&(m, n)| m == 0 || n == 0) {
            return Err(Error::config("grid cells need m ≥ 1 and N ≥ 1"));
        }
        if !(c.theta0 > 0.0 && c.theta0.is_finite()) {
            return Err(Error::config("campaign.theta0 must be positive for the SNR model"));
        }
        if self.nonlinear.pem_inits.contains(&0) {
            return Err(Error::config("nonlinear.pem_inits entries must be ≥ 1"));
        }
        if self.bench.measured == 0 || self.bench.record_lens.is_empty() {
            return Err(Error::config("bench needs measured ≥ 1 and at least one record length"));
        }
        Ok(())
    }

    /// Rejects a config written for a different experiment.
    pub fn check_experiment(&self, wanted: Experiment) -> Result<()> {
        match self.campaign.experiment {
            Some(e) if e != wanted => Err(Error::config(format!(
                "config is for experiment {:?} but {:?} was requested",
                e.name(),
                wanted.name()
            ))),
            _ => Ok(()),
        }
    }

    pub fn seed(&self) -> SeedSpec {
        SeedSpec::new(self.campaign.seed, 0)
    }

    /// TS configuration of the SNR experiment for one (m, N) cell.
    pub fn snr_ts_config(&self, m: usize, n: usize, seed: SeedSpec) -> Result<TsConfig<f64>> {
        let s = &self.snr;
        Ok(TsConfig {
            prior: PriorSpec::uniform(s.prior_lower, s.prior_upper)?,
            model: ModelSpec::Snr(SnrModelSpec::new(s.mu, n)?),
            compressor: Compressor::quantiles(s.quantiles)?,
            second_stage: SecondStageSpec::Poly {
                degree: s.degree,
                ridge: s.ridge,
            },
            m,
            seed,
        })
    }

    pub fn mlp_config(&self) -> MlpConfig {
        MlpConfig {
            hidden: self.mlp.hidden,
            epochs: self.mlp.epochs,
            batch_size: self.mlp.batch_size,
            step_size: self.mlp.step_size,
            seed: SeedSpec::default(),
        }
    }

    /// TS configuration of the controlled-system comparison (ARX + MLP).
    pub fn nonlinear_ts_config(&self, seed: SeedSpec) -> Result<TsConfig<f64>> {
        let s = &self.nonlinear;
        Ok(TsConfig {
            prior: PriorSpec::uniform(s.prior_lower, s.prior_upper)?,
            model: ModelSpec::Nonlinear(NonlinearSystemSpec::new(s.record_len)),
            compressor: Compressor::arx(s.arx_na, s.arx_nb)?,
            second_stage: SecondStageSpec::Mlp(self.mlp_config()),
            m: s.train_m,
            seed,
        })
    }
}
