//! The two-stage pipeline: simulate a training set from the prior, compress
//! each record, fit the second stage, then map new records in one pass.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compression::Compressor;
use crate::domain::{ObservationSeries, ParameterVector};
use crate::error::{Error, Result};
use crate::prior::{sample_prior, PriorSpec};
use crate::regression::{fit_mlp, predict, LinearSecondStage, MlpConfig, PolyFeatureMap, Ridge, SecondStage};
use crate::scalar::Real;
use crate::seed::SeedSpec;
use crate::simulators::ModelSpec;

/// Version written into every serialized model.
pub const FORMAT_VERSION: u32 = 1;

const PRIOR_STREAM: u64 = 0x7072_696f;
const RECORD_STREAM: u64 = 0x7265_636f;
const FIT_STREAM: u64 = 0x6669_7400;

/// Which second stage to fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub enum SecondStageSpec<T> {
    Poly {
        degree: usize,
        #[serde(default)]
        ridge: Ridge<T>,
    },
    /// The network's seed is derived from the training seed; any seed in
    /// the nested config is ignored.
    Mlp(MlpConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct TsConfig<T> {
    pub prior: PriorSpec<T>,
    /// The model's record length is the training N.
    pub model: ModelSpec<T>,
    pub compressor: Compressor,
    pub second_stage: SecondStageSpec<T>,
    /// Number of training pairs m.
    pub m: usize,
    pub seed: SeedSpec,
}

impl<T: Real> TsConfig<T> {
    pub fn record_len(&self) -> usize {
        self.model.record_len()
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.model.validate()?;
        if self.m == 0 {
            return Err(Error::config("training count m must be positive"));
        }
        let n = self.record_len();
        if n < self.compressor.min_len() {
            return Err(Error::config(format!(
                "record length {n} is below the compressor minimum {}",
                self.compressor.min_len()
            )));
        }
        // Both built-in models have a scalar parameter.
        if self.prior.dim() != 1 {
            return Err(Error::config(format!(
                "the model has a scalar parameter but the prior has dimension {}",
                self.prior.dim()
            )));
        }
        Ok(())
    }
}

/// Seed of the i-th training record.
pub fn record_seed(seed: SeedSpec, index: usize) -> SeedSpec {
    seed.child(RECORD_STREAM).child(index as u64)
}

/// The simulated training pairs (θ̃_i, h_N(y_i)).
#[derive(Debug, Clone)]
pub struct TrainingSet<T> {
    pub thetas: Vec<ParameterVector<T>>,
    pub features: Vec<Vec<T>>,
    /// Records whose ARX fit needed the ridge fallback.
    pub rank_warnings: usize,
}

/// Draws m parameters, simulates and compresses one record for each.
/// Runs in parallel; the result is ordered by index and does not depend on
/// the thread count.
pub fn generate_training_set<T: Real>(config: &TsConfig<T>) -> Result<TrainingSet<T>> {
    config.validate()?;
    let thetas = sample_prior(&config.prior, config.m, config.seed.child(PRIOR_STREAM))?;
    let results: Vec<Result<_>> = thetas
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            let series = config.model.simulate(theta, record_seed(config.seed, i))?;
            config.compressor.compress(&series)
        })
        .collect();
    let mut features = Vec::with_capacity(config.m);
    let mut rank_warnings = 0;
    for (i, r) in results.into_iter().enumerate() {
        let f = r.map_err(|e| e.in_record(i))?;
        rank_warnings += usize::from(f.warning.is_some());
        features.push(f.z);
    }
    Ok(TrainingSet {
        thetas,
        features,
        rank_warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub m: usize,
    pub record_len: usize,
    pub training_mse: f64,
    pub train_secs: f64,
    pub rank_warnings: usize,
    pub seed: SeedSpec,
}

/// θ̂ = g(h_N(y)). Immutable once trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct TrainedEstimator<T> {
    pub compressor: Compressor,
    pub stage: SecondStage<T>,
    pub metadata: TrainingMetadata,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
struct ModelDocument<T> {
    format_version: u32,
    compressor: Compressor,
    metadata: TrainingMetadata,
    stage: SecondStage<T>,
}

/// Fits the second stage on an existing training set.
pub fn fit_on<T: Real>(config: &TsConfig<T>, set: &TrainingSet<T>) -> Result<TrainedEstimator<T>> {
    let n = config.compressor.output_dim();
    let (stage, mse) = match &config.second_stage {
        SecondStageSpec::Poly { degree, ridge } => {
            let map = PolyFeatureMap::new(n, *degree)?;
            let (stage, fit) = LinearSecondStage::fit(map, &set.features, &set.thetas, *ridge)?;
            (SecondStage::Linear(stage), fit.training_mse)
        }
        SecondStageSpec::Mlp(mlp) => {
            let mlp = MlpConfig {
                seed: config.seed.child(FIT_STREAM),
                ..mlp.clone()
            };
            let (stage, fit) = fit_mlp(&set.features, &set.thetas, &mlp)?;
            (SecondStage::Mlp(stage), fit.training_mse)
        }
    };
    Ok(TrainedEstimator {
        compressor: config.compressor,
        stage,
        metadata: TrainingMetadata {
            m: config.m,
            record_len: config.record_len(),
            training_mse: mse.as_f64(),
            train_secs: 0.0,
            rank_warnings: set.rank_warnings,
            seed: config.seed,
        },
    })
}

/// Training phase: simulate, compress, fit.
pub fn train<T: Real>(config: &TsConfig<T>) -> Result<TrainedEstimator<T>> {
    let start = Instant::now();
    let set = generate_training_set(config)?;
    let mut est = fit_on(config, &set)?;
    est.metadata.train_secs = start.elapsed().as_secs_f64();
    Ok(est)
}

impl<T: Real> TrainedEstimator<T> {
    pub fn input_dim(&self) -> usize {
        self.compressor.output_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.stage.output_dim()
    }

    /// Implementation phase: one compression and one evaluation of g.
    pub fn infer(&self, series: &ObservationSeries<T>) -> Result<ParameterVector<T>> {
        let z = self.compressor.compress(series)?;
        predict(&self.stage, &z.z)
    }

    /// [`infer`](Self::infer) with its wall-clock time.
    pub fn infer_timed(&self, series: &ObservationSeries<T>) -> Result<(ParameterVector<T>, Duration)> {
        let start = Instant::now();
        let theta = self.infer(series)?;
        Ok((theta, start.elapsed()))
    }

    fn check(&self) -> Result<()> {
        if self.stage.input_dim() != self.compressor.output_dim() {
            return Err(Error::config(format!(
                "compressor produces {} features but the second stage expects {}",
                self.compressor.output_dim(),
                self.stage.input_dim()
            )));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        let doc = ModelDocument {
            format_version: FORMAT_VERSION,
            compressor: self.compressor,
            metadata: self.metadata.clone(),
            stage: self.stage.clone(),
        };
        toml::to_string(&doc).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version = toml::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if v.format_version != FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                v.format_version
            )));
        }
        let doc: ModelDocument<T> = toml::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        let est = Self {
            compressor: doc.compressor,
            stage: doc.stage,
            metadata: doc.metadata,
        };
        est.check()?;
        Ok(est)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulators::{NonlinearSystemSpec, SnrModelSpec};

    fn snr_config(m: usize, n: usize, degree: usize) -> TsConfig<f64> {
        TsConfig {
            prior: PriorSpec::uniform(2.0, 10.0).unwrap(),
            model: ModelSpec::Snr(SnrModelSpec::new(5.0, n).unwrap()),
            compressor: Compressor::quantiles(5).unwrap(),
            second_stage: SecondStageSpec::Poly {
                degree,
                ridge: Ridge::Auto,
            },
            m,
            seed: SeedSpec::new(2024, 0),
        }
    }

    #[test]
    fn snr_training_beats_prior_mean() {
        let est = train(&snr_config(1000, 1000, 2)).unwrap();
        assert!(est.metadata.training_mse < 16.0 / 3.0, "{}", est.metadata.training_mse);
        assert_eq!(est.metadata.m, 1000);
        assert_eq!(est.metadata.record_len, 1000);
    }

    #[test]
    fn square_system_interpolates() {
        let mut cfg = snr_config(21, 50, 2);
        cfg.second_stage = SecondStageSpec::Poly {
            degree: 2,
            ridge: Ridge::None,
        };
        let est = train(&cfg).unwrap();
        assert!(est.metadata.training_mse <= 1e-8, "{}", est.metadata.training_mse);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = snr_config(200, 200, 2);
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(a.stage, b.stage);
        // Wall-clock aside, the documents agree.
        let strip = |e: &TrainedEstimator<f64>| {
            let mut e = e.clone();
            e.metadata.train_secs = 0.0;
            e.to_toml_string().unwrap()
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn thread_count_does_not_change_training_set() {
        let cfg = snr_config(64, 100, 1);
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = serial.install(|| generate_training_set(&cfg)).unwrap();
        let b = generate_training_set(&cfg).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.thetas, b.thetas);
    }

    #[test]
    fn training_record_reproduces_training_prediction() {
        let cfg = snr_config(100, 100, 2);
        let set = generate_training_set(&cfg).unwrap();
        let est = fit_on(&cfg, &set).unwrap();
        let i = 37;
        let series = cfg.model.simulate(&set.thetas[i], record_seed(cfg.seed, i)).unwrap();
        assert_eq!(
            est.infer(&series).unwrap(),
            predict(&est.stage, &set.features[i]).unwrap()
        );
    }

    #[test]
    fn constant_record_is_total() {
        let est = train(&snr_config(300, 300, 2)).unwrap();
        let series = ObservationSeries::new(vec![5.0; 300], None).unwrap();
        assert!(est.infer(&series).unwrap().first().is_finite());
    }

    #[test]
    fn short_record_is_rejected() {
        let est = train(&snr_config(100, 100, 1)).unwrap();
        let series = ObservationSeries::new(vec![1.0; 3], None).unwrap();
        assert!(matches!(est.infer(&series), Err(Error::InputTooShort { .. })));
    }

    #[test]
    fn concurrent_inference_matches_serial() {
        let cfg = snr_config(200, 200, 2);
        let est = train(&cfg).unwrap();
        let records: Vec<_> = (0..1000)
            .map(|i| {
                let theta = ParameterVector::scalar(2.0 + (i % 80) as f64 * 0.1).unwrap();
                cfg.model.simulate(&theta, SeedSpec::new(9, i)).unwrap()
            })
            .collect();
        let serial: Vec<_> = records.iter().map(|r| est.infer(r).unwrap()).collect();
        let parallel: Vec<_> = records.par_iter().map(|r| est.infer(r).unwrap()).collect();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn linear_model_round_trips_bit_exactly() {
        let est = train(&snr_config(150, 150, 2)).unwrap();
        let text = est.to_toml_string().unwrap();
        assert!(text.starts_with("format_version = 1"));
        let back = TrainedEstimator::<f64>::from_toml_str(&text).unwrap();
        assert_eq!(back, est);
        let (SecondStage::Linear(a), SecondStage::Linear(b)) = (&est.stage, &back.stage) else {
            panic!("expected linear stages");
        };
        for (x, y) in a.beta.as_slice().iter().zip(b.beta.as_slice()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let est = train(&snr_config(50, 50, 1)).unwrap();
        let text = est
            .to_toml_string()
            .unwrap()
            .replacen("format_version = 1", "format_version = 99", 1);
        assert!(matches!(
            TrainedEstimator::<f64>::from_toml_str(&text),
            Err(Error::Serialization(_))
        ));
    }

    #[test]
    fn mlp_on_nonlinear_system() {
        let cfg = TsConfig {
            prior: PriorSpec::uniform(-0.9, 0.9).unwrap(),
            model: ModelSpec::Nonlinear(NonlinearSystemSpec::new(200)),
            compressor: Compressor::arx(2, 2).unwrap(),
            second_stage: SecondStageSpec::Mlp(MlpConfig {
                hidden: 16,
                epochs: 20,
                ..MlpConfig::default()
            }),
            m: 300,
            seed: SeedSpec::new(4, 4),
        };
        let est = train(&cfg).unwrap();
        // Prior variance is 0.27.
        assert!(est.metadata.training_mse < 0.27);
        let back = TrainedEstimator::<f64>::from_toml_str(&est.to_toml_string().unwrap()).unwrap();
        let series = cfg
            .model
            .simulate(&ParameterVector::scalar(0.3).unwrap(), SeedSpec::new(1, 1))
            .unwrap();
        assert_eq!(back.infer(&series).unwrap(), est.infer(&series).unwrap());
    }

    #[test]
    fn invalid_config() {
        let mut cfg = snr_config(0, 100, 1);
        assert!(train(&cfg).is_err());
        cfg.m = 10;
        cfg.model = cfg.model.with_record_len(3);
        assert!(matches!(train(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn record_errors_carry_index() {
        // θ = 0.469 explodes over a long record.
        let cfg = TsConfig {
            prior: PriorSpec::uniform(0.4689, 0.4691).unwrap(),
            model: ModelSpec::Nonlinear(NonlinearSystemSpec::new(10_000)),
            compressor: Compressor::arx(1, 1).unwrap(),
            second_stage: SecondStageSpec::Poly {
                degree: 1,
                ridge: Ridge::Auto,
            },
            m: 4,
            seed: SeedSpec::new(0, 0),
        };
        match train(&cfg) {
            Err(Error::Record { index: 0, source }) => assert_eq!(source.kind(), "model_explosion"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
