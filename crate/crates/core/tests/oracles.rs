use rand::Rng;

use twostage::asymptotics::{quantile_clt_check, quantile_consistency_check, DensitySpec};
use twostage::compression::Compressor;
use twostage::compression::QuantileLevels;
use twostage::estimator::{train, SecondStageSpec, TsConfig};
use twostage::regression::{fit_linear, predict, PolyFeatureMap, Ridge, SecondStage};
use twostage::simulators::{ModelSpec, SnrModelSpec};
use twostage::stats::normal_quantile;
use twostage::{ParameterVector, PriorSpec, SeedSpec};

/// Location-scale family with two quantile levels: J = (1, q₁, q₂) spans
/// (1, μ, σ), so exactly linear targets pin β* down.
#[test]
fn population_quantile_features_recover_linear_coefficients() {
    let levels = QuantileLevels::new(2).unwrap();
    let map = PolyFeatureMap::new(2, 1).unwrap();
    let beta_star = [0.7, -1.3, 2.1];
    let mut rng = SeedSpec::new(11, 0).rng();
    let mut feats = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..50 {
        let mu: f64 = rng.random_range(-3.0..3.0);
        let sd: f64 = rng.random_range(0.5..2.0);
        // Independent of DensitySpec: μ + σ Φ⁻¹(γ) from scratch.
        let z: Vec<f64> = [1.0 / 3.0, 2.0 / 3.0]
            .iter()
            .map(|&g: &f64| mu + sd * normal_quantile(g))
            .collect();
        let d = DensitySpec::gaussian(mu, sd * sd).unwrap();
        let pq = d.population_quantiles(&levels);
        assert!((pq[0] - z[0]).abs() < 1e-12 && (pq[1] - z[1]).abs() < 1e-12);
        let j = map.features(&pq).unwrap();
        let t: f64 = j.iter().zip(&beta_star).map(|(a, b)| a * b).sum();
        feats.push(j);
        targets.push(ParameterVector::scalar(t).unwrap());
    }
    let fit = fit_linear(&feats, &targets, Ridge::None).unwrap();
    for (got, want) in fit.beta.as_slice().iter().zip(&beta_star) {
        assert!((got - want).abs() <= 1e-8, "{got} vs {want}");
    }
}

#[test]
fn median_clt_variance_of_standard_normal() {
    let d = DensitySpec::gaussian(0.0, 1.0).unwrap();
    let r = quantile_clt_check(&d, 0.5, 2000, 1000, SeedSpec::new(3, 0)).unwrap();
    assert!((r.theoretical_var - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    assert!((r.ratio - 1.0).abs() < 0.15, "{}", r.ratio);
}

#[test]
fn quantiles_stay_within_three_standard_errors() {
    let d = DensitySpec::gaussian(5.0, 5.0).unwrap();
    let r = quantile_consistency_check(&d, &QuantileLevels::new(5).unwrap(), 4000, 30, SeedSpec::new(4, 0)).unwrap();
    assert!(r.pass_rate >= 0.9, "{}", r.pass_rate);
}

/// Small perturbations of the features move a polynomial prediction by
/// at most the local gradient bound times the step.
#[test]
fn trained_prediction_is_locally_lipschitz() {
    let config = TsConfig {
        prior: PriorSpec::uniform(2.0, 10.0).unwrap(),
        model: ModelSpec::Snr(SnrModelSpec::new(5.0, 500).unwrap()),
        compressor: Compressor::quantiles(5).unwrap(),
        second_stage: SecondStageSpec::Poly {
            degree: 2,
            ridge: Ridge::Auto,
        },
        m: 500,
        seed: SeedSpec::new(2, 0),
    };
    let est = train(&config).unwrap();
    let SecondStage::Linear(stage) = &est.stage else {
        panic!("linear stage expected")
    };
    let z0 = DensitySpec::snr(5.0, 5.0)
        .unwrap()
        .population_quantiles(&QuantileLevels::new(5).unwrap());
    let g = stage.prediction_jacobian(&z0).unwrap();
    let bound: f64 = g.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut rng = SeedSpec::new(9, 0).rng();
    for _ in 0..20 {
        let dz: Vec<f64> = (0..5).map(|_| rng.random_range(-1e-6..1e-6)).collect();
        let z1: Vec<f64> = z0.iter().zip(&dz).map(|(a, b)| a + b).collect();
        let step = dz.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff = (predict(&est.stage, &z1).unwrap().first() - predict(&est.stage, &z0).unwrap().first()).abs();
        assert!(diff <= 1.01 * bound * step + 1e-12, "{diff} vs {}", bound * step);
    }
}
