//! Per-algorithm survival datasets and treatments of censored runs for
//! regression-based selectors.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};
use crate::features::FeatureImputer;
use crate::forest::{fit_forest, Forest, ForestParams, RegLeaf, Variance};
use crate::rng::derive_seed;
use crate::scenario::Scenario;
use crate::survival::TimedEvent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSample {
    pub x: Vec<f64>,
    /// Observed runtime in seconds, in (0, C].
    pub y: f64,
    /// `true` when the run was cut off at C.
    pub censored: bool,
}

impl TimedEvent for SurvivalSample {
    fn time(&self) -> f64 {
        self.y
    }
    fn is_event(&self) -> bool {
        !self.censored
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    pub samples: Vec<SurvivalSample>,
    pub cutoff: f64,
}

impl SurvivalDataset {
    pub fn new(samples: Vec<SurvivalSample>, cutoff: f64) -> Result<Self> {
        let Some(first) = samples.first() else {
            return invalid("survival dataset must not be empty");
        };
        let d = first.x.len();
        if samples.iter().any(|s| s.x.len() != d) {
            return invalid("survival samples differ in feature dimension");
        }
        if samples.iter().any(|s| s.censored && s.y != cutoff) {
            return invalid("censored samples must be observed at the cutoff");
        }
        Ok(SurvivalDataset { samples, cutoff })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_uncensored(&self) -> usize {
        self.samples.iter().filter(|s| !s.censored).count()
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.x.clone()).collect()
    }
}

/// Survival data of algorithm `algorithm` on `train` with missing features
/// filled by `imputer`.
pub fn build_survival_dataset_with(
    s: &Scenario,
    algorithm: usize,
    train: &[usize],
    imputer: &FeatureImputer,
) -> Result<SurvivalDataset> {
    if algorithm >= s.n_algorithms() {
        return invalid(format!("algorithm index {algorithm} out of range"));
    }
    if train.is_empty() {
        return invalid("empty training set");
    }
    let samples = train
        .iter()
        .map(|&i| {
            Ok(SurvivalSample {
                x: imputer.transform(&s.features[i])?,
                y: s.runtimes[i][algorithm],
                censored: s.censored[i][algorithm],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SurvivalDataset::new(samples, s.cutoff)
}

/// As [`build_survival_dataset_with`], fitting the median imputer on `train`.
pub fn build_survival_dataset(s: &Scenario, algorithm: usize, train: &[usize]) -> Result<SurvivalDataset> {
    if train.is_empty() {
        return invalid("empty training set");
    }
    let rows: Vec<&[f64]> = train.iter().map(|&i| s.features[i].as_slice()).collect();
    build_survival_dataset_with(s, algorithm, train, &FeatureImputer::fit(&rows)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImputationStrategy {
    /// Drop censored samples.
    Ignore,
    /// Label censored samples with C.
    CutoffRuntime,
    /// Label censored samples with 10·C.
    Par10,
    /// Iterated truncated-normal imputation above C.
    SchmeeHahn { max_iter: usize, rel_tol: f64 },
}

impl ImputationStrategy {
    pub const DEFAULT_SCHMEE_HAHN: ImputationStrategy = ImputationStrategy::SchmeeHahn {
        max_iter: 10,
        rel_tol: 1e-3,
    };

    pub fn validate(&self) -> Result<()> {
        match *self {
            ImputationStrategy::SchmeeHahn { max_iter, rel_tol } if max_iter == 0 || !(rel_tol > 0.0) => {
                invalid("Schmee–Hahn needs max_iter ≥ 1 and rel_tol > 0")
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ImputationStrategy::Ignore => "ignore",
            ImputationStrategy::CutoffRuntime => "runtime",
            ImputationStrategy::Par10 => "par10",
            ImputationStrategy::SchmeeHahn { .. } => "schmee_hahn",
        }
    }
}

impl std::str::FromStr for ImputationStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ignore" | "ignored" => Ok(ImputationStrategy::Ignore),
            "runtime" | "cutoff" | "cutoff_runtime" => Ok(ImputationStrategy::CutoffRuntime),
            "par10" => Ok(ImputationStrategy::Par10),
            "schmee_hahn" | "sh" => Ok(Self::DEFAULT_SCHMEE_HAHN),
            other => invalid(format!("unknown imputation strategy `{other}`")),
        }
    }
}

/// Labelled regression data; `source[k]` is the dataset position of row `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub source: Vec<usize>,
}

/// A regressor that reports a predictive mean and variance per point.
pub trait PredictiveRegressor {
    fn predict_mean_var(&self, x: &[f64]) -> Result<(f64, f64)>;
}

impl PredictiveRegressor for Forest<RegLeaf> {
    fn predict_mean_var(&self, x: &[f64]) -> Result<(f64, f64)> {
        Forest::predict_mean_var(self, x)
    }
}

pub trait RegressorFactory: Sync {
    type Model: PredictiveRegressor;
    fn fit(&self, x: &[Vec<f64>], y: &[f64], seed: u64) -> Result<Self::Model>;
}

/// Regression forests; predictive variance is the variance of tree outputs.
#[derive(Debug, Clone)]
pub struct ForestRegressorFactory(pub ForestParams);

impl RegressorFactory for ForestRegressorFactory {
    type Model = Forest<RegLeaf>;

    fn fit(&self, x: &[Vec<f64>], y: &[f64], seed: u64) -> Result<Forest<RegLeaf>> {
        fit_forest(x, &Variance::new(y), None, &self.0.with_seed(seed))
    }
}

pub fn apply_imputation<F: RegressorFactory>(
    d: &SurvivalDataset,
    strategy: ImputationStrategy,
    factory: &F,
    seed: u64,
) -> Result<RegressionData> {
    strategy.validate()?;
    let c = d.cutoff;
    let relabel = |censored_label: f64| RegressionData {
        x: d.features(),
        y: d.samples.iter().map(|s| if s.censored { censored_label } else { s.y }).collect(),
        source: (0..d.len()).collect(),
    };
    match strategy {
        ImputationStrategy::Ignore => {
            let keep: Vec<usize> = (0..d.len()).filter(|&k| !d.samples[k].censored).collect();
            Ok(RegressionData {
                x: keep.iter().map(|&k| d.samples[k].x.clone()).collect(),
                y: keep.iter().map(|&k| d.samples[k].y).collect(),
                source: keep,
            })
        }
        ImputationStrategy::CutoffRuntime => Ok(relabel(c)),
        ImputationStrategy::Par10 => Ok(relabel(10.0 * c)),
        ImputationStrategy::SchmeeHahn { max_iter, rel_tol } => {
            Ok(schmee_hahn(d, factory, max_iter, rel_tol, seed)?.data)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchmeeHahnOutcome {
    pub data: RegressionData,
    pub iterations: usize,
    pub converged: bool,
}

/// Iteratively replaces censored labels by the mean of the model's predictive
/// normal truncated below at C. Censored labels start at C; every round
/// refits on all points.
pub fn schmee_hahn<F: RegressorFactory>(
    d: &SurvivalDataset,
    factory: &F,
    max_iter: usize,
    rel_tol: f64,
    seed: u64,
) -> Result<SchmeeHahnOutcome> {
    if max_iter == 0 || !(rel_tol > 0.0) {
        return invalid("Schmee–Hahn needs max_iter ≥ 1 and rel_tol > 0");
    }
    if d.n_uncensored() == 0 {
        return Err(Error::DegenerateData("Schmee–Hahn needs at least one uncensored sample".into()));
    }
    let c = d.cutoff;
    let x = d.features();
    let mut y: Vec<f64> = d.samples.iter().map(|s| s.y).collect();
    let censored: Vec<usize> = (0..d.len()).filter(|&k| d.samples[k].censored).collect();

    let mut iterations = 0;
    let mut converged = censored.is_empty();
    while !converged && iterations < max_iter {
        let model = factory.fit(&x, &y, derive_seed(seed, iterations as u64))?;
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for &k in &censored {
            let (mu, var) = model.predict_mean_var(&x[k])?;
            let sigma = var.max(0.0).sqrt();
            let label = if sigma > 0.0 { truncated_normal_mean(mu, sigma, c)? } else { mu.max(c) };
            max_change = max_change.max((label - y[k]).abs() / y[k]);
            y[k] = label;
        }
        converged = max_change < rel_tol;
    }
    Ok(SchmeeHahnOutcome {
        data: RegressionData {
            x,
            y,
            source: (0..d.len()).collect(),
        },
        iterations,
        converged,
    })
}

/// Hazard of the standard normal, `φ(a) / (1 − Φ(a))`.
fn normal_hazard(a: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return 0.0;
    }
    if a > 8.0 {
        // Laplace continued fraction for the Mills ratio (1 − Φ)/φ
        let mut frac = a;
        for k in (1..=40).rev() {
            frac = a + f64::from(k) / frac;
        }
        return frac;
    }
    let phi = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let tail = 0.5 * erfc(a / std::f64::consts::SQRT_2);
    phi / tail
}

/// Mean of `N(mu, sigma²)` truncated below at `lower`.
pub fn truncated_normal_mean(mu: f64, sigma: f64, lower: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return invalid(format!("sigma must be positive, got {sigma}"));
    }
    let a = (lower - mu) / sigma;
    let m = mu + sigma * normal_hazard(a);
    Ok(if lower.is_finite() { m.max(lower) } else { m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::tiny;
    use approx::assert_relative_eq;

    /// Trapezoid rule on [lower, lower + 40σ] as an independent oracle.
    fn truncated_mean_by_quadrature(mu: f64, sigma: f64, lower: f64) -> f64 {
        let pdf = |x: f64| (-0.5 * ((x - mu) / sigma).powi(2)).exp();
        let n = 400_000;
        let h = 40.0 * sigma / n as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..=n {
            let x = lower + k as f64 * h;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            num += w * x * pdf(x);
            den += w * pdf(x);
        }
        num / den
    }

    #[test]
    fn truncated_mean_against_quadrature() {
        let v = truncated_normal_mean(0.0, 1.0, 0.0).unwrap();
        assert!((v - 0.7979).abs() < 1e-4);
        assert_relative_eq!(v, (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-12);
        for &(mu, sigma, lower) in &[(5.0, 2.0, 9.0), (1.0, 0.5, 0.0), (-3.0, 2.0, 1.0), (0.0, 1.0, 6.0), (10.0, 3.0, 4.0)] {
            let exact = truncated_normal_mean(mu, sigma, lower).unwrap();
            let oracle = truncated_mean_by_quadrature(mu, sigma, lower);
            assert_relative_eq!(exact, oracle, max_relative = 1e-6);
            assert!(exact >= lower);
        }
    }

    #[test]
    fn truncated_mean_tails() {
        assert_eq!(truncated_normal_mean(3.0, 1.0, f64::NEG_INFINITY).unwrap(), 3.0);
        assert_relative_eq!(truncated_normal_mean(3.0, 1.0, -50.0).unwrap(), 3.0, epsilon = 1e-12);
        // continuity across the switch to the continued fraction
        let below = truncated_normal_mean(0.0, 1.0, 8.0 - 1e-9).unwrap();
        let above = truncated_normal_mean(0.0, 1.0, 8.0 + 1e-9).unwrap();
        assert!((below - above).abs() < 1e-7, "{below} vs {above}");
        let far = truncated_normal_mean(0.0, 1.0, 40.0).unwrap();
        assert!(far > 40.0 && far < 40.1);
        assert!(truncated_normal_mean(0.0, 0.0, 1.0).is_err());
        assert!(truncated_normal_mean(0.0, -1.0, 1.0).is_err());
    }

    fn two_sample() -> SurvivalDataset {
        SurvivalDataset::new(
            vec![
                SurvivalSample { x: vec![1.0], y: 5.0, censored: false },
                SurvivalSample { x: vec![2.0], y: 100.0, censored: true },
            ],
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn simple_imputations() {
        let d = two_sample();
        let f = ForestRegressorFactory(ForestParams { n_trees: 5, ..Default::default() });
        assert_eq!(apply_imputation(&d, ImputationStrategy::CutoffRuntime, &f, 0).unwrap().y, vec![5.0, 100.0]);
        assert_eq!(apply_imputation(&d, ImputationStrategy::Par10, &f, 0).unwrap().y, vec![5.0, 1000.0]);
        let ign = apply_imputation(&d, ImputationStrategy::Ignore, &f, 0).unwrap();
        assert_eq!((ign.x, ign.y, ign.source), (vec![vec![1.0]], vec![5.0], vec![0]));
    }

    #[test]
    fn schmee_hahn_bounds_and_errors() {
        let d = two_sample();
        let f = ForestRegressorFactory(ForestParams { n_trees: 10, ..Default::default() });
        let out = schmee_hahn(&d, &f, 10, 1e-3, 1).unwrap();
        assert_eq!(out.data.y[0], 5.0);
        assert!(out.data.y[1] >= 100.0);
        assert!(out.iterations >= 1 && out.iterations <= 10);

        let all_cens = SurvivalDataset::new(vec![SurvivalSample { x: vec![1.0], y: 10.0, censored: true }], 10.0).unwrap();
        assert!(matches!(schmee_hahn(&all_cens, &f, 10, 1e-3, 0), Err(Error::DegenerateData(_))));
        assert!(apply_imputation(&d, ImputationStrategy::SchmeeHahn { max_iter: 0, rel_tol: 1e-3 }, &f, 0).is_err());
    }

    /// σ = 0 falls back to max(μ, C).
    #[test]
    fn schmee_hahn_zero_variance_floor() {
        struct Fixed;
        struct FixedModel;
        impl PredictiveRegressor for FixedModel {
            fn predict_mean_var(&self, _: &[f64]) -> Result<(f64, f64)> {
                Ok((100.0, 0.0))
            }
        }
        impl RegressorFactory for Fixed {
            type Model = FixedModel;
            fn fit(&self, _: &[Vec<f64>], _: &[f64], _: u64) -> Result<FixedModel> {
                Ok(FixedModel)
            }
        }
        let out = schmee_hahn(&two_sample(), &Fixed, 5, 1e-3, 0).unwrap();
        assert_eq!(out.data.y[1], 100.0);
        assert!(out.converged);
    }

    #[test]
    fn dataset_from_scenario() {
        let mut s = tiny(vec![vec![12.5, 100.0], vec![100.0, 3.0]], 100.0);
        s.features[1][0] = f64::NAN;
        let d = build_survival_dataset(&s, 0, &[0, 1]).unwrap();
        assert_eq!(d.samples[0], SurvivalSample { x: vec![0.0], y: 12.5, censored: false });
        assert_eq!(d.samples[1], SurvivalSample { x: vec![0.0], y: 100.0, censored: true });
        assert!(build_survival_dataset(&s, 0, &[]).is_err());
        assert!(build_survival_dataset(&s, 5, &[0]).is_err());
    }

    #[test]
    fn parses_strategies() {
        assert_eq!("ignore".parse::<ImputationStrategy>().unwrap(), ImputationStrategy::Ignore);
        assert_eq!("runtime".parse::<ImputationStrategy>().unwrap(), ImputationStrategy::CutoffRuntime);
        assert_eq!("par10".parse::<ImputationStrategy>().unwrap(), ImputationStrategy::Par10);
        assert!(matches!("schmee_hahn".parse::<ImputationStrategy>().unwrap(), ImputationStrategy::SchmeeHahn { max_iter: 10, .. }));
        assert!("median".parse::<ImputationStrategy>().is_err());
    }
}
