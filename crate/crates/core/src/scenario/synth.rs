//! Synthetic scenarios with known ground-truth runtime distributions.

use rand::Rng as _;
use rand_distr::{Distribution, Exp, LogNormal, StandardNormal, Weibull};
use serde::{Deserialize, Serialize};

use super::{censor_run, Scenario};
use crate::error::{invalid, Result};
use crate::rng::{rng_from, Rng};

/// Ground-truth runtime law of one algorithm, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuntimeDistribution {
    Deterministic { value: f64 },
    /// `fast` with probability `p_fast`, otherwise `slow`.
    TwoPoint { fast: f64, p_fast: f64, slow: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Weibull { shape: f64, scale: f64 },
    Exponential { rate: f64 },
}

impl RuntimeDistribution {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            RuntimeDistribution::Deterministic { value } => value > 0.0,
            RuntimeDistribution::TwoPoint { fast, p_fast, slow } => {
                fast > 0.0 && slow > 0.0 && (0.0..=1.0).contains(&p_fast)
            }
            RuntimeDistribution::LogNormal { mu, sigma } => mu.is_finite() && sigma > 0.0,
            RuntimeDistribution::Weibull { shape, scale } => shape > 0.0 && scale > 0.0,
            RuntimeDistribution::Exponential { rate } => rate > 0.0,
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("invalid runtime distribution parameters: {self:?}"))
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            RuntimeDistribution::Deterministic { value } => value,
            RuntimeDistribution::TwoPoint { fast, p_fast, slow } => {
                if rng.random::<f64>() < p_fast {
                    fast
                } else {
                    slow
                }
            }
            RuntimeDistribution::LogNormal { mu, sigma } => LogNormal::new(mu, sigma).expect("validated").sample(rng),
            RuntimeDistribution::Weibull { shape, scale } => Weibull::new(scale, shape).expect("validated").sample(rng),
            RuntimeDistribution::Exponential { rate } => Exp::new(rate).expect("validated").sample(rng),
        }
    }

    /// P(T > t).
    pub fn survival(&self, t: f64) -> f64 {
        match *self {
            RuntimeDistribution::Deterministic { value } => f64::from(u8::from(t < value)),
            RuntimeDistribution::TwoPoint { fast, p_fast, slow } => {
                let (lo, hi, p_lo) = if fast <= slow { (fast, slow, p_fast) } else { (slow, fast, 1.0 - p_fast) };
                if t < lo {
                    1.0
                } else if t < hi {
                    1.0 - p_lo
                } else {
                    0.0
                }
            }
            RuntimeDistribution::LogNormal { mu, sigma } => {
                if t <= 0.0 {
                    1.0
                } else {
                    0.5 * statrs::function::erf::erfc((t.ln() - mu) / (sigma * std::f64::consts::SQRT_2))
                }
            }
            RuntimeDistribution::Weibull { shape, scale } => (-(t.max(0.0) / scale).powf(shape)).exp(),
            RuntimeDistribution::Exponential { rate } => (-rate * t.max(0.0)).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAlgorithm {
    pub name: String,
    pub distribution: RuntimeDistribution,
    /// Log-scale runtime multiplier per latent feature; used only with
    /// [`FeatureModel::Linked`]. A runtime is scaled by `exp(effects · z)`.
    #[serde(default)]
    pub effects: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureModel {
    /// One constant feature plus one standard-normal feature, both
    /// unrelated to runtimes.
    Noise,
    /// `dim` standard-normal features that shift runtimes via each
    /// algorithm's `effects`.
    Linked { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub algorithms: Vec<SyntheticAlgorithm>,
    pub n_instances: usize,
    #[serde(default = "default_features")]
    pub features: FeatureModel,
    pub cutoff: f64,
    #[serde(default)]
    pub feature_cost: f64,
    pub seed: u64,
}

fn default_name() -> String {
    "synthetic".into()
}

fn default_features() -> FeatureModel {
    FeatureModel::Noise
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return invalid("synthetic spec needs at least one algorithm");
        }
        if self.n_instances == 0 {
            return invalid("synthetic spec needs at least one instance");
        }
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return invalid("cutoff must be positive");
        }
        if !(self.feature_cost >= 0.0) {
            return invalid("feature_cost must be nonnegative");
        }
        for alg in &self.algorithms {
            alg.distribution.validate()?;
            if let FeatureModel::Linked { dim } = self.features {
                if dim == 0 {
                    return invalid("linked feature model needs dim ≥ 1");
                }
                if !alg.effects.is_empty() && alg.effects.len() != dim {
                    return invalid(format!("algorithm {} has {} effects, expected {dim}", alg.name, alg.effects.len()));
                }
            }
        }
        Ok(())
    }
}

/// A generated scenario together with the laws it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    pub scenario: Scenario,
    pub truths: Vec<RuntimeDistribution>,
    /// Runtime scale multiplier per (instance, algorithm).
    pub multipliers: Vec<Vec<f64>>,
}

impl SyntheticScenario {
    /// Ground-truth P(T > t) for one cell.
    pub fn true_survival(&self, instance: usize, algorithm: usize, t: f64) -> f64 {
        self.truths[algorithm].survival(t / self.multipliers[instance][algorithm])
    }
}

impl SyntheticSpec {
    /// Two algorithms with noise features: `A1` always takes `0.9·C`; `A3`
    /// takes `0.1·C` with probability 0.85 and otherwise never finishes.
    pub fn two_point(n_instances: usize, cutoff: f64, seed: u64) -> Self {
        let alg = |name: &str, distribution| SyntheticAlgorithm {
            name: name.into(),
            distribution,
            effects: vec![],
        };
        SyntheticSpec {
            name: "two_point".into(),
            algorithms: vec![
                alg("A1", RuntimeDistribution::Deterministic { value: 0.9 * cutoff }),
                alg(
                    "A3",
                    RuntimeDistribution::TwoPoint {
                        fast: 0.1 * cutoff,
                        p_fast: 0.85,
                        slow: 10.0 * cutoff,
                    },
                ),
            ],
            n_instances,
            features: FeatureModel::Noise,
            cutoff,
            feature_cost: 0.0,
            seed,
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticScenario> {
    spec.validate()?;
    let mut rng = rng_from(spec.seed);
    let n = spec.n_instances;
    let m = spec.algorithms.len();
    let feature_names: Vec<String> = match spec.features {
        FeatureModel::Noise => vec!["constant".into(), "noise".into()],
        FeatureModel::Linked { dim } => (1..=dim).map(|k| format!("z{k}")).collect(),
    };
    let width = n.to_string().len().max(4);

    let mut features = Vec::with_capacity(n);
    let mut runtimes = Vec::with_capacity(n);
    let mut censored = Vec::with_capacity(n);
    let mut multipliers = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = match spec.features {
            FeatureModel::Noise => vec![1.0, rng.sample(StandardNormal)],
            FeatureModel::Linked { dim } => (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
        };
        let mut row_y = Vec::with_capacity(m);
        let mut row_c = Vec::with_capacity(m);
        let mut row_m = Vec::with_capacity(m);
        for alg in &spec.algorithms {
            let mult = match spec.features {
                FeatureModel::Linked { .. } if !alg.effects.is_empty() => {
                    alg.effects.iter().zip(&x).map(|(w, z)| w * z).sum::<f64>().exp()
                }
                _ => 1.0,
            };
            let t = mult * alg.distribution.sample(&mut rng);
            let (y, c) = censor_run(Some(t), true, spec.cutoff);
            row_y.push(y);
            row_c.push(c);
            row_m.push(mult);
        }
        features.push(x);
        runtimes.push(row_y);
        censored.push(row_c);
        multipliers.push(row_m);
    }

    let scenario = Scenario {
        name: spec.name.clone(),
        algorithms: spec.algorithms.iter().map(|a| a.name.clone()).collect(),
        instances: (0..n).map(|i| format!("inst_{:0width$}", i + 1)).collect(),
        feature_names,
        features,
        feature_costs: vec![spec.feature_cost; n],
        runtimes,
        censored,
        cutoff: spec.cutoff,
        folds: None,
    };
    scenario.validate()?;
    Ok(SyntheticScenario {
        scenario,
        truths: spec.algorithms.iter().map(|a| a.distribution.clone()).collect(),
        multipliers,
    })
}
