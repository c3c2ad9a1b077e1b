//! Selector interface and every selection strategy.

mod baselines;
mod gmeans;
mod survival;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::censoring::{apply_imputation, build_survival_dataset_with, ForestRegressorFactory, ImputationStrategy};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::features::FeatureImputer;
use crate::forest::ForestParams;
use crate::loss::LossSpec;
use crate::rng::derive_seed;
use crate::scenario::{Scenario, View};
use crate::survival::SurvivalConversion;
use crate::tuning::TuneBudget;

pub use baselines::{IsacSelector, MultiClassSelector, PerAlgorithmRegressor, SatzillaSelector, SbsSelector, SunnySelector};
pub use gmeans::{anderson_darling, gmeans, kmeans};
pub use survival::SurvivalSelector;

/// A fitted per-instance algorithm selector.
pub trait Selector: Send + Sync {
    fn n_algorithms(&self) -> usize;

    /// Per-algorithm scores for a raw feature vector (missing values allowed);
    /// lower is better.
    fn scores(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// `argmin` of [`Selector::scores`], lowest index on ties.
    fn select(&self, x: &[f64]) -> Result<usize> {
        Ok(crate::argmin(&self.scores(x)?))
    }

    /// Whether choosing an algorithm requires computing instance features.
    fn uses_features(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectorKind {
    /// Survival forests, minimum expected runtime.
    RsfExp,
    /// Survival forests, minimum expected PAR10.
    RsfPar10,
    /// Survival forests with a tuned polynomial or capped-log surrogate.
    RsfPolyLog,
    /// Survival forests with a fixed loss.
    RsfLoss { loss: LossSpec },
    PerAlgorithmRegressor,
    MultiClass,
    Sunny { k: usize },
    Isac { max_clusters: usize },
    Satzilla11,
    Sbs,
    /// Per-instance best algorithm read from the test labels; evaluation only.
    Oracle,
}

impl SelectorKind {
    /// Censoring treatment used when none is configured.
    pub fn default_imputation(&self) -> ImputationStrategy {
        match self {
            SelectorKind::Isac { .. } => ImputationStrategy::Par10,
            _ => ImputationStrategy::CutoffRuntime,
        }
    }

    /// Whether the selector trains on imputed regression labels.
    pub fn uses_imputation(&self) -> bool {
        matches!(
            self,
            SelectorKind::PerAlgorithmRegressor
                | SelectorKind::MultiClass
                | SelectorKind::Sunny { .. }
                | SelectorKind::Isac { .. }
                | SelectorKind::Satzilla11
        )
    }
}

pub const DEFAULT_SUNNY_K: usize = 16;
pub const DEFAULT_ISAC_MAX_CLUSTERS: usize = 30;

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectorKind::RsfExp => write!(f, "rsf_exp"),
            SelectorKind::RsfPar10 => write!(f, "rsf_par10"),
            SelectorKind::RsfPolyLog => write!(f, "rsf_polylog"),
            SelectorKind::RsfLoss { loss } => write!(f, "rsf_loss[{loss}]"),
            SelectorKind::PerAlgorithmRegressor => write!(f, "per_algorithm_regressor"),
            SelectorKind::MultiClass => write!(f, "multiclass"),
            SelectorKind::Sunny { k } => write!(f, "sunny[k={k}]"),
            SelectorKind::Isac { max_clusters } => write!(f, "isac[max_clusters={max_clusters}]"),
            SelectorKind::Satzilla11 => write!(f, "satzilla11"),
            SelectorKind::Sbs => write!(f, "sbs"),
            SelectorKind::Oracle => write!(f, "oracle"),
        }
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    /// Accepts the [`Display`](fmt::Display) forms plus the shorthand
    /// `sunny:k=8`, `isac:max_clusters=5` and `rsf_loss:poly:alpha=3`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match (s.find('['), s.find(':')) {
            (Some(b), _) if s.ends_with(']') => (&s[..b], &s[b + 1..s.len() - 1]),
            (_, Some(c)) => (&s[..c], &s[c + 1..]),
            _ => (s, ""),
        };
        let int_param = |key: &str, default: usize| -> Result<usize> {
            if arg.is_empty() {
                return Ok(default);
            }
            let (k, v) = arg
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("malformed selector parameter `{arg}`")))?;
            if k.trim() != key {
                return invalid(format!("unknown selector parameter `{k}`"));
            }
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("`{key}` must be a positive integer")))
        };
        let kind = match name.to_ascii_lowercase().as_str() {
            "rsf_exp" => SelectorKind::RsfExp,
            "rsf_par10" => SelectorKind::RsfPar10,
            "rsf_polylog" => SelectorKind::RsfPolyLog,
            "rsf_loss" => SelectorKind::RsfLoss { loss: arg.parse()? },
            "per_algorithm_regressor" | "regressor" => SelectorKind::PerAlgorithmRegressor,
            "multiclass" | "multi_class" => SelectorKind::MultiClass,
            "sunny" => SelectorKind::Sunny { k: int_param("k", DEFAULT_SUNNY_K)? },
            "isac" => SelectorKind::Isac {
                max_clusters: int_param("max_clusters", DEFAULT_ISAC_MAX_CLUSTERS)?,
            },
            "satzilla11" | "satzilla" => SelectorKind::Satzilla11,
            "sbs" => SelectorKind::Sbs,
            "oracle" | "vbs" => SelectorKind::Oracle,
            other => return invalid(format!("unknown selector `{other}`")),
        };
        match kind {
            SelectorKind::Sunny { k: 0 } => invalid("sunny needs k ≥ 1"),
            SelectorKind::Isac { max_clusters: 0 } => invalid("isac needs max_clusters ≥ 1"),
            k => Ok(k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub kind: SelectorKind,
    /// Censoring treatment for baselines; `None` picks the kind's default.
    pub imputation: Option<ImputationStrategy>,
    pub forest: ForestParams,
    pub conversion: SurvivalConversion,
    pub tuning: TuneBudget,
}

impl SelectorConfig {
    pub fn new(kind: SelectorKind) -> Self {
        SelectorConfig {
            kind,
            imputation: None,
            forest: ForestParams::default(),
            conversion: SurvivalConversion::default(),
            tuning: TuneBudget::default(),
        }
    }

    pub fn with_imputation(mut self, imputation: ImputationStrategy) -> Self {
        self.imputation = Some(imputation);
        self
    }

    pub fn with_forest(mut self, forest: ForestParams) -> Self {
        self.forest = forest;
        self
    }

    pub fn imputation(&self) -> ImputationStrategy {
        self.imputation.unwrap_or_else(|| self.kind.default_imputation())
    }

    /// Label used in reports, e.g. `per_algorithm_regressor/runtime`.
    pub fn label(&self) -> String {
        if self.kind.uses_imputation() {
            format!("{}/{}", self.kind, self.imputation().name())
        } else {
            self.kind.to_string()
        }
    }
}

/// Fits the configured selector on a training view.
pub fn fit_selector(config: &SelectorConfig, view: View<'_>, seed: u64) -> Result<Box<dyn Selector>> {
    if view.is_empty() {
        return invalid("empty training view");
    }
    config.forest.validate()?;
    config.imputation().validate()?;
    let forest = config.forest.with_seed(derive_seed(seed, 0xF0));
    Ok(match &config.kind {
        SelectorKind::RsfExp => Box::new(SurvivalSelector::fit(view, LossSpec::Identity, &forest, config.conversion)?),
        SelectorKind::RsfPar10 => Box::new(SurvivalSelector::fit(view, LossSpec::Par10, &forest, config.conversion)?),
        SelectorKind::RsfLoss { loss } => {
            loss.validate()?;
            Box::new(SurvivalSelector::fit(view, *loss, &forest, config.conversion)?)
        }
        SelectorKind::RsfPolyLog => {
            let budget = TuneBudget {
                seed: derive_seed(seed, 0x70),
                ..config.tuning.clone()
            };
            let tuned = crate::tuning::tune_surrogate(view, &budget, &forest, config.conversion)?;
            Box::new(SurvivalSelector::fit(view, tuned.best, &forest, config.conversion)?)
        }
        SelectorKind::PerAlgorithmRegressor => Box::new(PerAlgorithmRegressor::fit(view, config.imputation(), &forest)?),
        SelectorKind::MultiClass => Box::new(MultiClassSelector::fit(view, config.imputation(), &forest)?),
        SelectorKind::Sunny { k } => Box::new(SunnySelector::fit(view, config.imputation(), &forest, *k)?),
        SelectorKind::Isac { max_clusters } => {
            Box::new(IsacSelector::fit(view, config.imputation(), &forest, *max_clusters, seed)?)
        }
        SelectorKind::Satzilla11 => Box::new(SatzillaSelector::fit(view, config.imputation(), &forest)?),
        SelectorKind::Sbs => Box::new(SbsSelector::fit(view)),
        SelectorKind::Oracle => return invalid("the oracle selector reads test labels and cannot be fitted"),
    })
}

/// Per-instance best algorithm by recorded PAR10, lowest index on ties.
pub fn vbs_choice(s: &Scenario, instance: usize) -> usize {
    let par10: Vec<f64> = (0..s.n_algorithms()).map(|a| s.par10(instance, a)).collect();
    crate::argmin(&par10)
}

/// Training features (median-imputed) and imputed labels for every
/// algorithm. `labels[k][a]` is `NaN` where the strategy dropped the run.
pub(crate) struct LabelMatrix {
    pub imputer: FeatureImputer,
    pub x: Vec<Vec<f64>>,
    pub labels: Vec<Vec<f64>>,
}

pub(crate) fn label_matrix(
    view: View<'_>,
    strategy: ImputationStrategy,
    forest: &ForestParams,
) -> Result<LabelMatrix> {
    let s = view.scenario;
    let imputer = FeatureImputer::fit(&view.raw_features())?;
    let x = imputer.transform_all(&view.raw_features())?;
    let factory = ForestRegressorFactory(forest.clone());
    let per_alg = exec::map_range(s.n_algorithms(), |a| -> Result<Vec<f64>> {
        let d = build_survival_dataset_with(s, a, view.instances, &imputer)?;
        let mut col = vec![f64::NAN; view.len()];
        match apply_imputation(&d, strategy, &factory, derive_seed(forest.seed, a as u64)) {
            Ok(data) => {
                for (k, &src) in data.source.iter().enumerate() {
                    col[src] = data.y[k];
                }
            }
            // no uncensored run to anchor the regression; fall back to the cutoff
            Err(Error::DegenerateData(_)) => {
                for (k, smp) in d.samples.iter().enumerate() {
                    col[k] = smp.y;
                }
            }
            Err(e) => return Err(e),
        }
        Ok(col)
    });
    let cols = per_alg.into_iter().collect::<Result<Vec<_>>>()?;
    let labels = (0..view.len()).map(|k| cols.iter().map(|c| c[k]).collect()).collect();
    Ok(LabelMatrix { imputer, x, labels })
}
