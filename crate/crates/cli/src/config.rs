//! Flat TOML run configuration with environment overrides.
//!
//! Every key is optional in the file; `SURVSEL_CFG_<KEY>` environment
//! variables override file values (the value is read as a TOML literal and
//! falls back to a plain string).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use survsel::censoring::ImputationStrategy;
use survsel::forest::{ForestParams, MaxFeatures};
use survsel::selectors::{SelectorConfig, SelectorKind};
use survsel::survival::SurvivalConversion;
use survsel::tuning::TuneBudget;

pub const ENV_PREFIX: &str = "SURVSEL_CFG_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Scenario directories (ASlib layout or CSV trio).
    pub scenarios: Vec<PathBuf>,
    /// Selector for `evaluate`; `sweep` uses `selectors`.
    pub selector: String,
    pub selectors: Vec<String>,
    /// Censoring treatment for baselines; empty picks each selector's default.
    pub imputation: String,
    pub folds: usize,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub n_trees: usize,
    /// `sqrt`, `all`, an integer count or a fraction in (0, 1].
    pub max_features: String,
    pub min_samples_leaf: usize,
    pub min_uncensored_leaf: usize,
    /// 0 means unlimited.
    pub max_depth: usize,
    pub bootstrap: bool,
    /// `product_limit` or `exponential`.
    pub conversion: String,
    pub tune_evaluations: usize,
    pub tune_validation_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let forest = ForestParams::default();
        let tune = TuneBudget::default();
        RunConfig {
            scenarios: Vec::new(),
            selector: "rsf_par10".into(),
            selectors: Vec::new(),
            imputation: String::new(),
            folds: 10,
            seed: None,
            out: None,
            n_trees: forest.n_trees,
            max_features: "sqrt".into(),
            min_samples_leaf: forest.min_samples_leaf,
            min_uncensored_leaf: forest.min_uncensored_leaf,
            max_depth: 0,
            bootstrap: forest.bootstrap,
            conversion: "product_limit".into(),
            tune_evaluations: tune.n_evaluations,
            tune_validation_fraction: tune.inner_validation_fraction,
        }
    }
}

fn env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    /// Reads `path` (if any), applies overrides from `env`, and checks the
    /// schema. Unknown keys are rejected with their name.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str::<toml::Table>(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for (k, v) in env {
            if let Some(key) = k.strip_prefix(ENV_PREFIX) {
                table.insert(key.to_ascii_lowercase(), env_value(&v));
            }
        }
        let origin = path.map_or_else(|| "environment".to_string(), |p| p.display().to_string());
        let mut cfg: RunConfig = table.try_into().with_context(|| format!("invalid configuration in {origin}"))?;
        // relative scenario paths are taken relative to the config file
        if let Some(dir) = path.and_then(Path::parent) {
            for s in &mut cfg.scenarios {
                if s.is_relative() {
                    *s = dir.join(&*s);
                }
            }
        }
        Ok(cfg)
    }

    pub fn forest(&self) -> Result<ForestParams> {
        let max_features = match self.max_features.trim() {
            "sqrt" => MaxFeatures::Sqrt,
            "all" => MaxFeatures::All,
            other => match other.parse::<usize>() {
                Ok(k) => MaxFeatures::Count(k),
                Err(_) => MaxFeatures::Fraction(
                    other
                        .parse()
                        .with_context(|| format!("max_features: expected sqrt, all, a count or a fraction, got `{other}`"))?,
                ),
            },
        };
        let params = ForestParams {
            n_trees: self.n_trees,
            max_features,
            min_samples_leaf: self.min_samples_leaf,
            min_uncensored_leaf: self.min_uncensored_leaf,
            max_depth: (self.max_depth > 0).then_some(self.max_depth),
            bootstrap: self.bootstrap,
            seed: 0,
        };
        params.validate().context("forest parameters")?;
        Ok(params)
    }

    pub fn conversion(&self) -> Result<SurvivalConversion> {
        match self.conversion.trim() {
            "product_limit" => Ok(SurvivalConversion::ProductLimit),
            "exponential" | "exp" => Ok(SurvivalConversion::Exponential),
            other => bail!("conversion: expected product_limit or exponential, got `{other}`"),
        }
    }

    pub fn tuning(&self, seed: u64) -> Result<TuneBudget> {
        let b = TuneBudget {
            n_evaluations: self.tune_evaluations,
            inner_validation_fraction: self.tune_validation_fraction,
            seed,
        };
        b.validate().context("tuning budget")?;
        Ok(b)
    }

    /// Builds a selector configuration from `spec`, written `kind` or
    /// `kind/imputation` (e.g. `per_algorithm_regressor/ignore`).
    pub fn selector_config(&self, spec: &str, seed: u64) -> Result<SelectorConfig> {
        let (kind, imputation) = match spec.rsplit_once('/') {
            Some((k, i)) => (k, Some(i.to_string())),
            None => (spec, (!self.imputation.is_empty()).then(|| self.imputation.clone())),
        };
        let kind: SelectorKind = kind.parse().with_context(|| format!("selector `{spec}`"))?;
        let mut cfg = SelectorConfig::new(kind).with_forest(self.forest()?);
        if let Some(i) = imputation {
            let strategy: ImputationStrategy = i.parse().with_context(|| format!("imputation of `{spec}`"))?;
            cfg = cfg.with_imputation(strategy);
        }
        cfg.conversion = self.conversion()?;
        cfg.tuning = self.tuning(seed)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_env_override() {
        let cfg = RunConfig::load(None, [("SURVSEL_CFG_FOLDS".to_string(), "5".to_string()), ("OTHER".into(), "x".into())]).unwrap();
        assert_eq!(cfg.folds, 5);
        assert_eq!(cfg.n_trees, 100);
        let cfg = RunConfig::load(None, [("SURVSEL_CFG_SELECTOR".to_string(), "sbs".to_string())]).unwrap();
        assert_eq!(cfg.selector, "sbs");
    }

    #[test]
    fn unknown_key_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "folds = 3\nn_tres = 5\n").unwrap();
        let err = format!("{:#}", RunConfig::load(Some(&p), []).unwrap_err());
        assert!(err.contains("n_tres"), "{err}");
    }

    #[test]
    fn selector_specs() {
        let cfg = RunConfig::default();
        let s = cfg.selector_config("per_algorithm_regressor/ignore", 0).unwrap();
        assert_eq!(s.imputation, Some(ImputationStrategy::Ignore));
        let s = cfg.selector_config("isac", 0).unwrap();
        assert_eq!(s.imputation(), ImputationStrategy::Par10);
        assert!(cfg.selector_config("bogus", 0).is_err());
        let bad = RunConfig {
            max_features: "lots".into(),
            ..Default::default()
        };
        assert!(bad.forest().is_err());
    }
}
