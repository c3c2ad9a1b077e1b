//! CART-style trees and bagged forests with pluggable split criteria.

mod criterion;
mod ensemble;
mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use criterion::{log_rank_statistic, ClassLeaf, Criterion, Gini, LogRank, RegLeaf, Variance};
pub use ensemble::{fit_forest, load_forest, save_forest, Forest};
pub use tree::{fit_tree, Node, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `⌈√d⌉`
    Sqrt,
    All,
    Count(usize),
    Fraction(f64),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().ceil() as usize,
            MaxFeatures::All => d,
            MaxFeatures::Count(k) => k,
            MaxFeatures::Fraction(f) => (f * d as f64).ceil() as usize,
        };
        k.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    /// Minimum number of uncensored samples per leaf (survival trees only).
    pub min_uncensored_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            min_samples_leaf: 1,
            min_uncensored_leaf: 3,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return invalid("n_trees must be ≥ 1");
        }
        if self.min_samples_leaf == 0 {
            return invalid("min_samples_leaf must be ≥ 1");
        }
        if self.min_uncensored_leaf == 0 {
            return invalid("min_uncensored_leaf must be ≥ 1");
        }
        match self.max_features {
            MaxFeatures::Count(0) => invalid("max_features count must be ≥ 1"),
            MaxFeatures::Fraction(f) if !(f > 0.0 && f <= 1.0) => invalid("max_features fraction must lie in (0, 1]"),
            _ => Ok(()),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ForestParams { seed, ..self.clone() }
    }
}
