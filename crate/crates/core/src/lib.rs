//! Per-instance algorithm selection from right-censored runtime data.
//!
//! Each algorithm's runtime distribution is modelled with a random survival
//! forest; an algorithm is chosen per instance by minimizing the expected
//! value of a (possibly risk-averse) loss under that distribution. The crate
//! also provides the regression, classification, nearest-neighbour,
//! clustering and pairwise baselines, treatments of censored training
//! labels, and a cross-validated PAR10 evaluation harness.

// `!(x > 0.0)` is how NaN gets rejected alongside nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod censoring;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod features;
pub mod forest;
pub mod loss;
pub mod rng;
pub mod scenario;
pub mod selectors;
pub mod survival;
pub mod tuning;

pub use error::{Error, Result};

/// Index of the smallest `key(v)`; the lowest index wins ties and NaN keys
/// never win.
pub fn argmin_by<T, F: Fn(&T) -> f64>(values: &[T], key: F) -> usize {
    let mut best = 0;
    let mut best_key = f64::INFINITY;
    for (i, v) in values.iter().enumerate() {
        let k = key(v);
        if k < best_key {
            best = i;
            best_key = k;
        }
    }
    best
}

pub fn argmin(values: &[f64]) -> usize {
    argmin_by(values, |&v| v)
}
