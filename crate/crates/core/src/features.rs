//! Per-feature median imputation fitted on training rows.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImputer {
    medians: Vec<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl FeatureImputer {
    /// Columns with no observed value impute to 0.
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return invalid("cannot fit feature imputer on zero rows");
        };
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return invalid("feature rows differ in dimension");
        }
        let medians = (0..d)
            .map(|j| {
                let mut col: Vec<f64> = rows.iter().map(|r| r[j]).filter(|v| v.is_finite()).collect();
                median(&mut col)
            })
            .collect();
        Ok(FeatureImputer { medians })
    }

    pub fn dim(&self) -> usize {
        self.medians.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.medians.len() {
            return invalid(format!("feature vector has dimension {}, expected {}", x.len(), self.medians.len()));
        }
        Ok(x.iter()
            .zip(&self.medians)
            .map(|(&v, &m)| if v.is_finite() { v } else { m })
            .collect())
    }

    pub fn transform_all(&self, rows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }
}
