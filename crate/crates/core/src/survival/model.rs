use log::warn;
use serde::{Deserialize, Serialize};

use super::{expected_loss, StepFunction, SurvivalConversion};
use crate::censoring::SurvivalDataset;
use crate::error::Result;
use crate::forest::{fit_forest, Forest, ForestParams, LogRank};
use crate::loss::LossSpec;

/// Upper bound on the number of knots of a predicted step function.
pub const MAX_GRID: usize = 10_000;

/// Random survival forest for one algorithm. Each leaf stores the
/// Nelson–Aalen cumulative hazard of its training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalModel {
    forest: Forest<StepFunction>,
    cutoff: f64,
    /// Distinct uncensored training times plus the cutoff.
    grid: Vec<f64>,
    conversion: SurvivalConversion,
}

impl SurvivalModel {
    pub fn fit(d: &SurvivalDataset, params: &ForestParams) -> Result<Self> {
        Self::fit_with(d, params, SurvivalConversion::default())
    }

    pub fn fit_with(d: &SurvivalDataset, params: &ForestParams, conversion: SurvivalConversion) -> Result<Self> {
        if d.n_uncensored() == 0 {
            warn!("all {} samples censored; survival model is S ≡ 1 up to the cutoff", d.len());
        }
        let x = d.features();
        let time: Vec<f64> = d.samples.iter().map(|s| s.y).collect();
        let event: Vec<bool> = d.samples.iter().map(|s| !s.censored).collect();
        let forest = fit_forest(&x, &LogRank::new(&time, &event), None, params)?;

        let mut grid: Vec<f64> = d.samples.iter().filter(|s| !s.censored).map(|s| s.y).collect();
        grid.push(d.cutoff);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        Ok(SurvivalModel {
            forest,
            cutoff: d.cutoff,
            grid,
            conversion,
        })
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn forest(&self) -> &Forest<StepFunction> {
        &self.forest
    }

    pub fn conversion(&self) -> SurvivalConversion {
        self.conversion
    }

    pub fn with_conversion(mut self, conversion: SurvivalConversion) -> Self {
        self.conversion = conversion;
        self
    }

    /// Ensemble cumulative hazard: the mean of the leaf hazards `x` reaches.
    pub fn predict_chf(&self, x: &[f64]) -> Result<StepFunction> {
        let leaves = self.forest.leaves_for(x)?;
        Ok(StepFunction::mean(&leaves, &[self.cutoff]).thin(MAX_GRID))
    }

    pub fn predict_survival(&self, x: &[f64]) -> Result<StepFunction> {
        Ok(self.conversion.apply(&self.predict_chf(x)?))
    }

    pub fn expected_loss(&self, x: &[f64], loss: &LossSpec) -> Result<f64> {
        expected_loss(&self.predict_survival(x)?, loss, self.cutoff)
    }
}
