use crate::censoring::build_survival_dataset_with;
use crate::error::Result;
use crate::exec;
use crate::features::FeatureImputer;
use crate::forest::ForestParams;
use crate::loss::LossSpec;
use crate::rng::derive_seed;
use crate::scenario::View;
use crate::survival::{expected_loss, StepFunction, SurvivalConversion, SurvivalModel};

use super::Selector;

/// One survival forest per algorithm; an algorithm's score is its expected
/// loss under the predicted runtime distribution.
#[derive(Debug, Clone)]
pub struct SurvivalSelector {
    imputer: FeatureImputer,
    models: Vec<SurvivalModel>,
    loss: LossSpec,
}

impl SurvivalSelector {
    pub fn fit(view: View<'_>, loss: LossSpec, forest: &ForestParams, conversion: SurvivalConversion) -> Result<Self> {
        loss.validate()?;
        let (imputer, models) = Self::fit_models(view, forest, conversion)?;
        Ok(SurvivalSelector { imputer, models, loss })
    }

    /// Fits the per-algorithm models alone. The loss only enters when the
    /// predicted distributions are integrated, so one set of models serves
    /// any number of losses.
    pub fn fit_models(
        view: View<'_>,
        forest: &ForestParams,
        conversion: SurvivalConversion,
    ) -> Result<(FeatureImputer, Vec<SurvivalModel>)> {
        let imputer = FeatureImputer::fit(&view.raw_features())?;
        let models = exec::map_range(view.n_algorithms(), |a| {
            let d = build_survival_dataset_with(view.scenario, a, view.instances, &imputer)?;
            SurvivalModel::fit_with(&d, &forest.with_seed(derive_seed(forest.seed, a as u64)), conversion)
        });
        Ok((imputer, models.into_iter().collect::<Result<_>>()?))
    }

    pub fn from_models(imputer: FeatureImputer, models: Vec<SurvivalModel>, loss: LossSpec) -> Self {
        SurvivalSelector { imputer, models, loss }
    }

    pub fn loss(&self) -> &LossSpec {
        &self.loss
    }

    pub fn models(&self) -> &[SurvivalModel] {
        &self.models
    }

    /// Predicted survival function of every algorithm for a raw feature vector.
    pub fn predict_survival(&self, x: &[f64]) -> Result<Vec<StepFunction>> {
        let z = self.imputer.transform(x)?;
        self.models.iter().map(|m| m.predict_survival(&z)).collect()
    }
}

impl Selector for SurvivalSelector {
    fn n_algorithms(&self) -> usize {
        self.models.len()
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict_survival(x)?
            .iter()
            .zip(&self.models)
            .map(|(sf, m)| expected_loss(sf, &self.loss, m.cutoff()))
            .collect()
    }
}
