//! Survival step functions, Nelson–Aalen estimation and random survival
//! forests.

mod model;
mod step;

pub use model::{SurvivalModel, MAX_GRID};
pub use step::{
    chf_to_survival, chf_to_survival_product_limit, expected_loss, nelson_aalen, StepFunction, SurvivalConversion,
    TimedEvent,
};
