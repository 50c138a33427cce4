//! Binary logit models of detection and their effect measures.

mod effects;
mod logit;
mod model;
mod resample;

pub use effects::*;
pub use logit::{
    fit_logit, fit_logit_with, null_log_likelihood, Column, ColumnKind, Dataset, FitOptions, LogitFit, INTERCEPT,
};
pub use model::*;
pub use resample::*;

/// Standard logistic function.
pub fn logistic(eta: f64) -> f64 {
    logit::logistic(eta)
}
