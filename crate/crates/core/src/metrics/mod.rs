//! Classification, disentanglement, attribution and survey metrics.

mod dci;
mod f1;
mod ig;
mod lasso;
mod survey;

pub use dci::{dc_from_importance, dci, DciReport, DEFAULT_DCI_LAMBDA};
pub use f1::{macro_f1, per_class_f1};
pub use ig::{integrated_gradients, shortcut_attribution_share, white_baseline, AttributionMap, ShortcutShare};
pub use lasso::{fit_lasso, LassoFit, LASSO_MAX_SWEEPS, LASSO_TOL};
pub use survey::{survey_generate, survey_score, SurveyOption, SurveyQuestion};
