//! Panel-data estimator of the ATT under interactive fixed effects.

mod closed_form;
mod data;
mod estimate;
mod relevance;
mod stack;

pub use closed_form::{closed_form_example1, closed_form_example2};
pub use data::PanelDataset;
pub use estimate::{
    att_gradient, att_series, estimate_att, estimate_gamma1, GammaParams, PanelFit,
};
pub use relevance::{check_relevance, FirstStageCoef, RelevanceReport, WEAK_F_THRESHOLD};
pub use stack::{build_stacked_unit, ModelSpec, StackDims};

pub(crate) use data::default_names;
pub(crate) use estimate::{fit_stacked, series_from_fit};
pub(crate) use stack::stacked_block;
