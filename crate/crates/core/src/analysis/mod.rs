//! Model-independent and model-based feature analyses: Pearson correlation
//! between events, Shapley-value attributions, and retraining on the
//! top-ranked features.

mod correlation;
mod elimination;
mod shapley;

pub use correlation::{correlate, CorrelationMatrix};
pub use elimination::{eliminate_and_retrain, EliminationRow, EliminationTable};
pub use shapley::{
    global_importance, shapley_exact, shapley_sampled, shapley_weight, stratified_sample, value_function,
    Explainable, FnModel, ShapleyMode, ShapleyReport, MAX_EXACT_FEATURES,
};
