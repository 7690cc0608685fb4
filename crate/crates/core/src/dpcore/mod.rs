//! Differential-privacy primitives: the Laplace and Exponential mechanisms,
//! closed-form sensitivity bounds for the sampling pipeline, the smooth
//! local-sensitivity iteration, and the per-analyst budget accountant.

mod accountant;
mod mechanisms;
mod ratio;
mod sensitivity;

pub use accountant::{advanced_composition_budget, Accountant, Budget, BudgetSplit, HpSplit};
pub use mechanisms::{clamp_unit, exponential_select, laplace, laplace_noise, round_nonneg};
pub use ratio::Ratio;
pub use sensitivity::{
    beta, delta_avg_r, delta_p, delta_r, dominant_scenario, k_bound, ls_at_distance,
    smooth_sensitivity, Scenario, SensitivityContext,
};

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DpError {
    #[error("invalid noise scale {0}: must be non-negative")]
    InvalidScale(f64),
    #[error("score set must be non-empty")]
    EmptyScores,
    #[error("invalid score sensitivity {0}: must be positive")]
    InvalidSensitivity(f64),
    #[error("invalid epsilon {0}: must be positive")]
    InvalidEpsilon(f64),
    #[error("invalid delta {0}: must be in (0, 1)")]
    InvalidDelta(f64),
    #[error("degenerate sensitivity context: {0} must be positive")]
    DegenerateContext(&'static str),
    #[error("malformed budget value: {0}")]
    MalformedBudget(String),
    #[error(
        "privacy budget exhausted: remaining epsilon {remaining_epsilon}, remaining delta {remaining_delta}"
    )]
    BudgetExhausted {
        remaining_epsilon: f64,
        remaining_delta: f64,
    },
}
