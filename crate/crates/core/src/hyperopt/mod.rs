//! Quasi-random search over training components, scored by short
//! cross-validated runs.

mod search;
mod sobol;
mod space;

pub use search::{
    cross_validate, quasi_random_search, trial_log_csv, CvData, CvOutcome, CvSummary, RankedTrial, SearchSummary,
    TrialResult,
};
pub use sobol::{sobol_point, Sobol, MAX_DIM};
pub use space::{apply, Axis, AxisKind, AxisValue, Scale, SearchSpace};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("Sobol dimension {0} outside 1..=16")]
    SobolDimension(usize),
    #[error("search space: {0}")]
    Space(String),
    #[error("budget must be at least 1")]
    EmptyBudget,
    #[error("cross-validation data: {0}")]
    Data(String),
}
