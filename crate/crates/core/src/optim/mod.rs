//! Optimizers, learning-rate schedules and the learning-rate range test.

mod optimizer;
mod range_test;
mod schedule;

use thiserror::Error;

pub use optimizer::{Optimizer, OptimizerConfig, OptimizerKind};
pub use range_test::{lr_range_test, Objective, RangePoint, RangeTest, EMA_BETA};
pub use schedule::{ScheduleConfig, ScheduleKind};

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient at index {0}")]
    NonFiniteGradient(usize),
    #[error("{grads} gradients for {params} parameters")]
    LengthMismatch { params: usize, grads: usize },
    #[error("step {step} outside schedule of {total} steps")]
    StepOutOfRange { step: usize, total: usize },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("loss is already non-finite at the starting learning rate")]
    Divergent,
}
