//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A machine or controller parameter violates its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Trajectory evaluated outside its horizon [0, T].
    #[error("time {t} outside trajectory horizon [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    /// The loss-optimal d-current formula degenerates (field weakening
    /// unavailable at zero speed or zero iron-loss constant).
    #[error("field weakening unavailable: {0}")]
    FieldWeakeningUnavailable(String),

    /// Voltage rectangle collapsed to zero width or height.
    #[error("degenerate voltage rectangle: {0}")]
    DegenerateRectangle(String),

    /// Constraint construction was asked for an empty or out-of-range
    /// collocation grid.
    #[error("invalid collocation grid: {0}")]
    InvalidCollocation(String),

    /// Cost Hessian is not positive definite; the cost context is invalid.
    #[error("cost Hessian is not positive definite")]
    NotPositiveDefinite,

    /// The constraint set admits no trajectory from the given initial state.
    #[error("trajectory optimization infeasible")]
    Infeasible,

    /// The LP solver exhausted its pivot budget.
    #[error("LP iteration limit reached after {0} pivots")]
    IterationLimit(usize),

    /// Closed-loop run aborted after repeated solver faults.
    #[error("simulation aborted: {0}")]
    SimulationAborted(String),

    /// Metric extraction was given an empty or out-of-range window.
    #[error("invalid analysis window: {0}")]
    InvalidWindow(String),
}

pub type Result<T> = std::result::Result<T, Error>;
