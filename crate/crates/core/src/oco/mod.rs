//! Adaptive constrained online optimization.
//!
//! The controller in this module commits a decision every round before the
//! round's cost and constraint data are revealed, then folds the revealed
//! data into its state. It runs a small bank of proximal experts whose step
//! sizes form a geometric ladder, so at least one expert always moves at a
//! rate suited to however fast the environment happens to drift. Each expert
//! carries virtual queues, one per monitored constraint row, that accumulate
//! observed violations and raise the price of violating again. A
//! multiplicative-weights layer blends the experts into the committed point.
//!
//! Submodules:
//! - [`schedule`](ParamSchedule): step sizes, constraint pressure, queue
//!   floors, and the expert count, all derived from the horizon length.
//! - [`QuadraticCost`]: the revealed per-round cost (value + gradient).
//! - [`AdaptiveController`]: the decide/observe engine.
//! - [`metrics`](compute_metrics): regret, violation, and path-length
//!   summaries over a recorded run.
//! - [`synthetic`]: a drifting benchmark family with closed-form per-round
//!   optima, used for self-checking scaling studies.

mod controller;
mod cost;
mod metrics;
mod schedule;
pub mod synthetic;

pub use controller::{blend, raised_queue, reweight, AdaptiveController};
pub use cost::QuadraticCost;
pub use metrics::{compute_metrics, BenchmarkPoint, OcoMetrics, RoundRecord};
pub use schedule::ParamSchedule;

use crate::solver::SolveError;
use thiserror::Error;

/// Errors surfaced by the online controller and its schedules.
#[derive(Debug, Error)]
pub enum OcoError {
    /// Horizon or exponent parameters outside their valid ranges.
    #[error("invalid schedule: {0}")]
    Schedule(String),
    /// `decide`/`observe` called in the wrong order.
    #[error("controller called out of order: {0}")]
    OutOfOrder(&'static str),
    /// A point, cost, or constraint block has the wrong dimension.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    /// The number of monitored constraint rows changed between rounds.
    #[error("monitored row count changed mid-run: expected {expected}, found {found}")]
    RowCount { expected: usize, found: usize },
    /// An inner projection or proximal subproblem failed to solve.
    #[error(transparent)]
    Solver(#[from] SolveError),
}
