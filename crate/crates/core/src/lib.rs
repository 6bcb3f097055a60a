//! Prediction-free coordinated dispatch for a grid-connected microgrid.
//!
//! The crate simulates a rolling daily dispatch in which storage, dispatchable
//! generation, and the utility tie-line are driven by an adaptive
//! virtual-queue online optimizer: a bank of experts with geometrically spaced
//! learning rates takes prox steps against the last observed round, queue
//! variables price accumulated soft-constraint violation, and an exponential
//! meta-weighting aggregates the experts. A two-stage reference pipeline
//! (offline ex-post optimal day solves over a scenario library, online kernel
//! reweighting of those solutions) supplies tracking targets that pull the
//! online trajectory toward day-scale behavior without any forecast input.
//!
//! Layout:
//!
//! * [`solver`] — sparse operator-splitting QP solver plus the expert prox step;
//! * [`oco`] — parameter schedule, expert bank, queue/weight updates, metrics;
//! * [`grid`] — feeder network, devices, probabilistic bound reformulation,
//!   cost bookkeeping;
//! * [`reference`] — ex-post day solves and the online kernel reference;
//! * [`sim`] — round construction, day simulations for every policy, noise
//!   injection, and the synthetic regret benchmark;
//! * [`io`] — scenario/sequence/spec file formats and the synthetic day
//!   generator.

pub mod grid;
pub mod io;
mod linalg;
pub mod oco;
pub mod reference;
pub mod sim;
pub mod solver;

#[cfg(any(test, feature = "test-oracles"))]
pub mod oracles;

pub use oco::{AdaptiveController, OcoMetrics, ParamSchedule, QuadraticCost};
pub use sim::{run_day, run_m4, DayContext, DayResult, Policy};
pub use solver::{
    solve_qp, AdmmSettings, QuadraticProgram, SolveReport, SolveStatus, SparseMatrix,
};
