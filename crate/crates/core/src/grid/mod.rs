//! Physical and economic model of the microgrid: the radial feeder with a
//! linearized power-flow map, storage and generator devices with
//! probabilistic operating bounds, tariffed cost bookkeeping, the
//! tie-line-quality indices, and the day-scale dispatch program.
//!
//! Submodules:
//! - [`network`]: feeder topology, linear branch-flow/voltage solve, and the
//!   per-bus voltage sensitivity map used to write voltage limits as affine
//!   rows over injections.
//! - [`chance`]: deterministic tightening of probabilistic bounds via
//!   normalized distribution quantiles.
//! - [`device`]: storage, generator, renewable, and load descriptions; the
//!   storage state transition; per-round cost decomposition.
//! - [`indices`]: tie-line smoothing penalty, fluctuation indices, and the
//!   voltage satisfaction rate.
//! - [`day_qp`]: the full-horizon dispatch program over a revealed day.
//! - [`ieee33`]: the bundled 33-bus feeder study case.

mod chance;
mod day_qp;
mod device;
mod ieee33;
mod indices;
mod network;

pub use chance::{normalized_quantile, reformulate_chance_bound, BoundDistribution, BoundSide};
pub use day_qp::{build_day_qp, DayProblem, DayQpLayout, DaySolution};
pub use device::{
    soc_transition, stage_cost, tie_line_power, DgSpec, DispatchDecision, GesSpec, LoadSite,
    MicrogridSpec, PricingSpec, Profile, Realization, ResKind, ResSite, ScenarioDay,
    StageCost, StochasticBound,
};
pub use ieee33::{ieee33_spec, three_tier_price, tiny_spec};
pub use indices::{fluctuation_indices, smoothing_penalty, voltage_satisfaction};
pub use network::{Branch, NetworkSpec, PowerFlowResult, TreeIndex};

use crate::solver::SolveError;
use thiserror::Error;

/// Errors raised by the microgrid model.
#[derive(Debug, Error)]
pub enum GridError {
    /// The feeder graph is not a tree rooted at the substation.
    #[error("invalid feeder topology: {0}")]
    Topology(String),
    /// A named probability distribution is not supported.
    #[error("unknown distribution '{0}' (expected 'gaussian' or 'uniform')")]
    UnknownDistribution(String),
    /// A parameter violates its documented range or consistency rule.
    #[error("invalid model data: {0}")]
    Invalid(String),
    /// Two inputs disagree on the number of periods.
    #[error("horizon mismatch: {context} has {found} periods, expected {expected}")]
    Horizon {
        context: String,
        expected: usize,
        found: usize,
    },
    /// The underlying QP solve failed.
    #[error(transparent)]
    Solver(#[from] SolveError),
}
