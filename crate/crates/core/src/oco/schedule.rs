//! Horizon-derived schedules: expert count, aggregation learning rate,
//! per-expert step sizes, constraint-pressure growth, and queue floors.

use super::OcoError;

/// All tunable rates for a run of the adaptive controller, derived from the
/// horizon length `T` and a pair of exponents `(chi, delta)` with
/// `0 < chi < delta < 1/2`.
///
/// * expert count: `ceil(log2(1 + T) / 2) + 1`, so the step-size ladder
///   spans every drift speed the horizon can distinguish;
/// * aggregation learning rate: `1 / sqrt(T)`;
/// * expert `i` (0-based) steps with `alpha(i, t) = 2^i / t^(1/2 + chi)`;
/// * constraint pressure grows as `beta(t) = t^(1/2 + delta)`;
/// * queue floors grow as `theta(i, t) = 2^i * t`, so slower experts keep
///   proportionally gentler constraint pricing.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSchedule {
    horizon: usize,
    experts: usize,
    learn_rate: f64,
    chi: f64,
    delta: f64,
}

impl ParamSchedule {
    /// Default step-size decay exponent.
    pub const DEFAULT_CHI: f64 = 0.1;
    /// Default constraint-pressure growth exponent.
    pub const DEFAULT_DELTA: f64 = 0.2;

    /// Builds the schedule for `horizon` rounds with the default exponents.
    pub fn for_horizon(horizon: usize) -> Result<Self, OcoError> {
        Self::with_exponents(horizon, Self::DEFAULT_CHI, Self::DEFAULT_DELTA)
    }

    /// Builds the schedule with explicit exponents; requires
    /// `0 < chi < delta < 1/2` and `horizon >= 1`.
    pub fn with_exponents(horizon: usize, chi: f64, delta: f64) -> Result<Self, OcoError> {
        if horizon == 0 {
            return Err(OcoError::Schedule("horizon must be at least 1".into()));
        }
        if !(0.0 < chi && chi < delta && delta < 0.5) {
            return Err(OcoError::Schedule(format!(
                "exponents must satisfy 0 < chi < delta < 1/2 (got chi = {chi}, delta = {delta})"
            )));
        }
        let t = horizon as f64;
        let experts = (0.5 * (1.0 + t).log2()).ceil() as usize + 1;
        Ok(Self {
            horizon,
            experts,
            learn_rate: 1.0 / t.sqrt(),
            chi,
            delta,
        })
    }

    /// Number of rounds the schedule was built for.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of experts in the step-size ladder.
    pub fn experts(&self) -> usize {
        self.experts
    }

    /// Learning rate of the multiplicative aggregation layer.
    pub fn learn_rate(&self) -> f64 {
        self.learn_rate
    }

    /// Step size of expert `i` (0-based) at round `t` (1-based).
    pub fn alpha(&self, i: usize, t: usize) -> f64 {
        debug_assert!(i < self.experts && t >= 1);
        2.0f64.powi(i as i32) / (t as f64).powf(0.5 + self.chi)
    }

    /// Constraint-pressure multiplier at round `t` (1-based).
    pub fn beta(&self, t: usize) -> f64 {
        debug_assert!(t >= 1);
        (t as f64).powf(0.5 + self.delta)
    }

    /// Queue floor for expert `i` (0-based) at round `t` (1-based).
    pub fn theta(&self, i: usize, t: usize) -> f64 {
        debug_assert!(i < self.experts && t >= 1);
        2.0f64.powi(i as i32) * t as f64
    }

    /// Initial aggregation weights. The mass decays harmonically along the
    /// ladder, favoring the most cautious expert, and sums to one exactly.
    pub fn initial_weights(&self) -> Vec<f64> {
        let n = self.experts as f64;
        (1..=self.experts)
            .map(|rank| {
                let r = rank as f64;
                (n + 1.0) / (r * (r + 1.0) * n)
            })
            .collect()
    }
}
