//! Deterministic tightening of probabilistic operating bounds.
//!
//! A bound whose level is random with mean `μ` and standard deviation `σ`
//! must hold with probability at least `1 − ε`. Writing the level as
//! `μ + σ·Z` with `Z` the normalized (zero-mean, unit-variance) shape of the
//! named distribution, the requirement is met by tightening the bound by the
//! `(1 − ε)` quantile `z` of `Z`: an upper limit shrinks to `μ − z·σ`, a
//! lower limit rises to `μ + z·σ`.

use super::GridError;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::str::FromStr;

/// Named shape of a random bound level, always used in normalized form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoundDistribution {
    #[default]
    #[serde(alias = "normal")]
    Gaussian,
    Uniform,
}

impl FromStr for BoundDistribution {
    type Err = GridError;

    fn from_str(name: &str) -> Result<Self, GridError> {
        match name.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(BoundDistribution::Gaussian),
            "uniform" => Ok(BoundDistribution::Uniform),
            other => Err(GridError::UnknownDistribution(other.to_string())),
        }
    }
}

/// Which side of a two-sided band a bound closes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    Upper,
    Lower,
}

/// Inverse CDF at `p` of the zero-mean unit-variance version of `dist`.
pub fn normalized_quantile(dist: BoundDistribution, p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p), "quantile level {p} outside [0, 1]");
    match dist {
        BoundDistribution::Gaussian => Normal::new(0.0, 1.0).unwrap().inverse_cdf(p),
        // U[-sqrt(3), sqrt(3)] has unit variance.
        BoundDistribution::Uniform => 3f64.sqrt() * (2.0 * p - 1.0),
    }
}

/// Deterministic replacement for a probabilistic bound: `μ − z·σ` for an
/// upper limit, `μ + z·σ` for a lower limit, with `z` the normalized
/// `(1 − ε)` quantile of `dist`.
pub fn reformulate_chance_bound(
    mu: f64,
    sigma: f64,
    epsilon: f64,
    side: BoundSide,
    dist: BoundDistribution,
) -> Result<f64, GridError> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(GridError::Invalid(format!(
            "confidence level {epsilon} outside (0, 0.5]"
        )));
    }
    if !(sigma >= 0.0) {
        return Err(GridError::Invalid(format!(
            "bound deviation {sigma} must be nonnegative"
        )));
    }
    let z = normalized_quantile(dist, 1.0 - epsilon);
    Ok(match side {
        BoundSide::Upper => mu - z * sigma,
        BoundSide::Lower => mu + z * sigma,
    })
}
