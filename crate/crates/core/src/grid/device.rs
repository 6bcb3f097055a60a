//! Device fleet, tariffs, and per-round cost bookkeeping.
//!
//! Units: powers in MW, reactive powers in MVar, energies in MWh, storage
//! state of charge as a fraction of capacity, prices in $/MWh, intervals in
//! hours. The storage relaxation used throughout (charge and discharge as
//! separate nonnegative variables) is exact because charging is priced
//! strictly below discharging, so simultaneous charge/discharge is never
//! optimal.

use super::chance::{reformulate_chance_bound, BoundDistribution, BoundSide};
use super::network::NetworkSpec;
use super::GridError;
use serde::{Deserialize, Serialize};

/// A per-period scalar series, stored either as one shared constant or as an
/// explicit sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Constant(f64),
    Series(Vec<f64>),
}

impl Profile {
    /// Value at period `t` (0-based). Call [`Profile::check`] first; a short
    /// series panics here.
    pub fn value(&self, t: usize) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Series(v) => v[t],
        }
    }

    /// Smallest value over the horizon.
    pub fn min_value(&self) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Series(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// Validates the length (series must cover the horizon exactly) and
    /// finiteness.
    pub fn check(&self, horizon: usize, what: &str) -> Result<(), GridError> {
        match self {
            Profile::Constant(c) => {
                if !c.is_finite() {
                    return Err(GridError::Invalid(format!("{what} is not finite")));
                }
            }
            Profile::Series(v) => {
                if v.len() != horizon {
                    return Err(GridError::Horizon {
                        context: what.to_string(),
                        expected: horizon,
                        found: v.len(),
                    });
                }
                if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                    return Err(GridError::Invalid(format!("{what} contains {bad}")));
                }
            }
        }
        Ok(())
    }
}

/// A random bound level: mean and deviation per period plus the normalized
/// shape used to tighten it deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticBound {
    pub mean: Profile,
    pub std: Profile,
    #[serde(default)]
    pub distribution: BoundDistribution,
}

impl StochasticBound {
    pub fn constant(mean: f64, std: f64) -> Self {
        StochasticBound {
            mean: Profile::Constant(mean),
            std: Profile::Constant(std),
            distribution: BoundDistribution::Gaussian,
        }
    }

    /// Deterministic upper limit at period `t` under confidence `1 − epsilon`.
    pub fn tightened_upper(&self, t: usize, epsilon: f64) -> Result<f64, GridError> {
        reformulate_chance_bound(
            self.mean.value(t),
            self.std.value(t),
            epsilon,
            BoundSide::Upper,
            self.distribution,
        )
    }

    /// Deterministic lower limit at period `t` under confidence `1 − epsilon`.
    pub fn tightened_lower(&self, t: usize, epsilon: f64) -> Result<f64, GridError> {
        reformulate_chance_bound(
            self.mean.value(t),
            self.std.value(t),
            epsilon,
            BoundSide::Lower,
            self.distribution,
        )
    }

    fn check(&self, horizon: usize, what: &str) -> Result<(), GridError> {
        self.mean.check(horizon, &format!("{what} mean"))?;
        self.std.check(horizon, &format!("{what} deviation"))?;
        if self.std.min_value() < 0.0 {
            return Err(GridError::Invalid(format!("{what} deviation is negative")));
        }
        Ok(())
    }
}

fn default_power_factor() -> f64 {
    0.95
}

fn zero_profile() -> Profile {
    Profile::Constant(0.0)
}

/// A generalized storage asset (battery or aggregated flexible demand).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GesSpec {
    pub id: String,
    pub bus: usize,
    pub capacity_mwh: f64,
    pub charge_efficiency: f64,
    pub discharge_efficiency: f64,
    /// Fraction of charge lost per interval.
    #[serde(default)]
    pub self_discharge: f64,
    /// Exogenous state-of-charge drift per interval (demand-side assets).
    #[serde(default = "zero_profile")]
    pub baseline_drift: Profile,
    /// Price paid per MWh charged.
    pub charge_cost: f64,
    /// Price paid per MWh discharged; must exceed the charge price.
    pub discharge_cost: f64,
    /// Random charge power limit, MW.
    pub charge_limit: StochasticBound,
    /// Random discharge power limit, MW.
    pub discharge_limit: StochasticBound,
    /// Random state-of-charge ceiling, fraction.
    pub soc_upper: StochasticBound,
    /// Random state-of-charge floor, fraction.
    pub soc_lower: StochasticBound,
    /// Converter power factor tying reactive exchange to net active power.
    #[serde(default = "default_power_factor")]
    pub power_factor: f64,
    pub initial_soc: f64,
}

impl GesSpec {
    /// MVar exchanged per MW of net active output.
    pub fn reactive_ratio(&self) -> f64 {
        (1.0 / (self.power_factor * self.power_factor) - 1.0).sqrt()
    }

    fn check(&self, horizon: usize, bus_count: usize) -> Result<(), GridError> {
        let id = &self.id;
        if self.bus >= bus_count {
            return Err(GridError::Invalid(format!(
                "storage '{id}' sits on bus {} outside 0..{bus_count}",
                self.bus
            )));
        }
        if !(self.capacity_mwh > 0.0) {
            return Err(GridError::Invalid(format!(
                "storage '{id}' capacity must be positive"
            )));
        }
        for (eta, name) in [
            (self.charge_efficiency, "charge"),
            (self.discharge_efficiency, "discharge"),
        ] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(GridError::Invalid(format!(
                    "storage '{id}' {name} efficiency {eta} outside (0, 1]"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.self_discharge) {
            return Err(GridError::Invalid(format!(
                "storage '{id}' self-discharge {} outside [0, 1)",
                self.self_discharge
            )));
        }
        if !(self.charge_cost >= 0.0 && self.charge_cost < self.discharge_cost) {
            return Err(GridError::Invalid(format!(
                "storage '{id}' needs 0 <= charge cost < discharge cost (got {} and {})",
                self.charge_cost, self.discharge_cost
            )));
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return Err(GridError::Invalid(format!(
                "storage '{id}' power factor {} outside (0, 1]",
                self.power_factor
            )));
        }
        if !(0.0..=1.0).contains(&self.initial_soc) {
            return Err(GridError::Invalid(format!(
                "storage '{id}' initial state of charge {} outside [0, 1]",
                self.initial_soc
            )));
        }
        self.baseline_drift
            .check(horizon, &format!("storage '{id}' baseline drift"))?;
        self.charge_limit
            .check(horizon, &format!("storage '{id}' charge limit"))?;
        self.discharge_limit
            .check(horizon, &format!("storage '{id}' discharge limit"))?;
        self.soc_upper
            .check(horizon, &format!("storage '{id}' state-of-charge ceiling"))?;
        self.soc_lower
            .check(horizon, &format!("storage '{id}' state-of-charge floor"))?;
        Ok(())
    }
}

/// A dispatchable generator with quadratic fuel cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgSpec {
    pub id: String,
    pub bus: usize,
    /// $/MW²h fuel curve curvature.
    pub cost_quadratic: f64,
    /// $/MWh fuel curve slope.
    pub cost_linear: f64,
    /// $/h no-load cost.
    pub cost_fixed: f64,
    pub min_mw: f64,
    pub max_mw: f64,
    /// Largest allowed increase per interval, MW.
    pub ramp_up_mw: f64,
    /// Largest allowed decrease per interval, MW.
    pub ramp_down_mw: f64,
}

impl DgSpec {
    fn check(&self, bus_count: usize) -> Result<(), GridError> {
        let id = &self.id;
        if self.bus >= bus_count {
            return Err(GridError::Invalid(format!(
                "generator '{id}' sits on bus {} outside 0..{bus_count}",
                self.bus
            )));
        }
        if self.cost_quadratic < 0.0 {
            return Err(GridError::Invalid(format!(
                "generator '{id}' fuel curvature must be nonnegative"
            )));
        }
        if self.min_mw > self.max_mw {
            return Err(GridError::Invalid(format!(
                "generator '{id}' limits [{}, {}] are empty",
                self.min_mw, self.max_mw
            )));
        }
        if self.ramp_up_mw < 0.0 || self.ramp_down_mw < 0.0 {
            return Err(GridError::Invalid(format!(
                "generator '{id}' ramp limits must be nonnegative"
            )));
        }
        Ok(())
    }
}

/// Renewable technology shape the day generator should use for a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResKind {
    Solar,
    Wind,
}

/// A renewable site: where it connects and its nameplate rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResSite {
    pub id: String,
    pub bus: usize,
    pub rating_mw: f64,
    pub kind: ResKind,
}

/// A load site with its peak demand; realized demand comes from scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSite {
    pub bus: usize,
    pub peak_mw: f64,
}

/// Tariffs, tie-line smoothing prices, tracking weights, and the interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingSpec {
    /// Time-of-use base price, $/MWh; realized prices deviate around it.
    pub base_price: Profile,
    /// $/MW² on period-to-period tie-line steps.
    pub smoothing_step: f64,
    /// $/MW² on tie-line deviation from the day mean.
    pub smoothing_mean: f64,
    /// Weight on squared state-of-charge tracking error.
    pub track_soc_weight: f64,
    /// Weight on squared tie-line tracking error.
    pub track_grid_weight: f64,
    /// Interval length in hours.
    pub interval_hours: f64,
    /// Violation probability budget for random bounds.
    pub confidence: f64,
}

impl PricingSpec {
    fn check(&self, horizon: usize) -> Result<(), GridError> {
        self.base_price.check(horizon, "base price")?;
        if !(self.interval_hours > 0.0) {
            return Err(GridError::Invalid("interval must be positive".into()));
        }
        if !(self.confidence > 0.0 && self.confidence <= 0.5) {
            return Err(GridError::Invalid(format!(
                "confidence level {} outside (0, 0.5]",
                self.confidence
            )));
        }
        for (v, name) in [
            (self.smoothing_step, "step smoothing price"),
            (self.smoothing_mean, "mean smoothing price"),
            (self.track_soc_weight, "state-of-charge tracking weight"),
            (self.track_grid_weight, "tie-line tracking weight"),
        ] {
            if v < 0.0 {
                return Err(GridError::Invalid(format!("{name} must be nonnegative")));
            }
        }
        Ok(())
    }
}

/// Complete static description of the microgrid study case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrogridSpec {
    /// Periods per day.
    pub horizon: usize,
    /// Power factor applied to every load bus.
    #[serde(default = "default_power_factor")]
    pub load_power_factor: f64,
    pub network: NetworkSpec,
    #[serde(default)]
    pub ges: Vec<GesSpec>,
    #[serde(default)]
    pub dg: Vec<DgSpec>,
    #[serde(default)]
    pub res: Vec<ResSite>,
    #[serde(default)]
    pub load: Vec<LoadSite>,
    pub pricing: PricingSpec,
}

impl MicrogridSpec {
    /// Length of the per-round decision vector: charge and discharge per
    /// storage asset plus one output per generator.
    pub fn decision_dim(&self) -> usize {
        2 * self.ges.len() + self.dg.len()
    }

    /// MVar per MW of load at every load bus.
    pub fn load_reactive_ratio(&self) -> f64 {
        (1.0 / (self.load_power_factor * self.load_power_factor) - 1.0).sqrt()
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.horizon == 0 {
            return Err(GridError::Invalid("horizon must be at least 1".into()));
        }
        if !(self.load_power_factor > 0.0 && self.load_power_factor <= 1.0) {
            return Err(GridError::Invalid(format!(
                "load power factor {} outside (0, 1]",
                self.load_power_factor
            )));
        }
        self.network.index()?;
        let buses = self.network.bus_count;
        let mut ids = std::collections::HashSet::new();
        for ges in &self.ges {
            if !ids.insert(&ges.id) {
                return Err(GridError::Invalid(format!(
                    "duplicate device id '{}'",
                    ges.id
                )));
            }
            ges.check(self.horizon, buses)?;
        }
        for dg in &self.dg {
            if !ids.insert(&dg.id) {
                return Err(GridError::Invalid(format!(
                    "duplicate device id '{}'",
                    dg.id
                )));
            }
            dg.check(buses)?;
        }
        for site in &self.res {
            if !ids.insert(&site.id) {
                return Err(GridError::Invalid(format!(
                    "duplicate device id '{}'",
                    site.id
                )));
            }
            if site.bus >= buses {
                return Err(GridError::Invalid(format!(
                    "renewable '{}' sits on bus {} outside 0..{buses}",
                    site.id, site.bus
                )));
            }
            if !(site.rating_mw > 0.0) {
                return Err(GridError::Invalid(format!(
                    "renewable '{}' rating must be positive",
                    site.id
                )));
            }
        }
        for (k, site) in self.load.iter().enumerate() {
            if site.bus >= buses {
                return Err(GridError::Invalid(format!(
                    "load {k} sits on bus {} outside 0..{buses}",
                    site.bus
                )));
            }
            if site.peak_mw < 0.0 {
                return Err(GridError::Invalid(format!(
                    "load {k} peak must be nonnegative"
                )));
            }
        }
        self.pricing.check(self.horizon)?;
        Ok(())
    }
}

/// Realized exogenous data of one period: per-bus demand, per-bus renewable
/// output, and the energy price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub load_mw: Vec<f64>,
    pub load_mvar: Vec<f64>,
    pub res_mw: Vec<f64>,
    pub price: f64,
}

impl Realization {
    /// Builds a realization deriving reactive demand from the active demand
    /// through a uniform power factor.
    pub fn with_power_factor(
        load_mw: Vec<f64>,
        res_mw: Vec<f64>,
        price: f64,
        power_factor: f64,
    ) -> Self {
        let ratio = (1.0 / (power_factor * power_factor) - 1.0).sqrt();
        let load_mvar = load_mw.iter().map(|p| p * ratio).collect();
        Realization {
            load_mw,
            load_mvar,
            res_mw,
            price,
        }
    }

    pub fn total_load_mw(&self) -> f64 {
        self.load_mw.iter().sum()
    }

    pub fn total_res_mw(&self) -> f64 {
        self.res_mw.iter().sum()
    }

    pub fn check(&self, bus_count: usize, context: &str) -> Result<(), GridError> {
        for (vec, name) in [
            (&self.load_mw, "active load"),
            (&self.load_mvar, "reactive load"),
            (&self.res_mw, "renewable output"),
        ] {
            if vec.len() != bus_count {
                return Err(GridError::Invalid(format!(
                    "{context}: {name} covers {} of {bus_count} buses",
                    vec.len()
                )));
            }
            if let Some(bad) = vec.iter().find(|v| !v.is_finite()) {
                return Err(GridError::Invalid(format!("{context}: {name} has {bad}")));
            }
        }
        if self.load_mw.iter().any(|v| *v < 0.0) || self.res_mw.iter().any(|v| *v < 0.0) {
            return Err(GridError::Invalid(format!(
                "{context}: loads and renewable outputs must be nonnegative"
            )));
        }
        if !self.price.is_finite() {
            return Err(GridError::Invalid(format!("{context}: price {}", self.price)));
        }
        Ok(())
    }
}

/// One full day of realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDay {
    pub id: String,
    pub periods: Vec<Realization>,
}

impl ScenarioDay {
    pub fn check(&self, spec: &MicrogridSpec) -> Result<(), GridError> {
        if self.periods.len() != spec.horizon {
            return Err(GridError::Horizon {
                context: format!("scenario '{}'", self.id),
                expected: spec.horizon,
                found: self.periods.len(),
            });
        }
        for (t, real) in self.periods.iter().enumerate() {
            real.check(
                spec.network.bus_count,
                &format!("scenario '{}' period {t}", self.id),
            )?;
        }
        Ok(())
    }
}

/// The controllable per-round action: storage charge/discharge and generator
/// outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchDecision {
    pub charge_mw: Vec<f64>,
    pub discharge_mw: Vec<f64>,
    pub dg_mw: Vec<f64>,
}

impl DispatchDecision {
    pub fn idle(n_ges: usize, n_dg: usize) -> Self {
        DispatchDecision {
            charge_mw: vec![0.0; n_ges],
            discharge_mw: vec![0.0; n_ges],
            dg_mw: vec![0.0; n_dg],
        }
    }

    /// Flat layout `[charge..., discharge..., generator...]` used by the
    /// online optimizer.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(&self.charge_mw);
        out.extend_from_slice(&self.discharge_mw);
        out.extend_from_slice(&self.dg_mw);
        out
    }

    pub fn from_flat(x: &[f64], n_ges: usize, n_dg: usize) -> Self {
        assert_eq!(x.len(), 2 * n_ges + n_dg, "flat decision length mismatch");
        DispatchDecision {
            charge_mw: x[..n_ges].to_vec(),
            discharge_mw: x[n_ges..2 * n_ges].to_vec(),
            dg_mw: x[2 * n_ges..].to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.charge_mw.len() + self.dg_mw.len()
    }
}

/// Storage state advance over one interval: self-discharge decay, efficiency-
/// scaled charge minus efficiency-penalized discharge, plus the exogenous
/// drift of period `t`.
pub fn soc_transition(
    soc: f64,
    charge_mw: f64,
    discharge_mw: f64,
    ges: &GesSpec,
    dt_hours: f64,
    t: usize,
) -> f64 {
    (1.0 - ges.self_discharge) * soc
        + ges.charge_efficiency * charge_mw * dt_hours / ges.capacity_mwh
        - discharge_mw * dt_hours / (ges.discharge_efficiency * ges.capacity_mwh)
        + ges.baseline_drift.value(t)
}

/// Net import over the substation implied by lossless power balance:
/// demand minus renewables, generators, and net storage discharge. Positive
/// means buying from the upstream grid.
pub fn tie_line_power(x: &DispatchDecision, real: &Realization) -> f64 {
    let storage_net: f64 = x
        .discharge_mw
        .iter()
        .zip(&x.charge_mw)
        .map(|(d, c)| d - c)
        .sum();
    let dg: f64 = x.dg_mw.iter().sum();
    real.total_load_mw() - real.total_res_mw() - dg - storage_net
}

/// Operating cost of one interval, split by source.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageCost {
    /// Storage cycling cost, $.
    pub ges: f64,
    /// Energy exchange with the upstream grid, $ (negative when exporting at
    /// a positive price).
    pub grid: f64,
    /// Generator fuel cost, $.
    pub dg: f64,
}

impl StageCost {
    pub fn total(&self) -> f64 {
        self.ges + self.grid + self.dg
    }
}

impl std::ops::AddAssign for StageCost {
    fn add_assign(&mut self, rhs: StageCost) {
        self.ges += rhs.ges;
        self.grid += rhs.grid;
        self.dg += rhs.dg;
    }
}

/// Evaluates the per-interval operating cost of an action under a realized
/// period.
pub fn stage_cost(x: &DispatchDecision, real: &Realization, spec: &MicrogridSpec) -> StageCost {
    let dt = spec.pricing.interval_hours;
    let mut ges = 0.0;
    for (g, asset) in spec.ges.iter().enumerate() {
        ges += (asset.discharge_cost * x.discharge_mw[g] + asset.charge_cost * x.charge_mw[g]) * dt;
    }
    let mut dg = 0.0;
    for (d, unit) in spec.dg.iter().enumerate() {
        let p = x.dg_mw[d];
        dg += (unit.cost_quadratic * p * p + unit.cost_linear * p + unit.cost_fixed) * dt;
    }
    let grid = real.price * tie_line_power(x, real) * dt;
    StageCost { ges, grid, dg }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::network::Branch;

    fn test_ges() -> GesSpec {
        GesSpec {
            id: "es".into(),
            bus: 1,
            capacity_mwh: 1.0,
            charge_efficiency: 0.9,
            discharge_efficiency: 0.9,
            self_discharge: 0.0,
            baseline_drift: Profile::Constant(0.0),
            charge_cost: 5.0,
            discharge_cost: 20.0,
            charge_limit: StochasticBound::constant(1.0, 0.0),
            discharge_limit: StochasticBound::constant(1.0, 0.0),
            soc_upper: StochasticBound::constant(0.9, 0.0),
            soc_lower: StochasticBound::constant(0.1, 0.0),
            power_factor: 0.95,
            initial_soc: 0.5,
        }
    }

    fn test_spec() -> MicrogridSpec {
        MicrogridSpec {
            horizon: 2,
            load_power_factor: 0.95,
            network: NetworkSpec {
                bus_count: 2,
                branches: vec![Branch {
                    from: 0,
                    to: 1,
                    resistance: 0.01,
                    reactance: 0.01,
                }],
                slack_voltage: 1.0,
                base_mva: 1.0,
                v_min: 0.9,
                v_max: 1.1,
                monitored: vec![1],
            },
            ges: vec![test_ges()],
            dg: vec![DgSpec {
                id: "dg".into(),
                bus: 1,
                cost_quadratic: 10.0,
                cost_linear: 30.0,
                cost_fixed: 5.0,
                min_mw: 0.0,
                max_mw: 2.0,
                ramp_up_mw: 1.0,
                ramp_down_mw: 1.0,
            }],
            res: vec![],
            load: vec![LoadSite {
                bus: 1,
                peak_mw: 1.0,
            }],
            pricing: PricingSpec {
                base_price: Profile::Constant(100.0),
                smoothing_step: 0.0,
                smoothing_mean: 0.0,
                track_soc_weight: 0.0,
                track_grid_weight: 0.0,
                interval_hours: 1.0 / 12.0,
                confidence: 0.05,
            },
        }
    }

    fn realization(load: f64, res: f64, price: f64) -> Realization {
        Realization::with_power_factor(vec![0.0, load], vec![0.0, res], price, 0.95)
    }

    #[test]
    fn state_transition_hand_values() {
        let ges = test_ges();
        let dt = 1.0 / 12.0;
        let charged = soc_transition(0.5, 0.6, 0.0, &ges, dt, 0);
        assert!((charged - 0.545).abs() < 1e-12);
        let idle = soc_transition(0.5, 0.0, 0.0, &ges, dt, 0);
        assert!((idle - 0.5).abs() < 1e-15);
        let discharged = soc_transition(0.5, 0.0, 0.54, &ges, dt, 1);
        assert!((discharged - 0.45).abs() < 1e-12);
    }

    #[test]
    fn state_transition_applies_decay_and_drift() {
        let mut ges = test_ges();
        ges.self_discharge = 0.1;
        ges.baseline_drift = Profile::Series(vec![0.0, 0.02]);
        let next = soc_transition(0.5, 0.0, 0.0, &ges, 1.0 / 12.0, 1);
        assert!((next - 0.47).abs() < 1e-12);
    }

    #[test]
    fn tie_line_hand_values() {
        let x = DispatchDecision {
            charge_mw: vec![0.0],
            discharge_mw: vec![0.5],
            dg_mw: vec![1.0],
        };
        assert!((tie_line_power(&x, &realization(5.0, 2.0, 0.0)) - 1.5).abs() < 1e-12);

        let idle = DispatchDecision::idle(1, 1);
        assert!((tie_line_power(&idle, &realization(5.0, 0.0, 0.0)) - 5.0).abs() < 1e-12);
        assert!((tie_line_power(&idle, &realization(5.0, 6.0, 0.0)) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn tie_line_matches_the_network_solve() {
        // Lossless balance: substation import equals the netted withdrawals.
        let spec = test_spec();
        let x = DispatchDecision {
            charge_mw: vec![0.2],
            discharge_mw: vec![0.0],
            dg_mw: vec![0.7],
        };
        let real = realization(1.4, 0.3, 80.0);
        let mut withdrawal = real.load_mw.clone();
        withdrawal[1] += x.charge_mw[0] - x.discharge_mw[0] - x.dg_mw[0] - real.res_mw[1];
        let flow = spec
            .network
            .distflow_solve(&withdrawal, &real.load_mvar)
            .unwrap();
        assert!((tie_line_power(&x, &real) - flow.grid_mw).abs() < 1e-9);
    }

    #[test]
    fn stage_cost_hand_values() {
        let spec = test_spec();
        // Tie-line 1.5 MW at $100/MWh over five minutes.
        let x = DispatchDecision {
            charge_mw: vec![0.0],
            discharge_mw: vec![0.5],
            dg_mw: vec![1.0],
        };
        let real = realization(5.0, 2.0, 100.0);
        let cost = stage_cost(&x, &real, &spec);
        assert!((cost.grid - 12.5).abs() < 1e-12);
        // Discharge 0.5 MW at $20/MWh: 10/12 dollars.
        assert!((cost.ges - 10.0 / 12.0).abs() < 1e-12);
        assert!((cost.ges - 0.8333).abs() < 1e-4);
        // 10*1 + 30*1 + 5 = 45 $/h over five minutes.
        assert!((cost.dg - 3.75).abs() < 1e-12);
        assert!((cost.total() - (cost.ges + cost.grid + cost.dg)).abs() < 1e-15);
    }

    #[test]
    fn export_earns_revenue() {
        let spec = test_spec();
        let x = DispatchDecision::idle(1, 1);
        let real = realization(1.0, 3.0, 60.0);
        let cost = stage_cost(&x, &real, &spec);
        assert!((cost.grid + 2.0 * 60.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn flat_layout_roundtrips() {
        let x = DispatchDecision {
            charge_mw: vec![0.1, 0.2],
            discharge_mw: vec![0.3, 0.4],
            dg_mw: vec![0.5],
        };
        let flat = x.to_flat();
        assert_eq!(flat, vec![0.1, 0.2, 0.3, 0.4, 0.5]);
        assert_eq!(DispatchDecision::from_flat(&flat, 2, 1), x);
        assert_eq!(x.dim(), 5);
    }

    #[test]
    fn profiles_validate_and_index() {
        let flat = Profile::Constant(3.0);
        assert_eq!(flat.value(7), 3.0);
        assert!(flat.check(288, "x").is_ok());
        let series = Profile::Series(vec![1.0, 2.0]);
        assert_eq!(series.value(1), 2.0);
        assert!(series.check(2, "x").is_ok());
        assert!(matches!(
            series.check(3, "x"),
            Err(GridError::Horizon { expected: 3, found: 2, .. })
        ));
        assert!(Profile::Constant(f64::NAN).check(1, "x").is_err());
    }

    #[test]
    fn bound_tightening_uses_the_period_profile() {
        let bound = StochasticBound {
            mean: Profile::Series(vec![100.0, 50.0]),
            std: Profile::Constant(10.0),
            distribution: BoundDistribution::Gaussian,
        };
        let t0 = bound.tightened_upper(0, 0.05).unwrap();
        let t1 = bound.tightened_upper(1, 0.05).unwrap();
        assert!((t0 - 83.551).abs() < 1e-3);
        assert!((t1 - 33.551).abs() < 1e-3);
        let low = bound.tightened_lower(0, 0.05).unwrap();
        assert!((low - 116.449).abs() < 1e-3);
    }

    #[test]
    fn spec_validation_accepts_the_fixture() {
        assert!(test_spec().validate().is_ok());
    }

    #[test]
    fn spec_validation_rejects_bad_devices() {
        let mut spec = test_spec();
        spec.ges[0].discharge_cost = spec.ges[0].charge_cost;
        assert!(matches!(spec.validate(), Err(GridError::Invalid(_))));

        let mut spec = test_spec();
        spec.ges[0].charge_efficiency = 1.2;
        assert!(spec.validate().is_err());

        let mut spec = test_spec();
        spec.ges[0].bus = 9;
        assert!(spec.validate().is_err());

        let mut spec = test_spec();
        spec.dg[0].id = "es".into();
        assert!(spec.validate().is_err());

        let mut spec = test_spec();
        spec.dg[0].min_mw = 3.0;
        assert!(spec.validate().is_err());

        let mut spec = test_spec();
        spec.pricing.confidence = 0.7;
        assert!(spec.validate().is_err());

        let mut spec = test_spec();
        spec.ges[0].soc_upper = StochasticBound::constant(0.9, -1.0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn scenario_checks_cover_horizon_and_signs() {
        let spec = test_spec();
        let day = ScenarioDay {
            id: "d0".into(),
            periods: vec![realization(1.0, 0.0, 50.0); 2],
        };
        assert!(day.check(&spec).is_ok());

        let short = ScenarioDay {
            id: "d1".into(),
            periods: vec![realization(1.0, 0.0, 50.0)],
        };
        assert!(matches!(
            short.check(&spec),
            Err(GridError::Horizon { expected: 2, found: 1, .. })
        ));

        let mut negative = day.clone();
        negative.periods[1].load_mw[1] = -0.5;
        assert!(negative.check(&spec).is_err());
    }

    #[test]
    fn reactive_ratios_match_the_power_factor() {
        let spec = test_spec();
        // tan(acos(0.95))
        let expect = (1.0f64 / (0.95 * 0.95) - 1.0).sqrt();
        assert!((spec.load_reactive_ratio() - expect).abs() < 1e-15);
        assert!((spec.ges[0].reactive_ratio() - 0.328_684_105_178_863_2).abs() < 1e-12);
        let real = realization(2.0, 0.0, 0.0);
        assert!((real.load_mvar[1] - 2.0 * expect).abs() < 1e-12);
    }
}
