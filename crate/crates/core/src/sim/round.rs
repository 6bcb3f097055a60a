//! Per-round problem assembly: the feasible action set known at decision
//! time, the cost and monitored voltage rows revealed afterwards, and the
//! strict reference-tracking action used by the controller-free policy.

use crate::grid::{DispatchDecision, GesSpec, GridError, MicrogridSpec, Realization};
use crate::oco::QuadraticCost;
use crate::solver::{
    solve_qp_with, AdmmSettings, AffineBlock, BoundedRow, DecisionSet, QpBuilder, SolveError,
    SolveStatus,
};

use super::{SimError, SystemState};

/// Reference values one round's action is pulled toward.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingTargets {
    /// Desired post-action state of charge per storage asset.
    pub soc: Vec<f64>,
    /// Desired tie-line power, MW.
    pub grid: f64,
}

/// One revealed round: the convex cost, the monitored voltage rows in
/// `≤ 0` form, and the action set the decision was restricted to.
#[derive(Debug, Clone)]
pub struct RoundProblem {
    pub cost: QuadraticCost,
    pub strain: AffineBlock,
    pub feasible: DecisionSet,
    /// Widening applied to every state-of-charge corridor to keep the action
    /// set nonempty; zero on ordinary rounds.
    pub soc_slack: f64,
}

/// Linear pieces of the storage transition at one period: the post-action
/// state of charge is `keep·soc + gain·charge − drain·discharge + drift`.
pub(crate) struct SocPieces {
    pub gain: f64,
    pub drain: f64,
    pub keep: f64,
    pub drift: f64,
}

pub(crate) fn soc_pieces(asset: &GesSpec, dt_hours: f64, t: usize) -> SocPieces {
    SocPieces {
        gain: asset.charge_efficiency * dt_hours / asset.capacity_mwh,
        drain: dt_hours / (asset.discharge_efficiency * asset.capacity_mwh),
        keep: 1.0 - asset.self_discharge,
        drift: asset.baseline_drift.value(t),
    }
}

/// Builds the action set for the round the state points at: probabilistically
/// tightened power boxes, generator limits intersected with ramps around the
/// previous output, and one state-of-charge corridor row per storage asset.
///
/// When a corridor cannot be reached from the current state of charge (or is
/// empty outright), every corridor is widened by the smallest uniform slack
/// that restores a feasible action; the applied slack is returned alongside
/// the set and is zero in the ordinary case.
pub fn round_feasible_set(
    spec: &MicrogridSpec,
    state: &SystemState,
) -> Result<(DecisionSet, f64), SimError> {
    let t = state.period;
    let eps = spec.pricing.confidence;
    let dt = spec.pricing.interval_hours;
    let n_g = spec.ges.len();
    let dim = spec.decision_dim();
    let mut lower = vec![0.0; dim];
    let mut upper = vec![0.0; dim];

    struct Corridor {
        gain: f64,
        drain: f64,
        low: f64,
        high: f64,
    }
    let mut corridors = Vec::with_capacity(n_g);
    let mut slack = 0.0f64;
    for (g, asset) in spec.ges.iter().enumerate() {
        let charge_cap = asset.charge_limit.tightened_upper(t, eps)?;
        let discharge_cap = asset.discharge_limit.tightened_upper(t, eps)?;
        for (cap, what) in [(charge_cap, "charge"), (discharge_cap, "discharge")] {
            if cap < 0.0 {
                return Err(GridError::Invalid(format!(
                    "storage '{}' tightened {what} limit is negative ({cap}) at period {t}",
                    asset.id
                ))
                .into());
            }
        }
        upper[g] = charge_cap;
        upper[n_g + g] = discharge_cap;

        let p = soc_pieces(asset, dt, t);
        let carried = p.keep * state.soc[g] + p.drift;
        let low = asset.soc_lower.tightened_lower(t, eps)? - carried;
        let high = asset.soc_upper.tightened_upper(t, eps)? - carried;
        // The corridor bounds gain·charge − drain·discharge, whose range over
        // the power box is [−drain·discharge_cap, gain·charge_cap]; the slack
        // must cover an inverted corridor as well as an out-of-reach one.
        let needed = 0.0f64
            .max((low - high) / 2.0)
            .max(low - p.gain * charge_cap)
            .max(-p.drain * discharge_cap - high);
        slack = slack.max(needed);
        corridors.push(Corridor {
            gain: p.gain,
            drain: p.drain,
            low,
            high,
        });
    }

    for (k, unit) in spec.dg.iter().enumerate() {
        let i = 2 * n_g + k;
        let mut lo = unit.min_mw;
        let mut hi = unit.max_mw;
        if let Some(prev) = &state.prev_dg {
            lo = lo.max(prev[k] - unit.ramp_down_mw);
            hi = hi.min(prev[k] + unit.ramp_up_mw);
        }
        lower[i] = lo;
        upper[i] = hi;
    }

    let rows = corridors
        .iter()
        .enumerate()
        .map(|(g, c)| BoundedRow {
            terms: vec![(g, c.gain), (n_g + g, -c.drain)],
            lower: c.low - slack,
            upper: c.high + slack,
        })
        .collect();
    let set = DecisionSet { lower, upper, rows };
    set.validate()?;
    Ok((set, slack))
}

/// The revealed cost of one round: storage cycling, generator fuel, and the
/// energy exchange at the realized price, plus (when targets are given) the
/// weighted squared tracking error of the post-action state of charge and of
/// the tie-line power. Every term is affine or squared-affine in the action,
/// so the result is convex.
pub fn round_cost(
    spec: &MicrogridSpec,
    state: &SystemState,
    targets: Option<&TrackingTargets>,
    real: &Realization,
) -> QuadraticCost {
    let t = state.period;
    let dt = spec.pricing.interval_hours;
    let n_g = spec.ges.len();
    let mut cost = QuadraticCost::zero(spec.decision_dim());

    for (g, asset) in spec.ges.iter().enumerate() {
        cost.add_linear(g, asset.charge_cost * dt);
        cost.add_linear(n_g + g, asset.discharge_cost * dt);
    }
    for (k, unit) in spec.dg.iter().enumerate() {
        let i = 2 * n_g + k;
        if unit.cost_quadratic > 0.0 {
            cost.add_square(&[(i, 1.0)], 0.0, unit.cost_quadratic * dt);
        }
        cost.add_linear(i, unit.cost_linear * dt);
        cost.add_constant(unit.cost_fixed * dt);
    }
    // The tie-line buys whatever demand the local devices leave uncovered,
    // so charging raises the bill while discharge and generation lower it.
    let net = real.total_load_mw() - real.total_res_mw();
    let traded = real.price * dt;
    for g in 0..n_g {
        cost.add_linear(g, traded);
        cost.add_linear(n_g + g, -traded);
    }
    for k in 0..spec.dg.len() {
        cost.add_linear(2 * n_g + k, -traded);
    }
    cost.add_constant(traded * net);

    if let Some(tr) = targets {
        let phi_soc = spec.pricing.track_soc_weight;
        let phi_grid = spec.pricing.track_grid_weight;
        if phi_soc > 0.0 {
            for (g, asset) in spec.ges.iter().enumerate() {
                let p = soc_pieces(asset, dt, t);
                let shift = p.keep * state.soc[g] + p.drift - tr.soc[g];
                cost.add_square(&[(g, p.gain), (n_g + g, -p.drain)], shift, phi_soc);
            }
        }
        if phi_grid > 0.0 {
            cost.add_square(&grid_terms(spec), net - tr.grid, phi_grid);
        }
    }
    cost
}

/// Coefficients of the tie-line power as a function of the action: `+1` per
/// charge, `−1` per discharge and generator output.
fn grid_terms(spec: &MicrogridSpec) -> Vec<(usize, f64)> {
    let n_g = spec.ges.len();
    let mut terms = Vec::with_capacity(spec.decision_dim());
    for g in 0..n_g {
        terms.push((g, 1.0));
        terms.push((n_g + g, -1.0));
    }
    for k in 0..spec.dg.len() {
        terms.push((2 * n_g + k, -1.0));
    }
    terms
}

/// Linearized voltage response of the monitored buses, built once per study
/// case and evaluated against each period's realization.
#[derive(Debug, Clone)]
pub struct VoltageModel {
    monitored: Vec<usize>,
    coeffs: Vec<(Vec<f64>, Vec<f64>)>,
    v_min: f64,
    v_max: f64,
    slack_voltage: f64,
}

impl VoltageModel {
    pub fn for_spec(spec: &MicrogridSpec) -> Result<Self, GridError> {
        let index = spec.network.index()?;
        let coeffs = spec
            .network
            .monitored
            .iter()
            .map(|&bus| spec.network.voltage_coefficients(&index, bus))
            .collect();
        Ok(VoltageModel {
            monitored: spec.network.monitored.clone(),
            coeffs,
            v_min: spec.network.v_min,
            v_max: spec.network.v_max,
            slack_voltage: spec.network.slack_voltage,
        })
    }

    /// Two rows per monitored bus: upper band edge, then lower.
    pub fn rows(&self) -> usize {
        2 * self.monitored.len()
    }

    pub fn monitored(&self) -> &[usize] {
        &self.monitored
    }

    /// Voltage at each monitored bus before any dispatch acts, from the
    /// period's demand and renewable output alone.
    fn baseline(&self, spec: &MicrogridSpec, real: &Realization) -> Vec<f64> {
        self.coeffs
            .iter()
            .map(|(dv_dp, dv_dq)| {
                let mut v = self.slack_voltage;
                for bus in 0..spec.network.bus_count {
                    v += dv_dp[bus] * (real.load_mw[bus] - real.res_mw[bus])
                        + dv_dq[bus] * real.load_mvar[bus];
                }
                v
            })
            .collect()
    }

    /// Voltage change per unit of each action entry at one monitored bus.
    /// Storage moves active and (through its converter) reactive power,
    /// generators inject at unity power factor.
    fn device_row(&self, spec: &MicrogridSpec, which: usize) -> Vec<f64> {
        let (dv_dp, dv_dq) = &self.coeffs[which];
        let n_g = spec.ges.len();
        let mut row = vec![0.0; spec.decision_dim()];
        for (g, asset) in spec.ges.iter().enumerate() {
            let kappa = dv_dp[asset.bus] + asset.reactive_ratio() * dv_dq[asset.bus];
            row[g] += kappa;
            row[n_g + g] -= kappa;
        }
        for (k, unit) in spec.dg.iter().enumerate() {
            row[2 * n_g + k] -= dv_dp[unit.bus];
        }
        row
    }

    /// The monitored voltage band as `≤ 0` rows: for each bus, first
    /// `v(x) − v_max`, then `v_min − v(x)`.
    pub fn strain(&self, spec: &MicrogridSpec, real: &Realization) -> AffineBlock {
        let dim = spec.decision_dim();
        let baseline = self.baseline(spec, real);
        let mut coeffs = Vec::with_capacity(self.rows() * dim);
        let mut offsets = Vec::with_capacity(self.rows());
        for (which, v0) in baseline.iter().enumerate() {
            let mut row = self.device_row(spec, which);
            coeffs.extend_from_slice(&row);
            offsets.push(v0 - self.v_max);
            for v in &mut row {
                *v = -*v;
            }
            coeffs.extend_from_slice(&row);
            offsets.push(self.v_min - v0);
        }
        AffineBlock::new(self.rows(), dim, coeffs, offsets)
    }
}

/// Realized voltages at the monitored buses after applying `action`, from a
/// full feeder flow solve on the period's withdrawals.
pub fn realized_voltages(
    spec: &MicrogridSpec,
    action: &DispatchDecision,
    real: &Realization,
) -> Result<Vec<f64>, GridError> {
    let n = spec.network.bus_count;
    let mut withdrawal_mw = vec![0.0; n];
    let mut withdrawal_mvar = vec![0.0; n];
    for bus in 0..n {
        withdrawal_mw[bus] = real.load_mw[bus] - real.res_mw[bus];
        withdrawal_mvar[bus] = real.load_mvar[bus];
    }
    for (g, asset) in spec.ges.iter().enumerate() {
        let net = action.charge_mw[g] - action.discharge_mw[g];
        withdrawal_mw[asset.bus] += net;
        withdrawal_mvar[asset.bus] += asset.reactive_ratio() * net;
    }
    for (k, unit) in spec.dg.iter().enumerate() {
        withdrawal_mw[unit.bus] -= action.dg_mw[k];
    }
    let flow = spec.network.distflow_solve(&withdrawal_mw, &withdrawal_mvar)?;
    Ok(spec
        .network
        .monitored
        .iter()
        .map(|&bus| flow.voltage_pu[bus])
        .collect())
}

/// Composes the full revealed problem of one round.
pub fn build_round_problem(
    spec: &MicrogridSpec,
    volt: &VoltageModel,
    state: &SystemState,
    targets: Option<&TrackingTargets>,
    real: &Realization,
) -> Result<RoundProblem, SimError> {
    let (feasible, soc_slack) = round_feasible_set(spec, state)?;
    Ok(RoundProblem {
        cost: round_cost(spec, state, targets, real),
        strain: volt.strain(spec, real),
        feasible,
        soc_slack,
    })
}

/// The strict-tracking action: the feasible point whose post-action state of
/// charge — and, via the supplied net-demand estimate, tie-line power — is
/// closest to the reference under the configured tracking weights. Falls
/// back to unit weights if both are zero, so the projection stays defined.
pub(crate) fn solve_tracking_round(
    spec: &MicrogridSpec,
    state: &SystemState,
    targets: &TrackingTargets,
    net_demand_estimate: f64,
    feasible: &DecisionSet,
    settings: &AdmmSettings,
) -> Result<Vec<f64>, SolveError> {
    let dt = spec.pricing.interval_hours;
    let n_g = spec.ges.len();
    let dim = spec.decision_dim();
    let mut weight_soc = spec.pricing.track_soc_weight;
    let mut weight_grid = spec.pricing.track_grid_weight;
    if weight_soc <= 0.0 && weight_grid <= 0.0 {
        weight_soc = 1.0;
        weight_grid = 1.0;
    }

    let mut b = QpBuilder::new(dim);
    for i in 0..dim {
        b.set_var_bounds(i, feasible.lower[i], feasible.upper[i]);
    }
    for row in &feasible.rows {
        b.add_row(&row.terms, row.lower, row.upper);
    }
    for (g, asset) in spec.ges.iter().enumerate() {
        let p = soc_pieces(asset, dt, state.period);
        let shift = p.keep * state.soc[g] + p.drift - targets.soc[g];
        b.add_obj_square(&[(g, p.gain), (n_g + g, -p.drain)], shift, weight_soc);
    }
    b.add_obj_square(
        &grid_terms(spec),
        net_demand_estimate - targets.grid,
        weight_grid,
    );

    let report = solve_qp_with(&b.finish()?, settings)?;
    if report.status != SolveStatus::Optimal {
        return Err(SolveError::NotConverged {
            status: report.status,
            iterations: report.iterations,
            primal: report.primal_residual,
            dual: report.dual_residual,
        });
    }
    Ok(report.solution)
}
