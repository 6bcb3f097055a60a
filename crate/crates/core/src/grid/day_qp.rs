//! The full-horizon dispatch problem as one convex quadratic program.
//!
//! Given a complete day of realizations, every period's storage, generator,
//! and tie-line decision is optimized jointly under storage dynamics, ramp
//! limits, probabilistically tightened device bounds, and voltage protection
//! at the monitored buses. Solving it with the realized day yields the
//! hindsight benchmark; solving it over historical days builds the reference
//! library.

use super::device::{DispatchDecision, MicrogridSpec, ScenarioDay};
use super::GridError;
use crate::solver::{solve_qp_with, AdmmSettings, QpBuilder, QuadraticProgram, SolveStatus};

/// Index map of the day problem's flat variable vector.
///
/// Variables are period-major: for period `t` the slots are storage charge
/// (one per asset), storage discharge, generator output, state of charge,
/// then the tie-line power. A single trailing variable holds the day-mean
/// tie-line level when the mean-deviation smoothing price is active.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DayQpLayout {
    pub horizon: usize,
    pub ges: usize,
    pub dg: usize,
    pub has_mean_var: bool,
}

impl DayQpLayout {
    pub fn for_spec(spec: &MicrogridSpec) -> Self {
        DayQpLayout {
            horizon: spec.horizon,
            ges: spec.ges.len(),
            dg: spec.dg.len(),
            has_mean_var: spec.pricing.smoothing_mean > 0.0,
        }
    }

    /// Variables per period.
    pub fn per_period(&self) -> usize {
        3 * self.ges + self.dg + 1
    }

    /// Total variable count.
    pub fn total(&self) -> usize {
        self.horizon * self.per_period() + usize::from(self.has_mean_var)
    }

    pub fn charge(&self, t: usize, g: usize) -> usize {
        debug_assert!(t < self.horizon && g < self.ges);
        t * self.per_period() + g
    }

    pub fn discharge(&self, t: usize, g: usize) -> usize {
        debug_assert!(t < self.horizon && g < self.ges);
        t * self.per_period() + self.ges + g
    }

    pub fn dg_output(&self, t: usize, k: usize) -> usize {
        debug_assert!(t < self.horizon && k < self.dg);
        t * self.per_period() + 2 * self.ges + k
    }

    pub fn soc(&self, t: usize, g: usize) -> usize {
        debug_assert!(t < self.horizon && g < self.ges);
        t * self.per_period() + 2 * self.ges + self.dg + g
    }

    pub fn grid(&self, t: usize) -> usize {
        debug_assert!(t < self.horizon);
        (t + 1) * self.per_period() - 1
    }

    pub fn mean_var(&self) -> Option<usize> {
        self.has_mean_var
            .then(|| self.horizon * self.per_period())
    }
}

/// A built day problem: the quadratic program plus the bookkeeping needed to
/// read a solution back and to report true costs (the program drops constant
/// terms, recorded in `offset`).
#[derive(Debug, Clone)]
pub struct DayProblem {
    pub qp: QuadraticProgram,
    pub layout: DayQpLayout,
    /// Constant operating cost (fixed generator cost) excluded from the
    /// quadratic form.
    pub offset: f64,
}

/// Solved day problem with typed accessors into the flat solution.
#[derive(Debug, Clone)]
pub struct DaySolution {
    pub values: Vec<f64>,
    pub layout: DayQpLayout,
    /// True operating cost: solver objective plus the constant offset.
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

impl DaySolution {
    pub fn grid(&self, t: usize) -> f64 {
        self.values[self.layout.grid(t)]
    }

    pub fn soc(&self, t: usize, g: usize) -> f64 {
        self.values[self.layout.soc(t, g)]
    }

    pub fn grid_series(&self) -> Vec<f64> {
        (0..self.layout.horizon).map(|t| self.grid(t)).collect()
    }

    pub fn soc_series(&self, g: usize) -> Vec<f64> {
        (0..self.layout.horizon)
            .map(|t| self.soc(t, g))
            .collect()
    }

    pub fn decision(&self, t: usize) -> DispatchDecision {
        DispatchDecision {
            charge_mw: (0..self.layout.ges)
                .map(|g| self.values[self.layout.charge(t, g)])
                .collect(),
            discharge_mw: (0..self.layout.ges)
                .map(|g| self.values[self.layout.discharge(t, g)])
                .collect(),
            dg_mw: (0..self.layout.dg)
                .map(|k| self.values[self.layout.dg_output(t, k)])
                .collect(),
        }
    }
}

impl DayProblem {
    /// Solves the program. Detected infeasibility is an error; hitting the
    /// iteration cap returns the best iterate with its status so callers can
    /// decide whether the accuracy suffices.
    pub fn solve(&self, settings: &AdmmSettings) -> Result<DaySolution, GridError> {
        let report = solve_qp_with(&self.qp, settings)?;
        if report.status == SolveStatus::InfeasibleDetected {
            return Err(GridError::Invalid(
                "day dispatch problem is infeasible under the given scenario".into(),
            ));
        }
        Ok(DaySolution {
            values: report.solution,
            layout: self.layout.clone(),
            objective: report.objective + self.offset,
            status: report.status,
            iterations: report.iterations,
        })
    }
}

/// Builds the day dispatch program for one scenario.
///
/// With `cycle` set, each storage asset must return to its initial state of
/// charge by the last period, which makes day costs comparable across days;
/// without it the optimizer may drain storage freely.
pub fn build_day_qp(
    spec: &MicrogridSpec,
    day: &ScenarioDay,
    cycle: bool,
) -> Result<DayProblem, GridError> {
    spec.validate()?;
    day.check(spec)?;
    let layout = DayQpLayout::for_spec(spec);
    let horizon = layout.horizon;
    let dt = spec.pricing.interval_hours;
    let eps = spec.pricing.confidence;
    let mut b = QpBuilder::new(layout.total());
    let mut offset = 0.0;

    // Per-GES voltage factor: MW of net charge maps to this much reactive
    // draw as well, so both sensitivities act together.
    let index = spec.network.index()?;
    let monitored: Vec<(Vec<f64>, Vec<f64>)> = spec
        .network
        .monitored
        .iter()
        .map(|&bus| spec.network.voltage_coefficients(&index, bus))
        .collect();

    for t in 0..horizon {
        let real = &day.periods[t];
        // Operating costs.
        for (g, asset) in spec.ges.iter().enumerate() {
            b.add_obj_linear(layout.charge(t, g), asset.charge_cost * dt);
            b.add_obj_linear(layout.discharge(t, g), asset.discharge_cost * dt);
        }
        for (k, unit) in spec.dg.iter().enumerate() {
            let p = layout.dg_output(t, k);
            b.add_obj_product(p, p, unit.cost_quadratic * dt);
            b.add_obj_linear(p, unit.cost_linear * dt);
            offset += unit.cost_fixed * dt;
        }
        b.add_obj_linear(layout.grid(t), real.price * dt);
        // Tie-line smoothing: squared steps from the second period on, plus
        // squared deviation from the (free) day-mean level.
        if t > 0 && spec.pricing.smoothing_step > 0.0 {
            b.add_obj_square(
                &[(layout.grid(t), 1.0), (layout.grid(t - 1), -1.0)],
                0.0,
                spec.pricing.smoothing_step,
            );
        }
        if let Some(mean) = layout.mean_var() {
            b.add_obj_square(
                &[(layout.grid(t), 1.0), (mean, -1.0)],
                0.0,
                spec.pricing.smoothing_mean,
            );
        }

        // Device boxes, tightened for the confidence level.
        for (g, asset) in spec.ges.iter().enumerate() {
            b.set_var_bounds(
                layout.charge(t, g),
                0.0,
                asset.charge_limit.tightened_upper(t, eps)?,
            );
            b.set_var_bounds(
                layout.discharge(t, g),
                0.0,
                asset.discharge_limit.tightened_upper(t, eps)?,
            );
            b.set_var_bounds(
                layout.soc(t, g),
                asset.soc_lower.tightened_lower(t, eps)?,
                asset.soc_upper.tightened_upper(t, eps)?,
            );
        }
        for (k, unit) in spec.dg.iter().enumerate() {
            b.set_var_bounds(layout.dg_output(t, k), unit.min_mw, unit.max_mw);
        }

        // Storage dynamics chain.
        for (g, asset) in spec.ges.iter().enumerate() {
            let gain = asset.charge_efficiency * dt / asset.capacity_mwh;
            let drain = dt / (asset.discharge_efficiency * asset.capacity_mwh);
            let keep = 1.0 - asset.self_discharge;
            let drift = asset.baseline_drift.value(t);
            let mut terms = vec![
                (layout.soc(t, g), 1.0),
                (layout.charge(t, g), -gain),
                (layout.discharge(t, g), drain),
            ];
            let rhs = if t == 0 {
                keep * asset.initial_soc + drift
            } else {
                terms.push((layout.soc(t - 1, g), -keep));
                drift
            };
            b.add_row(&terms, rhs, rhs);
        }

        // Tie-line definition: grid power balances net demand minus local
        // generation and storage discharge.
        let net_demand = real.total_load_mw() - real.total_res_mw();
        let mut balance = vec![(layout.grid(t), 1.0)];
        for k in 0..spec.dg.len() {
            balance.push((layout.dg_output(t, k), 1.0));
        }
        for g in 0..spec.ges.len() {
            balance.push((layout.discharge(t, g), 1.0));
            balance.push((layout.charge(t, g), -1.0));
        }
        b.add_row(&balance, net_demand, net_demand);

        // Generator ramps between consecutive periods.
        if t > 0 {
            for (k, unit) in spec.dg.iter().enumerate() {
                b.add_row(
                    &[(layout.dg_output(t, k), 1.0), (layout.dg_output(t - 1, k), -1.0)],
                    -unit.ramp_down_mw,
                    unit.ramp_up_mw,
                );
            }
        }

        // Voltage band at each monitored bus, using the linearized feeder
        // response around the period's exogenous withdrawals.
        for (dv_dp, dv_dq) in &monitored {
            let mut fixed = spec.network.slack_voltage;
            for bus in 0..spec.network.bus_count {
                fixed += dv_dp[bus] * (real.load_mw[bus] - real.res_mw[bus])
                    + dv_dq[bus] * real.load_mvar[bus];
            }
            let mut terms = Vec::with_capacity(2 * spec.ges.len() + spec.dg.len());
            for (g, asset) in spec.ges.iter().enumerate() {
                let kappa = dv_dp[asset.bus] + asset.reactive_ratio() * dv_dq[asset.bus];
                terms.push((layout.charge(t, g), kappa));
                terms.push((layout.discharge(t, g), -kappa));
            }
            for (k, unit) in spec.dg.iter().enumerate() {
                terms.push((layout.dg_output(t, k), -dv_dp[unit.bus]));
            }
            b.add_row(
                &terms,
                spec.network.v_min - fixed,
                spec.network.v_max - fixed,
            );
        }
    }

    if cycle {
        for (g, asset) in spec.ges.iter().enumerate() {
            b.add_row(
                &[(layout.soc(horizon - 1, g), 1.0)],
                asset.initial_soc,
                asset.initial_soc,
            );
        }
    }

    Ok(DayProblem {
        qp: b.finish()?,
        layout,
        offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::device::{stage_cost, tie_line_power, Realization};
    use crate::grid::ieee33::{ieee33_spec, tiny_spec};
    use crate::grid::indices::smoothing_penalty;
    use crate::oracles::lattice_minimize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat_day(spec: &MicrogridSpec, load_mw: f64, price: f64) -> ScenarioDay {
        let mut loads = vec![0.0; spec.network.bus_count];
        for site in &spec.load {
            loads[site.bus] += load_mw * site.peak_mw / total_peak(spec);
        }
        let res = vec![0.0; spec.network.bus_count];
        ScenarioDay {
            id: "flat".into(),
            periods: (0..spec.horizon)
                .map(|_| {
                    Realization::with_power_factor(
                        loads.clone(),
                        res.clone(),
                        price,
                        spec.load_power_factor,
                    )
                })
                .collect(),
        }
    }

    fn total_peak(spec: &MicrogridSpec) -> f64 {
        spec.load.iter().map(|l| l.peak_mw).sum()
    }

    #[test]
    fn layout_enumerates_every_variable_exactly_once() {
        let layout = DayQpLayout {
            horizon: 2,
            ges: 1,
            dg: 1,
            has_mean_var: true,
        };
        assert_eq!(layout.per_period(), 5);
        assert_eq!(layout.total(), 11);
        let mut seen = vec![false; layout.total()];
        for t in 0..2 {
            for i in [
                layout.charge(t, 0),
                layout.discharge(t, 0),
                layout.dg_output(t, 0),
                layout.soc(t, 0),
                layout.grid(t),
            ] {
                assert!(!seen[i], "index {i} assigned twice");
                seen[i] = true;
            }
        }
        let mean = layout.mean_var().unwrap();
        assert_eq!(mean, 10);
        seen[mean] = true;
        assert!(seen.iter().all(|&s| s));
        assert_eq!(layout.grid(1), 9);
    }

    #[test]
    fn built_problem_has_the_expected_shape() {
        let spec = tiny_spec(2);
        let day = flat_day(&spec, 0.6, 100.0);
        let with_cycle = build_day_qp(&spec, &day, true).unwrap();
        let free = build_day_qp(&spec, &day, false).unwrap();
        assert_eq!(with_cycle.qp.num_vars(), 11);
        // Two dynamics rows, two balance rows, one ramp row, two voltage
        // rows, plus the cycle row.
        assert_eq!(with_cycle.qp.num_rows(), 8);
        assert_eq!(free.qp.num_rows(), 7);
        assert_eq!(with_cycle.offset, 0.0);
    }

    #[test]
    fn study_case_problem_has_consistent_dimensions() {
        let spec = ieee33_spec(288);
        let day = flat_day(&spec, 4.0, 80.0);
        let problem = build_day_qp(&spec, &day, true).unwrap();
        // 3 storage slots x2 assets + 1 generator + grid = 8 per period.
        assert_eq!(problem.layout.per_period(), 8);
        assert_eq!(problem.qp.num_vars(), 288 * 8 + 1);
        // dynamics 2T + balance T + ramps (T-1) + voltage 2T + cycle 2.
        assert_eq!(problem.qp.num_rows(), 2 * 288 + 288 + 287 + 2 * 288 + 2);
        assert!((problem.offset - 288.0 * 5.0 / 12.0).abs() < 1e-9);
    }

    #[test]
    fn a_handwritten_dispatch_satisfies_every_row() {
        let spec = tiny_spec(2);
        let day = flat_day(&spec, 0.6, 100.0);
        let problem = build_day_qp(&spec, &day, false).unwrap();
        let layout = &problem.layout;
        // Idle storage, generator at 0.4 MW, grid covers the remaining load.
        let mut x = vec![0.0; layout.total()];
        for t in 0..2 {
            x[layout.dg_output(t, 0)] = 0.4;
            x[layout.soc(t, 0)] = 0.5;
            x[layout.grid(t)] = 0.2;
        }
        x[layout.mean_var().unwrap()] = 0.2;
        let mut rows = vec![0.0; problem.qp.num_rows()];
        problem.qp.rows.matvec(&x, &mut rows);
        for (r, value) in rows.iter().enumerate() {
            assert!(
                problem.qp.row_lower[r] - 1e-9 <= *value
                    && *value <= problem.qp.row_upper[r] + 1e-9,
                "row {r}: {value} outside [{}, {}]",
                problem.qp.row_lower[r],
                problem.qp.row_upper[r]
            );
        }
        for i in 0..layout.total() {
            assert!(problem.qp.var_lower[i] <= x[i] && x[i] <= problem.qp.var_upper[i]);
        }
        // Objective: fuel (2*0.16 + 50*0.4)/12 per period, energy 100*0.2/12
        // per period, zero smoothing for the flat profile.
        let per_period = (2.0 * 0.16 + 50.0 * 0.4) / 12.0 + 100.0 * 0.2 / 12.0;
        assert!((problem.qp.objective(&x) - 2.0 * per_period).abs() < 1e-9);
    }

    #[test]
    fn solver_agrees_with_a_brute_force_oracle() {
        // Two periods, cheap energy first, expensive second: worth cycling
        // the (lossless) storage. Search over net storage power in period
        // one (the cycle constraint fixes period two) and both generator
        // outputs.
        let spec = tiny_spec(2);
        let day = ScenarioDay {
            id: "spread".into(),
            periods: vec![
                Realization::with_power_factor(vec![0.0, 1.0], vec![0.0, 0.0], 20.0, 0.95),
                Realization::with_power_factor(vec![0.0, 1.0], vec![0.0, 0.0], 200.0, 0.95),
            ],
        };
        let problem = build_day_qp(&spec, &day, true).unwrap();
        let solution = problem.solve(&AdmmSettings::default()).unwrap();
        assert_eq!(solution.status, SolveStatus::Optimal);

        let objective = |z: &[f64]| {
            let (u, p0, p1) = (z[0], z[1], z[2]);
            let splits = [(u.max(0.0), (-u).max(0.0), p0), ((-u).max(0.0), u.max(0.0), p1)];
            let mut total = 0.0;
            let mut grid = Vec::new();
            for (t, (c, d, p)) in splits.iter().enumerate() {
                let x = DispatchDecision {
                    charge_mw: vec![*c],
                    discharge_mw: vec![*d],
                    dg_mw: vec![*p],
                };
                total += stage_cost(&x, &day.periods[t], &spec).total();
                grid.push(tie_line_power(&x, &day.periods[t]));
            }
            total + smoothing_penalty(&grid, None, 1.0, 1.0)
        };
        let (_, oracle) = lattice_minimize(
            &[-1.0, 0.0, 0.0],
            &[1.0, 1.0, 1.0],
            201,
            |_| true,
            objective,
        );
        assert!(
            solution.objective <= oracle + 1e-4,
            "solver {} worse than a lattice point {oracle}",
            solution.objective
        );
        assert!(
            (solution.objective - oracle).abs() <= 0.02 * oracle.abs().max(1.0),
            "solver {} vs oracle {oracle}",
            solution.objective
        );
        // The price spread makes charging cheap and discharging dear: the
        // storage should buy in period one and sell in period two.
        assert!(solution.values[problem.layout.charge(0, 0)] > 0.5);
        assert!(solution.values[problem.layout.discharge(1, 0)] > 0.5);
    }

    #[test]
    fn cycle_flag_pins_the_final_state_of_charge() {
        let spec = tiny_spec(6);
        let day = flat_day(&spec, 0.6, 100.0);
        let settings = AdmmSettings::default();
        let pinned = build_day_qp(&spec, &day, true)
            .unwrap()
            .solve(&settings)
            .unwrap();
        assert!((pinned.soc(5, 0) - 0.5).abs() < 1e-5);
        // Without the cycle row, selling stored energy at 100 $/MWh beats
        // keeping it, so the optimizer drains the asset.
        let free = build_day_qp(&spec, &day, false)
            .unwrap()
            .solve(&settings)
            .unwrap();
        assert!(free.soc(5, 0) < 0.2);
    }

    #[test]
    fn solutions_respect_device_and_voltage_limits() {
        let spec = tiny_spec(6);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let day = ScenarioDay {
            id: "random".into(),
            periods: (0..6)
                .map(|_| {
                    Realization::with_power_factor(
                        vec![0.0, rng.gen_range(0.0..1.0)],
                        vec![0.0, 0.0],
                        rng.gen_range(20.0..200.0),
                        0.95,
                    )
                })
                .collect(),
        };
        let problem = build_day_qp(&spec, &day, true).unwrap();
        let solution = problem.solve(&AdmmSettings::default()).unwrap();
        assert_eq!(solution.status, SolveStatus::Optimal);
        let tol = 1e-5;
        for t in 0..6 {
            let x = solution.decision(t);
            assert!(x.charge_mw[0] >= -tol && x.charge_mw[0] <= 1.0 + tol);
            assert!(x.discharge_mw[0] >= -tol && x.discharge_mw[0] <= 1.0 + tol);
            assert!(x.dg_mw[0] >= -tol && x.dg_mw[0] <= 1.0 + tol);
            assert!(solution.soc(t, 0) >= 0.1 - tol && solution.soc(t, 0) <= 0.9 + tol);
            // The stored tie-line power must match the balance identity.
            let tie = tie_line_power(&x, &day.periods[t]);
            assert!((tie - solution.grid(t)).abs() < 1e-4);
            // Replay the voltages through the feeder model.
            let mut withdrawal = day.periods[t].load_mw.clone();
            let mut reactive = day.periods[t].load_mvar.clone();
            let net = x.charge_mw[0] - x.discharge_mw[0];
            withdrawal[1] += net - x.dg_mw[0];
            reactive[1] += net * spec.ges[0].reactive_ratio();
            let flow = spec.network.distflow_solve(&withdrawal, &reactive).unwrap();
            assert!(flow.voltage_pu[1] >= 0.9 - 1e-4 && flow.voltage_pu[1] <= 1.1 + 1e-4);
        }
        // The state-of-charge chain reproduces the stored path.
        let mut soc = spec.ges[0].initial_soc;
        for t in 0..6 {
            let x = solution.decision(t);
            soc = crate::grid::device::soc_transition(
                soc,
                x.charge_mw[0],
                x.discharge_mw[0],
                &spec.ges[0],
                spec.pricing.interval_hours,
                t,
            );
            assert!((soc - solution.soc(t, 0)).abs() < 1e-4);
        }
    }

    #[test]
    fn study_case_solves_for_a_plain_day() {
        // One-hour-per-period variant keeps the program small while still
        // exercising the feeder: the monitored voltages must stay inside the
        // band at a demanding but realistic loading.
        let spec = ieee33_spec(24);
        let day = flat_day(&spec, 4.4, 80.0);
        let problem = build_day_qp(&spec, &day, true).unwrap();
        let solution = problem.solve(&AdmmSettings::default()).unwrap();
        assert_eq!(solution.status, SolveStatus::Optimal);
        for t in 0..24 {
            let x = solution.decision(t);
            let mut withdrawal = day.periods[t].load_mw.clone();
            let mut reactive = day.periods[t].load_mvar.clone();
            for (g, asset) in spec.ges.iter().enumerate() {
                let net = x.charge_mw[g] - x.discharge_mw[g];
                withdrawal[asset.bus] += net;
                reactive[asset.bus] += net * asset.reactive_ratio();
            }
            for (k, unit) in spec.dg.iter().enumerate() {
                withdrawal[unit.bus] -= x.dg_mw[k];
            }
            let flow = spec.network.distflow_solve(&withdrawal, &reactive).unwrap();
            for &bus in &spec.network.monitored {
                assert!(
                    flow.voltage_pu[bus] >= spec.network.v_min - 1e-4
                        && flow.voltage_pu[bus] <= spec.network.v_max + 1e-4,
                    "period {t} bus {bus}: {} outside the band",
                    flow.voltage_pu[bus]
                );
            }
        }
    }

    #[test]
    fn impossible_state_targets_are_reported_infeasible() {
        let mut spec = tiny_spec(2);
        // Require at least 0.8 state of charge while starting from 0.5 with
        // a charge limit too small to get there in two periods.
        spec.ges[0].soc_lower = crate::grid::device::StochasticBound::constant(0.8, 0.0);
        let day = flat_day(&spec, 0.6, 100.0);
        let problem = build_day_qp(&spec, &day, false).unwrap();
        assert!(problem.solve(&AdmmSettings::default()).is_err());
    }

    #[test]
    fn scenario_length_must_match_the_horizon() {
        let spec = tiny_spec(2);
        let mut day = flat_day(&spec, 0.6, 100.0);
        day.periods.pop();
        let err = build_day_qp(&spec, &day, false).unwrap_err();
        assert!(matches!(err, GridError::Horizon { expected: 2, found: 1, .. }));
    }
}
