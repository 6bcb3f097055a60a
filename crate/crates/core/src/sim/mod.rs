//! Day-long closed-loop dispatch simulation.
//!
//! A day is played as a sequence of rounds. At each round the dispatcher
//! commits a charge/discharge/generation action inside the set allowed by
//! the current storage state and ramp history; only then is the period's
//! demand, renewable output, and price revealed (through an optional
//! observation-noise layer), the round's cost and monitored voltage rows
//! are scored, and the physical state advances under the exact realization.
//!
//! Four online policies share this loop and differ only in how they pick
//! the action; a separate full-horizon solve with hindsight of the whole
//! day provides the offline yardstick. Every run produces the same
//! [`DayResult`] report, so policies are compared on identical footing.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grid::{
    build_day_qp, stage_cost, tie_line_power, voltage_satisfaction, DispatchDecision, GridError,
    MicrogridSpec, Realization, ScenarioDay, StageCost,
};
use crate::grid::{fluctuation_indices, smoothing_penalty};
use crate::oco::{
    compute_metrics, AdaptiveController, OcoError, OcoMetrics, ParamSchedule, RoundRecord,
};
use crate::reference::{reference, ExPostSequences, ReferenceState, ScenarioLibrary};
use crate::solver::{AdmmSettings, SolveError, SolveStatus};

mod benchmark;
mod noise;
mod round;

pub use benchmark::{round_benchmark, synthetic_oco_benchmark, BenchmarkCoverage};
pub use noise::inject_noise;
pub use round::{
    build_round_problem, realized_voltages, round_cost, round_feasible_set, RoundProblem,
    TrackingTargets, VoltageModel,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Policy label reported by the hindsight run, which plays no online policy.
pub const HINDSIGHT: &str = "hindsight";

/// Slack added to both voltage band edges when grading realized voltages,
/// absorbing converged-solver residual so a dispatch that satisfies the band
/// to solver accuracy grades as satisfying it.
pub const VOLTAGE_GRADE_TOLERANCE: f64 = 1e-6;

/// Simulation failure: a model or data problem, a solver giving up, or
/// either of those pinned to the round it occurred in.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Oco(#[from] OcoError),
    #[error(transparent)]
    Solver(#[from] SolveError),
    #[error("round {round}: {source}")]
    Round { round: usize, source: Box<SimError> },
    #[error("full-horizon dispatch ended {status:?} after {iterations} iterations")]
    DayNotConverged {
        status: SolveStatus,
        iterations: usize,
    },
}

impl SimError {
    pub fn at_round(round: usize, source: impl Into<SimError>) -> Self {
        SimError::Round {
            round,
            source: Box::new(source.into()),
        }
    }
}

/// The online dispatch policies.
///
/// * `Adaptive` — the full method: the no-regret controller on round costs
///   that pull toward a reference re-weighted online from observations.
/// * `FixedReference` — the same controller, but the reference keeps its
///   initial uniform blend of the library all day.
/// * `Tracking` — no controller: each round takes the feasible action
///   closest to the reference under the tracking weights.
/// * `Greedy` — the controller on bare operating cost, with no reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Adaptive,
    FixedReference,
    Tracking,
    Greedy,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::Adaptive,
        Policy::FixedReference,
        Policy::Tracking,
        Policy::Greedy,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Adaptive => "adaptive",
            Policy::FixedReference => "fixed-reference",
            Policy::Tracking => "tracking",
            Policy::Greedy => "greedy",
        }
    }

    /// Stable identifier mixed into the random stream so each policy draws
    /// independent noise even under the same master seed and day.
    pub fn stream_code(&self) -> u64 {
        match self {
            Policy::Adaptive => 1,
            Policy::FixedReference => 2,
            Policy::Tracking => 3,
            Policy::Greedy => 4,
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL
            .iter()
            .find(|p| p.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = Policy::ALL.iter().map(|p| p.name()).collect();
                format!("unknown policy '{s}', expected one of: {}", names.join(", "))
            })
    }
}

/// Everything the dispatcher carries between rounds: the period about to be
/// played, each storage asset's state of charge, and the previous generator
/// outputs and tie-line power that anchor ramps.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub period: usize,
    pub soc: Vec<f64>,
    /// Generator outputs of the previous period; absent before the first.
    pub prev_dg: Option<Vec<f64>>,
    /// Tie-line power of the previous period; absent before the first.
    pub prev_grid: Option<f64>,
}

impl SystemState {
    pub fn initial(spec: &MicrogridSpec) -> Self {
        SystemState {
            period: 0,
            soc: spec.ges.iter().map(|g| g.initial_soc).collect(),
            prev_dg: None,
            prev_grid: None,
        }
    }

    /// Advances the physical state one period under the applied action and
    /// the exact realization.
    pub fn apply(&mut self, spec: &MicrogridSpec, action: &DispatchDecision, real: &Realization) {
        let t = self.period;
        let dt = spec.pricing.interval_hours;
        for (g, asset) in spec.ges.iter().enumerate() {
            self.soc[g] = crate::grid::soc_transition(
                self.soc[g],
                action.charge_mw[g],
                action.discharge_mw[g],
                asset,
                dt,
                t,
            );
        }
        self.prev_dg = Some(action.dg_mw.clone());
        self.prev_grid = Some(tie_line_power(action, real));
        self.period += 1;
    }
}

/// Shared inputs of every run over one study case: the system, the scenario
/// library with its precomputed full-horizon sequences, the controller's
/// step schedule, the reference kernel bandwidth, the observation noise
/// level in percent, and the solver settings.
#[derive(Debug, Clone)]
pub struct DayContext<'a> {
    pub spec: &'a MicrogridSpec,
    pub library: &'a ScenarioLibrary,
    pub sequences: &'a ExPostSequences,
    pub schedule: ParamSchedule,
    pub bandwidth: f64,
    pub noise_pct: f64,
    pub settings: AdmmSettings,
}

impl<'a> DayContext<'a> {
    /// A context with the default schedule for the case's horizon, unit
    /// kernel bandwidth, exact observations, and default solver settings.
    pub fn new(
        spec: &'a MicrogridSpec,
        library: &'a ScenarioLibrary,
        sequences: &'a ExPostSequences,
    ) -> Result<Self, SimError> {
        Ok(DayContext {
            spec,
            library,
            sequences,
            schedule: ParamSchedule::for_horizon(spec.horizon)?,
            bandwidth: 1.0,
            noise_pct: 0.0,
            settings: AdmmSettings::default(),
        })
    }

    fn validate(&self, day: &ScenarioDay) -> Result<(), SimError> {
        self.spec.validate()?;
        day.check(self.spec)?;
        if self.library.len() != self.sequences.entries.len() {
            return Err(GridError::Invalid(format!(
                "{} stored sequences for {} library scenarios",
                self.sequences.entries.len(),
                self.library.len()
            ))
            .into());
        }
        if self.sequences.ges_count() != self.spec.ges.len() {
            return Err(GridError::Invalid(format!(
                "stored sequences cover {} storage assets, system has {}",
                self.sequences.ges_count(),
                self.spec.ges.len()
            ))
            .into());
        }
        for (what, found) in [
            ("scenario library", self.library.horizon()),
            ("stored sequences", self.sequences.horizon()),
            ("parameter schedule", self.schedule.horizon()),
        ] {
            if found != self.spec.horizon {
                return Err(GridError::Horizon {
                    context: what.into(),
                    expected: self.spec.horizon,
                    found,
                }
                .into());
            }
        }
        if !(self.bandwidth > 0.0) {
            return Err(GridError::Invalid(format!(
                "kernel bandwidth must be positive, got {}",
                self.bandwidth
            ))
            .into());
        }
        if !(self.noise_pct >= 0.0) {
            return Err(GridError::Invalid(format!(
                "noise level must be nonnegative, got {}",
                self.noise_pct
            ))
            .into());
        }
        Ok(())
    }
}

/// Cost of one day in dollars, split by source. `total_usd` always equals
/// the sum of the four parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub storage_usd: f64,
    pub energy_usd: f64,
    pub fuel_usd: f64,
    pub smoothing_usd: f64,
    pub total_usd: f64,
}

/// Full report of one simulated day.
///
/// Serialized fields appear in declaration order, so reports from any
/// policy are directly diffable. The wall-clock time is measurement-only
/// and deliberately left out of the serialized form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DayResult {
    pub policy: String,
    pub scenario_id: String,
    pub horizon: usize,
    pub interval_hours: f64,
    pub monitored_buses: Vec<usize>,
    pub cost: CostBreakdown,
    /// Mean absolute period-to-period tie-line step, MW.
    pub fluctuation_step_mw: f64,
    /// Mean absolute tie-line deviation from the day mean, MW.
    pub fluctuation_mean_mw: f64,
    pub voltage_satisfaction_pct: f64,
    /// Rounds whose storage corridors needed widening to stay feasible.
    pub corridor_relaxed_rounds: usize,
    /// Largest widening applied to any corridor, in state-of-charge units.
    pub corridor_relaxation_max: f64,
    /// Online-learning summary; absent for the hindsight run.
    pub oco: Option<OcoMetrics>,
    pub decisions: Vec<DispatchDecision>,
    pub grid_mw: Vec<f64>,
    /// Post-action state of charge, indexed `[asset][period]`.
    pub soc: Vec<Vec<f64>>,
    /// Realized voltage at each monitored bus, indexed `[bus][period]`.
    pub voltage_pu: Vec<Vec<f64>>,
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl DayResult {
    /// The day's trajectories as CSV: one row per period with the tie-line
    /// power, each storage asset's state of charge, and each generator's
    /// output, under a `t,grid_mw,soc_<id>…,pdg_<id>…` header.
    pub fn trajectory_csv(&self, spec: &MicrogridSpec) -> String {
        let mut out = String::from("t,grid_mw");
        for asset in &spec.ges {
            out.push_str(",soc_");
            out.push_str(&asset.id);
        }
        for unit in &spec.dg {
            out.push_str(",pdg_");
            out.push_str(&unit.id);
        }
        out.push('\n');
        for t in 0..self.horizon {
            out.push_str(&t.to_string());
            out.push(',');
            out.push_str(&crate::io::format_f64(self.grid_mw[t]));
            for series in &self.soc {
                out.push(',');
                out.push_str(&crate::io::format_f64(series[t]));
            }
            for k in 0..spec.dg.len() {
                out.push(',');
                out.push_str(&crate::io::format_f64(self.decisions[t].dg_mw[k]));
            }
            out.push('\n');
        }
        out
    }
}

/// One logged round: the revealed problem and what the policy did on it.
#[derive(Debug, Clone)]
pub struct RoundLog {
    pub problem: RoundProblem,
    pub record: RoundRecord,
}

/// A completed online day: the report plus the full round log, kept so
/// hindsight benchmarks can be attached afterwards.
#[derive(Debug)]
pub struct DayRun {
    pub result: DayResult,
    pub rounds: Vec<RoundLog>,
}

impl DayRun {
    /// Recomputes the report's learning summary from the logged rounds,
    /// picking up benchmarks attached after the run.
    pub fn refresh_metrics(&mut self) {
        let records: Vec<RoundRecord> = self.rounds.iter().map(|l| l.record.clone()).collect();
        self.result.oco = Some(compute_metrics(&records));
    }
}

/// Physical ledger of a day being played out: decisions, tie-line power,
/// states of charge, and monitored voltages, scored against the exact
/// realizations.
struct DayAccumulator<'a> {
    spec: &'a MicrogridSpec,
    decisions: Vec<DispatchDecision>,
    grid: Vec<f64>,
    soc: Vec<Vec<f64>>,
    voltage: Vec<Vec<f64>>,
    cost: StageCost,
}

impl<'a> DayAccumulator<'a> {
    fn new(spec: &'a MicrogridSpec) -> Self {
        let horizon = spec.horizon;
        DayAccumulator {
            spec,
            decisions: Vec::with_capacity(horizon),
            grid: Vec::with_capacity(horizon),
            soc: vec![Vec::with_capacity(horizon); spec.ges.len()],
            voltage: vec![Vec::with_capacity(horizon); spec.network.monitored.len()],
            cost: StageCost::default(),
        }
    }

    fn apply(
        &mut self,
        action: DispatchDecision,
        real: &Realization,
        soc_after: &[f64],
    ) -> Result<(), GridError> {
        self.cost += stage_cost(&action, real, self.spec);
        self.grid.push(tie_line_power(&action, real));
        for (g, s) in soc_after.iter().enumerate() {
            self.soc[g].push(*s);
        }
        let volts = realized_voltages(self.spec, &action, real)?;
        for (m, v) in volts.into_iter().enumerate() {
            self.voltage[m].push(v);
        }
        self.decisions.push(action);
        Ok(())
    }

    fn finish(
        self,
        policy: &str,
        scenario_id: &str,
        oco: Option<OcoMetrics>,
        corridor_relaxed_rounds: usize,
        corridor_relaxation_max: f64,
    ) -> Result<DayResult, GridError> {
        let spec = self.spec;
        let smoothing = smoothing_penalty(
            &self.grid,
            None,
            spec.pricing.smoothing_step,
            spec.pricing.smoothing_mean,
        );
        let cost = CostBreakdown {
            storage_usd: self.cost.ges,
            energy_usd: self.cost.grid,
            fuel_usd: self.cost.dg,
            smoothing_usd: smoothing,
            total_usd: self.cost.total() + smoothing,
        };
        let (step, spread) = if self.grid.len() >= 2 {
            fluctuation_indices(&self.grid)?
        } else {
            (0.0, 0.0)
        };
        let samples: Vec<f64> = self.voltage.iter().flatten().copied().collect();
        let voltage_satisfaction_pct = if samples.is_empty() {
            100.0
        } else {
            voltage_satisfaction(
                &samples,
                spec.network.v_min - VOLTAGE_GRADE_TOLERANCE,
                spec.network.v_max + VOLTAGE_GRADE_TOLERANCE,
            )?
        };
        Ok(DayResult {
            policy: policy.to_string(),
            scenario_id: scenario_id.to_string(),
            horizon: self.grid.len(),
            interval_hours: spec.pricing.interval_hours,
            monitored_buses: spec.network.monitored.clone(),
            cost,
            fluctuation_step_mw: step,
            fluctuation_mean_mw: spread,
            voltage_satisfaction_pct,
            corridor_relaxed_rounds,
            corridor_relaxation_max,
            oco,
            decisions: self.decisions,
            grid_mw: self.grid,
            soc: self.soc,
            voltage_pu: self.voltage,
            wall_clock_seconds: 0.0,
        })
    }
}

/// The random stream for one `(master seed, policy, day)` triple: every
/// triple gets its own counter-mode stream, so runs are reproducible and
/// order-independent, and no two triples share draws.
fn day_stream(master_seed: u64, policy: Policy, day_id: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(day_id.as_bytes());
    let mut low = [0u8; 8];
    low[..6].copy_from_slice(&digest[..6]);
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((policy.stream_code() << 48) | u64::from_le_bytes(low));
    rng
}

fn targets_at(weights: &[f64], sequences: &ExPostSequences, t: usize) -> TrackingTargets {
    let (soc, grid) = reference(weights, sequences, t);
    TrackingTargets { soc, grid }
}

/// Library-blended net demand (demand minus renewables) at one period,
/// used as the tie-line proxy before any observation exists.
fn blended_net_demand(weights: &[f64], library: &ScenarioLibrary, t: usize) -> f64 {
    weights
        .iter()
        .zip(&library.days)
        .map(|(w, day)| w * (day.periods[t].total_load_mw() - day.periods[t].total_res_mw()))
        .sum()
}

/// Plays one day under an online policy.
///
/// Each round commits an action inside the currently feasible set, then
/// observes the period through the configured noise level, scores the
/// revealed cost and voltage rows, and advances the physical state under
/// the exact realization. The returned run carries both the public report
/// (scored on exact data) and the full round log (the observed problems),
/// ready for hindsight benchmarking.
pub fn run_day(
    ctx: &DayContext,
    day: &ScenarioDay,
    policy: Policy,
    seed: u64,
) -> Result<DayRun, SimError> {
    let started = Instant::now();
    ctx.validate(day)?;
    let spec = ctx.spec;
    let n_g = spec.ges.len();
    let n_d = spec.dg.len();
    let volt = VoltageModel::for_spec(spec)?;
    let mut rng = day_stream(seed, policy, &day.id);
    let mut state = SystemState::initial(spec);
    let mut acc = DayAccumulator::new(spec);
    let mut rounds: Vec<RoundLog> = Vec::with_capacity(spec.horizon);
    let mut relaxed_rounds = 0usize;
    let mut relaxation_max = 0.0f64;

    let uniform = vec![1.0 / ctx.library.len() as f64; ctx.library.len()];
    let mut ref_state = ReferenceState::new(ctx.library.len(), n_g, ctx.bandwidth);
    let mut last_observed_net: Option<f64> = None;

    // Reference-guided policies start from the action a strict tracker would
    // take on the first round; the greedy policy starts from projected idle.
    let mut controller = match policy {
        Policy::Tracking => None,
        Policy::Greedy => Some(AdaptiveController::new(
            ctx.schedule.clone(),
            vec![0.0; spec.decision_dim()],
            volt.rows(),
            ctx.settings.clone(),
        )),
        Policy::Adaptive | Policy::FixedReference => {
            let (feasible, _) = round_feasible_set(spec, &state)?;
            let targets = targets_at(&uniform, ctx.sequences, 0);
            let net = blended_net_demand(&uniform, ctx.library, 0);
            let start = round::solve_tracking_round(
                spec,
                &state,
                &targets,
                net,
                &feasible,
                &ctx.settings,
            )
            .map_err(|e| SimError::at_round(0, SimError::from(e)))?;
            Some(AdaptiveController::new(
                ctx.schedule.clone(),
                start,
                volt.rows(),
                ctx.settings.clone(),
            ))
        }
    };

    for t in 0..spec.horizon {
        let (feasible, slack) =
            round_feasible_set(spec, &state).map_err(|e| SimError::at_round(t, e))?;
        if slack > 0.0 {
            relaxed_rounds += 1;
            relaxation_max = relaxation_max.max(slack);
        }

        // Commit this round's action from pre-round information only.
        let x = match controller.as_mut() {
            Some(c) => c
                .decide(&feasible)
                .map_err(|e| SimError::at_round(t, SimError::from(e)))?,
            None => {
                let weights = if t == 0 { &uniform } else { &ref_state.weights };
                let targets = targets_at(weights, ctx.sequences, t);
                let net = last_observed_net
                    .unwrap_or_else(|| blended_net_demand(weights, ctx.library, t));
                round::solve_tracking_round(spec, &state, &targets, net, &feasible, &ctx.settings)
                    .map_err(|e| SimError::at_round(t, SimError::from(e)))?
            }
        };

        // The period is now revealed: the dispatcher sees it through the
        // noise layer, the physical ledger uses it exactly.
        let real = &day.periods[t];
        let observed = inject_noise(real, ctx.noise_pct, &mut rng);
        last_observed_net = Some(observed.total_load_mw() - observed.total_res_mw());

        let targets = match policy {
            Policy::Greedy => None,
            Policy::FixedReference => Some(targets_at(&uniform, ctx.sequences, t)),
            Policy::Adaptive | Policy::Tracking => {
                let (soc, grid) = ref_state
                    .advance(&observed, ctx.library, ctx.sequences)
                    .map_err(|e| SimError::at_round(t, SimError::from(e)))?;
                Some(TrackingTargets { soc, grid })
            }
        };

        let cost = round_cost(spec, &state, targets.as_ref(), &observed);
        let strain = volt.strain(spec, &observed);
        let record = RoundRecord {
            decision: x.clone(),
            cost_value: cost.value(&x),
            strain: strain.eval(&x),
            benchmark: None,
        };
        if let Some(c) = controller.as_mut() {
            c.observe(cost.clone(), strain.clone())
                .map_err(|e| SimError::at_round(t, SimError::from(e)))?;
        }
        rounds.push(RoundLog {
            problem: RoundProblem {
                cost,
                strain,
                feasible,
                soc_slack: slack,
            },
            record,
        });

        let action = DispatchDecision::from_flat(&x, n_g, n_d);
        state.apply(spec, &action, real);
        acc.apply(action, real, &state.soc)
            .map_err(|e| SimError::at_round(t, SimError::from(e)))?;
    }

    let records: Vec<RoundRecord> = rounds.iter().map(|l| l.record.clone()).collect();
    let mut result = acc.finish(
        policy.name(),
        &day.id,
        Some(compute_metrics(&records)),
        relaxed_rounds,
        relaxation_max,
    )?;
    result.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok(DayRun { result, rounds })
}

/// Solves the whole day with hindsight of every period and replays the
/// optimal schedule through the same physical ledger as the online runs,
/// yielding the offline yardstick report. The solve is tightened beyond the
/// supplied settings so the replayed schedule honors its constraints to
/// well inside the grading slack; anything short of a verified optimum is
/// an error.
pub fn run_m4(ctx: &DayContext, day: &ScenarioDay) -> Result<DayResult, SimError> {
    let started = Instant::now();
    ctx.validate(day)?;
    let spec = ctx.spec;
    let mut settings = ctx.settings.clone();
    settings.tolerance = settings.tolerance.min(1e-8);
    settings.max_iterations = settings.max_iterations.max(400_000);

    let problem = build_day_qp(spec, day, true)?;
    let solution = problem.solve(&settings)?;
    if solution.status != SolveStatus::Optimal {
        return Err(SimError::DayNotConverged {
            status: solution.status,
            iterations: solution.iterations,
        });
    }

    let mut state = SystemState::initial(spec);
    let mut acc = DayAccumulator::new(spec);
    for t in 0..spec.horizon {
        let action = solution.decision(t);
        let real = &day.periods[t];
        state.apply(spec, &action, real);
        acc.apply(action, real, &state.soc)
            .map_err(|e| SimError::at_round(t, SimError::from(e)))?;
    }
    let mut result = acc.finish(HINDSIGHT, &day.id, None, 0, 0.0)?;
    result.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok(result)
}
