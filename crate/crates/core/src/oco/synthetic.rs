//! Self-checking benchmark family for the controller: drifting quadratic
//! costs with one drifting linear cap, on a box wide enough that per-round
//! optima have a closed form. Regret and benchmark path length are therefore
//! exact, which makes the family suitable for scaling studies over the
//! horizon length.

use super::{
    compute_metrics, AdaptiveController, BenchmarkPoint, OcoError, OcoMetrics, ParamSchedule,
    QuadraticCost, RoundRecord,
};
use crate::solver::{AdmmSettings, AffineBlock, DecisionSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::f64::consts::TAU;

/// Shape of one benchmark instance.
#[derive(Clone, Copy, Debug)]
pub struct DriftSetup {
    pub dim: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Freeze the drift: every round repeats the round-1 cost and cap, so the
    /// per-round optima coincide and the benchmark path length is zero.
    pub stationary: bool,
    /// Extra slack added to every cap level. See
    /// [`DriftSetup::unreachable_cap_slack`] for a value that puts the cap out
    /// of reach of the whole box.
    pub cap_slack: f64,
}

impl DriftSetup {
    /// Standard drifting instance: centers and cap sweep one sinusoidal
    /// period over the horizon.
    pub fn new(dim: usize, horizon: usize, seed: u64) -> Self {
        Self {
            dim,
            horizon,
            seed,
            stationary: false,
            cap_slack: 0.0,
        }
    }

    /// Cap slack guaranteeing no point of the box can ever violate the cap:
    /// the cap normal has unit Euclidean norm, so `a'x` over the box is at
    /// most `BOX_HALF_WIDTH * sqrt(dim)`.
    pub fn unreachable_cap_slack(dim: usize) -> f64 {
        BOX_HALF_WIDTH * (dim as f64).sqrt() + 1.0
    }
}

/// Peak-to-center amplitude of the drifting cost centers.
const CENTER_AMPLITUDE: f64 = 1.5;
/// Mean and amplitude of the drifting cap level.
const CAP_MEAN: f64 = 0.3;
const CAP_AMPLITUDE: f64 = 0.9;
/// Half-width of the feasible box; wide enough that per-round optima always
/// lie strictly inside, so the closed-form halfspace projection is exact.
const BOX_HALF_WIDTH: f64 = 8.0;

/// One instance of the family: cost centers sweep one sinusoidal period over
/// the horizon (so the benchmark path stays bounded as the horizon grows)
/// and a unit-normal cap `a'x <= b_t` drifts through the center path.
pub struct DriftInstance {
    dim: usize,
    horizon: usize,
    direction: Vec<f64>,
    phases: Vec<f64>,
    cap_phase: f64,
    stationary: bool,
    cap_slack: f64,
}

impl DriftInstance {
    pub fn generate(setup: &DriftSetup) -> Self {
        assert!(setup.dim >= 1 && setup.horizon >= 1);
        let mut rng = ChaCha12Rng::seed_from_u64(setup.seed);
        let phases: Vec<f64> = (0..setup.dim).map(|_| rng.gen_range(0.0..TAU)).collect();
        let cap_phase = rng.gen_range(0.0..TAU);
        let mut direction: Vec<f64> = (0..setup.dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm = if norm > 1e-9 { norm } else { 1.0 };
        for d in &mut direction {
            *d /= norm;
        }
        Self {
            dim: setup.dim,
            horizon: setup.horizon,
            direction,
            phases,
            cap_phase,
            stationary: setup.stationary,
            cap_slack: setup.cap_slack,
        }
    }

    /// Sweep angle of round `t`; frozen at the round-1 angle for stationary
    /// instances.
    fn angle(&self, t: usize) -> f64 {
        let round = if self.stationary { 1 } else { t };
        TAU * round as f64 / self.horizon as f64
    }

    /// The fixed feasible box.
    pub fn feasible_set(&self) -> DecisionSet {
        DecisionSet::bounds_only(
            vec![-BOX_HALF_WIDTH; self.dim],
            vec![BOX_HALF_WIDTH; self.dim],
        )
    }

    /// Cost center at round `t` (1-based).
    pub fn center(&self, t: usize) -> Vec<f64> {
        let angle = self.angle(t);
        self.phases
            .iter()
            .map(|phase| CENTER_AMPLITUDE * (angle + phase).sin())
            .collect()
    }

    /// Cap level at round `t` (1-based).
    pub fn cap(&self, t: usize) -> f64 {
        CAP_MEAN + CAP_AMPLITUDE * (self.angle(t) + self.cap_phase).sin() + self.cap_slack
    }

    /// Revealed data for round `t`: the cost `||x - c_t||^2` and the single
    /// monitored row `a'x - b_t`.
    pub fn round_data(&self, t: usize) -> (QuadraticCost, AffineBlock) {
        let center = self.center(t);
        let mut cost = QuadraticCost::zero(self.dim);
        for (j, c) in center.iter().enumerate() {
            cost.add_square(&[(j, 1.0)], -c, 1.0);
        }
        let strain = AffineBlock::new(1, self.dim, self.direction.clone(), vec![-self.cap(t)]);
        (cost, strain)
    }

    /// Closed-form per-round optimum: the center when it satisfies the cap,
    /// otherwise its projection onto the cap hyperplane. The box never binds
    /// at this point, so the projection formula is exact.
    pub fn benchmark(&self, t: usize) -> BenchmarkPoint {
        let center = self.center(t);
        let slack: f64 = self
            .direction
            .iter()
            .zip(&center)
            .map(|(a, c)| a * c)
            .sum::<f64>()
            - self.cap(t);
        if slack <= 0.0 {
            BenchmarkPoint {
                point: center,
                value: 0.0,
            }
        } else {
            let point: Vec<f64> = center
                .iter()
                .zip(&self.direction)
                .map(|(c, a)| c - slack * a)
                .collect();
            BenchmarkPoint {
                point,
                value: slack * slack,
            }
        }
    }
}

/// Runs the controller against one instance and returns the per-round
/// history alongside the summary metrics. Horizons under 100 rounds are too
/// short for the schedule to differentiate the experts and are refused.
pub fn run_drift_benchmark(
    setup: &DriftSetup,
    settings: &AdmmSettings,
) -> Result<(Vec<RoundRecord>, OcoMetrics), OcoError> {
    assert!(
        setup.horizon >= 100,
        "benchmark horizons must be at least 100 rounds"
    );
    let instance = DriftInstance::generate(setup);
    let schedule = ParamSchedule::for_horizon(setup.horizon)?;
    let feasible = instance.feasible_set();
    let mut controller =
        AdaptiveController::new(schedule, vec![0.0; setup.dim], 1, settings.clone());
    let mut records = Vec::with_capacity(setup.horizon);
    for t in 1..=setup.horizon {
        let decision = controller.decide(&feasible)?;
        let (cost, strain) = instance.round_data(t);
        records.push(RoundRecord {
            cost_value: cost.value(&decision),
            strain: strain.eval(&decision),
            benchmark: Some(instance.benchmark(t)),
            decision,
        });
        controller.observe(cost, strain)?;
    }
    let metrics = compute_metrics(&records);
    Ok((records, metrics))
}
