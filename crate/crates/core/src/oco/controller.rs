//! The decide/observe engine: a bank of proximal experts on a geometric
//! step-size ladder, virtual constraint queues, and multiplicative
//! aggregation.
//!
//! Round protocol (`t` counts from 1):
//! 1. `decide` is called with the current feasible set. In round 1 the
//!    controller commits its initial point (projected for safety). From
//!    round 2 on, each expert first lifts its queues with the violations its
//!    own previous proposal incurred on the last revealed constraint block,
//!    floored by a growing schedule, then takes a proximal step that trades
//!    the last revealed gradient, the queue-priced constraint hinge, and
//!    proximity to its previous proposal. The committed decision is the
//!    weight-blended expert proposal, projected onto the feasible set.
//! 2. `observe` is called with the revealed cost and constraint block. The
//!    expert weights are re-scaled by how well each proposal aligned with
//!    the revealed gradient at the committed point, and the revealed data is
//!    stored for the next round's expert updates.

use super::cost::QuadraticCost;
use super::schedule::ParamSchedule;
use super::OcoError;
use crate::linalg::dot;
use crate::solver::{solve_prox_step, AdmmSettings, AffineBlock, DecisionSet};

/// Lifts one queue component: accumulated pressure plus freshly priced
/// violation, floored from below.
pub fn raised_queue(queue: f64, beta: f64, strain: f64, floor: f64) -> f64 {
    (queue + beta * strain.max(0.0)).max(floor)
}

/// Weighted blend of expert proposals: `sum_i weights[i] * points[i]`. With
/// normalized weights the blend stays inside any convex set containing all
/// the proposals.
pub fn blend(weights: &[f64], points: &[&[f64]]) -> Vec<f64> {
    assert_eq!(weights.len(), points.len());
    assert!(!points.is_empty(), "blend needs at least one point");
    let dim = points[0].len();
    let mut out = vec![0.0; dim];
    for (w, point) in weights.iter().zip(points) {
        assert_eq!(point.len(), dim);
        for (o, p) in out.iter_mut().zip(*point) {
            *o += w * p;
        }
    }
    out
}

/// Multiplicative re-weighting against per-expert losses, with the usual
/// max-shift so the exponentials stay in range. The result sums to one.
pub fn reweight(weights: &[f64], losses: &[f64], rate: f64) -> Vec<f64> {
    assert_eq!(weights.len(), losses.len());
    let shift = losses
        .iter()
        .map(|l| -rate * l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut next: Vec<f64> = weights
        .iter()
        .zip(losses)
        .map(|(w, l)| w * (-rate * l - shift).exp())
        .collect();
    let total: f64 = next.iter().sum();
    assert!(total > 0.0, "all expert weights collapsed to zero");
    for w in &mut next {
        *w /= total;
    }
    next
}

struct Expert {
    point: Vec<f64>,
    queue: Vec<f64>,
}

/// Online controller that commits a decision each round before that round's
/// cost and monitored constraints are revealed.
pub struct AdaptiveController {
    schedule: ParamSchedule,
    dim: usize,
    experts: Vec<Expert>,
    weights: Vec<f64>,
    round: usize,
    awaiting_feedback: bool,
    committed: Vec<f64>,
    last_cost: Option<QuadraticCost>,
    last_strain: Option<AffineBlock>,
    settings: AdmmSettings,
}

impl AdaptiveController {
    /// Creates a controller that starts from `initial_point` and expects
    /// `strain_rows` monitored constraint rows in every revealed block. All
    /// expert queues start at zero.
    pub fn new(
        schedule: ParamSchedule,
        initial_point: Vec<f64>,
        strain_rows: usize,
        settings: AdmmSettings,
    ) -> Self {
        let weights = schedule.initial_weights();
        let experts = weights
            .iter()
            .map(|_| Expert {
                point: initial_point.clone(),
                queue: vec![0.0; strain_rows],
            })
            .collect();
        Self {
            schedule,
            dim: initial_point.len(),
            experts,
            weights,
            round: 0,
            awaiting_feedback: false,
            committed: initial_point,
            last_cost: None,
            last_strain: None,
            settings,
        }
    }

    /// Rounds committed so far.
    pub fn round(&self) -> usize {
        self.round
    }

    /// Current aggregation weights, one per expert.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Current expert proposals.
    pub fn expert_points(&self) -> Vec<&[f64]> {
        self.experts.iter().map(|e| e.point.as_slice()).collect()
    }

    /// Current virtual queues, one vector per expert.
    pub fn queues(&self) -> Vec<&[f64]> {
        self.experts.iter().map(|e| e.queue.as_slice()).collect()
    }

    /// Commits the decision for the next round over `feasible`.
    pub fn decide(&mut self, feasible: &DecisionSet) -> Result<Vec<f64>, OcoError> {
        if self.awaiting_feedback {
            return Err(OcoError::OutOfOrder(
                "decide called again before the previous round was observed",
            ));
        }
        if feasible.dim() != self.dim {
            return Err(OcoError::Dimension {
                expected: self.dim,
                found: feasible.dim(),
            });
        }
        let t = self.round + 1;
        let decision = if t == 1 {
            feasible.project(&self.committed, &self.settings)?
        } else {
            let cost = self
                .last_cost
                .as_ref()
                .expect("observe always stores the revealed cost");
            let strain = self
                .last_strain
                .as_ref()
                .expect("observe always stores the revealed constraints");
            let beta_prev = self.schedule.beta(t - 1);
            for (i, expert) in self.experts.iter_mut().enumerate() {
                let strain_vals = strain.eval(&expert.point);
                let floor = self.schedule.theta(i, t - 1);
                for (q, s) in expert.queue.iter_mut().zip(&strain_vals) {
                    *q = raised_queue(*q, beta_prev, *s, floor);
                }
                let gradient = cost.gradient(&expert.point);
                let alpha_prev = self.schedule.alpha(i, t - 1);
                // The feasible set may have shifted since the expert last
                // moved; re-anchor the proximal center inside it first.
                if !feasible.contains(&expert.point, 1e-9) {
                    expert.point = feasible.project(&expert.point, &self.settings)?;
                }
                expert.point = solve_prox_step(
                    &gradient,
                    &expert.queue,
                    alpha_prev,
                    beta_prev,
                    strain,
                    feasible,
                    &expert.point,
                    &self.settings,
                )?;
            }
            let points = self.expert_points();
            let blended = blend(&self.weights, &points);
            feasible.project(&blended, &self.settings)?
        };
        self.committed = decision.clone();
        self.awaiting_feedback = true;
        self.round = t;
        Ok(decision)
    }

    /// Reveals the cost and monitored constraint block of the round that was
    /// just committed.
    pub fn observe(&mut self, cost: QuadraticCost, strain: AffineBlock) -> Result<(), OcoError> {
        if !self.awaiting_feedback {
            return Err(OcoError::OutOfOrder(
                "observe called without a pending decision",
            ));
        }
        if cost.dim() != self.dim {
            return Err(OcoError::Dimension {
                expected: self.dim,
                found: cost.dim(),
            });
        }
        if strain.dim != self.dim {
            return Err(OcoError::Dimension {
                expected: self.dim,
                found: strain.dim,
            });
        }
        let expected_rows = self.experts[0].queue.len();
        if strain.rows != expected_rows {
            return Err(OcoError::RowCount {
                expected: expected_rows,
                found: strain.rows,
            });
        }
        let gradient = cost.gradient(&self.committed);
        let base = dot(&gradient, &self.committed);
        let losses: Vec<f64> = self
            .experts
            .iter()
            .map(|e| dot(&gradient, &e.point) - base)
            .collect();
        self.weights = reweight(&self.weights, &losses, self.schedule.learn_rate());
        self.last_cost = Some(cost);
        self.last_strain = Some(strain);
        self.awaiting_feedback = false;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_box(dim: usize) -> DecisionSet {
        DecisionSet::bounds_only(vec![0.0; dim], vec![1.0; dim])
    }

    fn quadratic_pull(dim: usize, target: f64) -> QuadraticCost {
        let mut cost = QuadraticCost::zero(dim);
        for i in 0..dim {
            cost.add_square(&[(i, 1.0)], -target, 1.0);
        }
        cost
    }

    #[test]
    fn queue_lift_examples() {
        assert_eq!(raised_queue(0.0, 1.0, 0.0, 2.0), 2.0);
        assert_eq!(raised_queue(3.0, 2.0, 0.5, 1.0), 4.0);
        assert!((raised_queue(0.2, 2.0, 0.3, 0.5) - 0.8).abs() < 1e-15);
        // Satisfied rows contribute nothing but the floor still applies.
        assert_eq!(raised_queue(0.4, 5.0, -2.0, 1.5), 1.5);
        assert_eq!(raised_queue(7.0, 5.0, -2.0, 1.5), 7.0);
    }

    #[test]
    fn reweighting_matches_the_two_expert_softmax() {
        let next = reweight(&[0.5, 0.5], &[0.0, 1.0], 1.0);
        assert!((next[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((next[1] - 0.268_941_421_369_995_1).abs() < 1e-12);
    }

    #[test]
    fn reweighting_degenerate_cases_leave_weights_alone() {
        let weights = [0.3, 0.2, 0.5];
        // Zero learning rate: exponents vanish.
        let same = reweight(&weights, &[1.0, -2.0, 0.4], 0.0);
        for (a, b) in same.iter().zip(&weights) {
            assert!((a - b).abs() < 1e-12);
        }
        // Equal losses: the shared factor cancels in the normalization.
        let same = reweight(&weights, &[0.7, 0.7, 0.7], 1.3);
        for (a, b) in same.iter().zip(&weights) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn blend_examples() {
        // Identical proposals reproduce themselves.
        let p = [1.0, -2.0];
        let out = blend(&[0.4, 0.6], &[&p, &p]);
        assert!((out[0] - 1.0).abs() < 1e-12 && (out[1] + 2.0).abs() < 1e-12);
        // Scalar weighted mean.
        let out = blend(&[0.5, 0.5], &[&[0.0], &[2.0]]);
        assert!((out[0] - 1.0).abs() < 1e-12);
        // One-hot weights select a single proposal.
        let out = blend(&[1.0, 0.0, 0.0], &[&[3.0], &[7.0], &[-1.0]]);
        assert!((out[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fresh_controller_state() {
        let schedule = ParamSchedule::for_horizon(288).unwrap();
        let ctl = AdaptiveController::new(
            schedule.clone(),
            vec![0.25, 0.75],
            4,
            AdmmSettings::default(),
        );
        assert_eq!(ctl.round(), 0);
        assert_eq!(ctl.weights(), schedule.initial_weights().as_slice());
        for point in ctl.expert_points() {
            assert_eq!(point, &[0.25, 0.75]);
        }
        for queue in ctl.queues() {
            assert_eq!(queue, &[0.0; 4]);
        }
    }

    #[test]
    fn first_round_returns_the_initial_point() {
        let schedule = ParamSchedule::for_horizon(16).unwrap();
        let mut ctl =
            AdaptiveController::new(schedule, vec![0.3, 0.8], 0, AdmmSettings::default());
        let x = ctl.decide(&unit_box(2)).unwrap();
        assert!((x[0] - 0.3).abs() < 1e-12);
        assert!((x[1] - 0.8).abs() < 1e-12);
        assert_eq!(ctl.round(), 1);
    }

    #[test]
    fn first_round_projects_an_out_of_range_start() {
        let schedule = ParamSchedule::for_horizon(16).unwrap();
        let mut ctl =
            AdaptiveController::new(schedule, vec![-2.0, 0.5], 0, AdmmSettings::default());
        let x = ctl.decide(&unit_box(2)).unwrap();
        assert!((x[0] - 0.0).abs() < 1e-12);
        assert!((x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn call_order_is_enforced() {
        let schedule = ParamSchedule::for_horizon(16).unwrap();
        let mut ctl =
            AdaptiveController::new(schedule, vec![0.5], 0, AdmmSettings::default());
        let strain = AffineBlock::empty(1);
        assert!(matches!(
            ctl.observe(QuadraticCost::zero(1), strain.clone()),
            Err(OcoError::OutOfOrder(_))
        ));
        ctl.decide(&unit_box(1)).unwrap();
        assert!(matches!(
            ctl.decide(&unit_box(1)),
            Err(OcoError::OutOfOrder(_))
        ));
        ctl.observe(QuadraticCost::zero(1), strain).unwrap();
        assert!(ctl.decide(&unit_box(1)).is_ok());
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let schedule = ParamSchedule::for_horizon(16).unwrap();
        let mut ctl =
            AdaptiveController::new(schedule, vec![0.5], 1, AdmmSettings::default());
        assert!(matches!(
            ctl.decide(&unit_box(2)),
            Err(OcoError::Dimension { .. })
        ));
        ctl.decide(&unit_box(1)).unwrap();
        assert!(matches!(
            ctl.observe(QuadraticCost::zero(2), AffineBlock::empty(1)),
            Err(OcoError::Dimension { .. })
        ));
        ctl.observe(QuadraticCost::zero(1), AffineBlock::new(1, 1, vec![1.0], vec![0.0]))
            .unwrap();
        ctl.decide(&unit_box(1)).unwrap();
        assert!(matches!(
            ctl.observe(QuadraticCost::zero(1), AffineBlock::empty(1)),
            Err(OcoError::RowCount { .. })
        ));
    }

    #[test]
    fn static_cost_is_learned() {
        // A fixed pull toward 5 on the box [0, 10]: late rounds must be much
        // cheaper than early ones.
        let horizon = 120;
        let schedule = ParamSchedule::for_horizon(horizon).unwrap();
        let set = DecisionSet::bounds_only(vec![0.0], vec![10.0]);
        let mut ctl = AdaptiveController::new(schedule, vec![0.0], 0, AdmmSettings::default());
        let mut costs = Vec::new();
        for _ in 0..horizon {
            let x = ctl.decide(&set).unwrap();
            let cost = quadratic_pull(1, 5.0);
            costs.push(cost.value(&x));
            ctl.observe(cost, AffineBlock::empty(1)).unwrap();
        }
        let quarter = horizon / 4;
        let early: f64 = costs[..quarter].iter().sum::<f64>() / quarter as f64;
        let late: f64 = costs[horizon - quarter..].iter().sum::<f64>() / quarter as f64;
        assert!(
            late < 0.2 * early,
            "late mean {late:.4} vs early mean {early:.4}"
        );
    }

    #[test]
    fn queue_pressure_enforces_a_repeated_constraint() {
        // The cost pulls toward 1 but the monitored row caps x at 0.2: the
        // queues must drive late decisions down to the cap.
        let horizon = 200;
        let schedule = ParamSchedule::for_horizon(horizon).unwrap();
        let set = DecisionSet::bounds_only(vec![0.0], vec![1.0]);
        let strain = AffineBlock::new(1, 1, vec![1.0], vec![-0.2]);
        let mut ctl = AdaptiveController::new(schedule, vec![0.0], 1, AdmmSettings::default());
        let mut decisions = Vec::new();
        for _ in 0..horizon {
            let x = ctl.decide(&set).unwrap();
            decisions.push(x[0]);
            ctl.observe(quadratic_pull(1, 1.0), strain.clone()).unwrap();
        }
        let tail = &decisions[horizon - 40..];
        let mean_excess: f64 =
            tail.iter().map(|x| (x - 0.2).max(0.0)).sum::<f64>() / tail.len() as f64;
        assert!(mean_excess < 0.02, "tail mean excess {mean_excess:.4}");
        let mean_tail: f64 = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!(
            (0.05..=0.25).contains(&mean_tail),
            "tail mean {mean_tail:.4} should hover near the cap"
        );
    }

    #[test]
    fn queues_respect_their_floors() {
        let horizon = 30;
        let schedule = ParamSchedule::for_horizon(horizon).unwrap();
        let set = DecisionSet::bounds_only(vec![0.0], vec![1.0]);
        let strain = AffineBlock::new(1, 1, vec![1.0], vec![-0.5]);
        let mut ctl =
            AdaptiveController::new(schedule.clone(), vec![0.9], 1, AdmmSettings::default());
        for t in 1..=horizon {
            ctl.decide(&set).unwrap();
            ctl.observe(quadratic_pull(1, 0.9), strain.clone()).unwrap();
            if t >= 2 {
                // After deciding round t the queues reflect round t - 1.
                for (i, queue) in ctl.queues().iter().enumerate() {
                    for q in queue.iter() {
                        assert!(
                            *q >= ctl.schedule.theta(i, t - 1) - 1e-12,
                            "round {t}, expert {i}: queue {q} under floor"
                        );
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn reweight_preserves_the_simplex(
            raw in proptest::collection::vec(0.01f64..1.0, 1..6),
            losses in proptest::collection::vec(-3.0f64..3.0, 6),
            rate in 0.01f64..2.0,
        ) {
            let total: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let next = reweight(&weights, &losses[..weights.len()], rate);
            let sum: f64 = next.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(next.iter().all(|w| *w >= 0.0));
        }

        #[test]
        fn raised_queues_never_fall(
            queue in 0.0f64..50.0,
            beta in 0.1f64..20.0,
            strain in -5.0f64..5.0,
            floor in 0.0f64..30.0,
        ) {
            let next = raised_queue(queue, beta, strain, floor);
            prop_assert!(next >= queue);
            prop_assert!(next >= floor);
        }
    }
}
