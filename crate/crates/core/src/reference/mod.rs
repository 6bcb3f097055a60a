//! Two-stage reference pipeline.
//!
//! Offline, every historical scenario day is solved to hindsight optimality
//! (with the storage cycle constraint) and the resulting state-of-charge and
//! tie-line trajectories are stored. Online, the running day is compared
//! against the historical days through a Gaussian kernel on accumulated
//! squared distance between their renewable/demand observations; the kernel
//! weights blend the stored trajectories into the reference the dispatcher
//! tracks. Days that resemble the current one dominate the blend, and the
//! bandwidth divides by elapsed periods so the comparison sharpens as
//! evidence accumulates.

use crate::grid::{build_day_qp, GridError, MicrogridSpec, Realization, ScenarioDay};
use crate::solver::AdmmSettings;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Historical scenario days plus the per-bus scales used to normalize
/// distance computations, so heavily loaded buses do not dominate the
/// comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioLibrary {
    pub days: Vec<ScenarioDay>,
    /// Per-bus normalization for renewable output, MW.
    pub res_scale: Vec<f64>,
    /// Per-bus normalization for active demand, MW.
    pub load_scale: Vec<f64>,
}

impl ScenarioLibrary {
    /// Validates shared horizon and bus indexing across the days and derives
    /// the normalization constants (the library-wide peak per bus, floored
    /// at one so all-zero buses stay harmless).
    pub fn new(days: Vec<ScenarioDay>, bus_count: usize) -> Result<Self, GridError> {
        if days.is_empty() {
            return Err(GridError::Invalid("scenario library is empty".into()));
        }
        let horizon = days[0].periods.len();
        for day in &days {
            if day.periods.len() != horizon {
                return Err(GridError::Horizon {
                    context: format!("library scenario '{}'", day.id),
                    expected: horizon,
                    found: day.periods.len(),
                });
            }
            for (t, real) in day.periods.iter().enumerate() {
                real.check(bus_count, &format!("library scenario '{}' period {t}", day.id))?;
            }
        }
        let mut res_scale: Vec<f64> = vec![0.0; bus_count];
        let mut load_scale: Vec<f64> = vec![0.0; bus_count];
        for day in &days {
            for real in &day.periods {
                for b in 0..bus_count {
                    res_scale[b] = res_scale[b].max(real.res_mw[b].abs());
                    load_scale[b] = load_scale[b].max(real.load_mw[b].abs());
                }
            }
        }
        for scale in res_scale.iter_mut().chain(load_scale.iter_mut()) {
            if *scale < 1e-9 {
                *scale = 1.0;
            }
        }
        Ok(ScenarioLibrary {
            days,
            res_scale,
            load_scale,
        })
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.days[0].periods.len()
    }
}

/// The hindsight-optimal trajectories of one scenario day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExPostSequence {
    pub scenario_id: String,
    /// State-of-charge path per storage asset, indexed `[asset][period]`.
    pub soc: Vec<Vec<f64>>,
    /// Tie-line path, MW.
    pub grid: Vec<f64>,
    /// Day cost at the optimum, $.
    pub cost: f64,
}

/// The full set of stored trajectories the online stage blends between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExPostSequences {
    pub entries: Vec<ExPostSequence>,
}

impl ExPostSequences {
    pub fn horizon(&self) -> usize {
        self.entries.first().map_or(0, |e| e.grid.len())
    }

    pub fn ges_count(&self) -> usize {
        self.entries.first().map_or(0, |e| e.soc.len())
    }
}

/// Solves one scenario day to hindsight optimality and extracts its
/// trajectories.
pub fn solve_ex_post(
    spec: &MicrogridSpec,
    day: &ScenarioDay,
    settings: &AdmmSettings,
) -> Result<ExPostSequence, GridError> {
    let problem = build_day_qp(spec, day, true)
        .map_err(|e| GridError::Invalid(format!("scenario '{}': {e}", day.id)))?;
    let solution = problem
        .solve(settings)
        .map_err(|e| GridError::Invalid(format!("scenario '{}': {e}", day.id)))?;
    Ok(ExPostSequence {
        scenario_id: day.id.clone(),
        soc: (0..spec.ges.len())
            .map(|g| solution.soc_series(g))
            .collect(),
        grid: solution.grid_series(),
        cost: solution.objective,
    })
}

/// Solves every library scenario, in parallel; order follows the library.
pub fn solve_library(
    spec: &MicrogridSpec,
    library: &ScenarioLibrary,
    settings: &AdmmSettings,
) -> Result<ExPostSequences, GridError> {
    let entries = library
        .days
        .par_iter()
        .map(|day| solve_ex_post(spec, day, settings))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExPostSequences { entries })
}

/// Gaussian kernel weights over scenarios: `ω_s ∝ exp(−d²_s / (t·τ))`,
/// evaluated with a shift for numerical stability. `t` counts observed
/// periods (at least one) and `τ` is the bandwidth on normalized distances.
pub fn kernel_weights(distances_sq: &[f64], t: usize, tau: f64) -> Vec<f64> {
    debug_assert!(tau > 0.0, "kernel bandwidth must be positive");
    debug_assert!(t >= 1, "kernel weights need at least one observed period");
    let denom = (t.max(1) as f64) * tau;
    let best = distances_sq.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut weights: Vec<f64> = distances_sq
        .iter()
        .map(|d| (-(d - best) / denom).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

/// Weighted average of the stored trajectories at one period: the
/// state-of-charge reference per asset and the tie-line reference.
pub fn reference(weights: &[f64], sequences: &ExPostSequences, t: usize) -> (Vec<f64>, f64) {
    assert_eq!(weights.len(), sequences.entries.len());
    let ges = sequences.ges_count();
    let mut soc_ref = vec![0.0; ges];
    let mut grid_ref = 0.0;
    for (w, entry) in weights.iter().zip(&sequences.entries) {
        for g in 0..ges {
            soc_ref[g] += w * entry.soc[g][t];
        }
        grid_ref += w * entry.grid[t];
    }
    (soc_ref, grid_ref)
}

/// Online state of the kernel reference: accumulated squared distances to
/// each library day, the bandwidth, and the most recent weights/references.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceState {
    pub distances_sq: Vec<f64>,
    pub bandwidth: f64,
    /// Periods observed so far.
    pub observed: usize,
    pub weights: Vec<f64>,
    pub soc_ref: Vec<f64>,
    pub grid_ref: f64,
}

impl ReferenceState {
    pub fn new(scenarios: usize, ges: usize, bandwidth: f64) -> Self {
        ReferenceState {
            distances_sq: vec![0.0; scenarios],
            bandwidth,
            observed: 0,
            weights: vec![1.0 / scenarios.max(1) as f64; scenarios],
            soc_ref: vec![0.0; ges],
            grid_ref: 0.0,
        }
    }

    /// Folds one period's observation into the accumulated distances:
    /// `d²_s += ‖(ℓ_t − ℓ_{t,s}) / scale‖²` over per-bus renewable and
    /// demand components.
    pub fn update_distances(
        &mut self,
        observed: &Realization,
        library: &ScenarioLibrary,
    ) -> Result<(), GridError> {
        let t = self.observed;
        if t >= library.horizon() {
            return Err(GridError::Horizon {
                context: "reference distance update".into(),
                expected: library.horizon(),
                found: t + 1,
            });
        }
        let buses = library.load_scale.len();
        if observed.res_mw.len() != buses || observed.load_mw.len() != buses {
            return Err(GridError::Invalid(format!(
                "observation covers {} buses, library {}",
                observed.load_mw.len(),
                buses
            )));
        }
        for (d, day) in self.distances_sq.iter_mut().zip(&library.days) {
            let past = &day.periods[t];
            for b in 0..buses {
                let dr = (observed.res_mw[b] - past.res_mw[b]) / library.res_scale[b];
                let dl = (observed.load_mw[b] - past.load_mw[b]) / library.load_scale[b];
                *d += dr * dr + dl * dl;
            }
        }
        self.observed = t + 1;
        Ok(())
    }

    /// One full online step: accumulate the observation, refresh the kernel
    /// weights, and blend the stored trajectories at period `t` into the
    /// current reference. Returns the updated `(soc_ref, grid_ref)`.
    pub fn advance(
        &mut self,
        observed: &Realization,
        library: &ScenarioLibrary,
        sequences: &ExPostSequences,
    ) -> Result<(Vec<f64>, f64), GridError> {
        if sequences.entries.len() != library.len() {
            return Err(GridError::Invalid(format!(
                "{} stored sequences for {} library scenarios",
                sequences.entries.len(),
                library.len()
            )));
        }
        let t = self.observed;
        self.update_distances(observed, library)?;
        self.weights = kernel_weights(&self.distances_sq, self.observed, self.bandwidth);
        let (soc_ref, grid_ref) = reference(&self.weights, sequences, t);
        self.soc_ref = soc_ref.clone();
        self.grid_ref = grid_ref;
        Ok((soc_ref, grid_ref))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{
        stage_cost, tie_line_power, tiny_spec, DispatchDecision, Realization, ScenarioDay,
    };
    use crate::grid::smoothing_penalty;
    use crate::oracles::lattice_minimize;

    fn flat_tiny_day(id: &str, horizon: usize, load: f64, price: f64) -> ScenarioDay {
        ScenarioDay {
            id: id.into(),
            periods: (0..horizon)
                .map(|_| {
                    Realization::with_power_factor(vec![0.0, load], vec![0.0, 0.0], price, 0.95)
                })
                .collect(),
        }
    }

    #[test]
    fn idle_storage_is_ex_post_optimal_without_a_price_spread() {
        // Flat price: any storage cycle pays charge and discharge fees for
        // no arbitrage gain, so the optimum leaves the state of charge flat.
        let spec = tiny_spec(2);
        let day = flat_tiny_day("flat", 2, 0.6, 100.0);
        let seq = solve_ex_post(&spec, &day, &AdmmSettings::default()).unwrap();
        for t in 0..2 {
            assert!((seq.soc[0][t] - 0.5).abs() < 1e-4, "soc {}", seq.soc[0][t]);
        }
        // Brute-force check over net storage power and generator outputs.
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
        let (best, oracle) =
            lattice_minimize(&[-1.0, 0.0, 0.0], &[1.0, 1.0, 1.0], 201, |_| true, objective);
        assert_eq!(best[0], 0.0, "oracle should also keep storage idle");
        assert!((seq.cost - oracle).abs() <= 0.02 * oracle.abs().max(1.0));
    }

    #[test]
    fn identical_scenarios_give_identical_sequences() {
        let spec = tiny_spec(3);
        let day_a = flat_tiny_day("a", 3, 0.6, 100.0);
        let day_b = ScenarioDay {
            id: "b".into(),
            ..day_a.clone()
        };
        let settings = AdmmSettings::default();
        let a = solve_ex_post(&spec, &day_a, &settings).unwrap();
        let b = solve_ex_post(&spec, &day_b, &settings).unwrap();
        assert_eq!(a.soc, b.soc);
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.cost, b.cost);
    }

    #[test]
    fn stored_cost_matches_a_fresh_solve() {
        let spec = tiny_spec(3);
        let day = flat_tiny_day("cost", 3, 0.5, 80.0);
        let seq = solve_ex_post(&spec, &day, &AdmmSettings::default()).unwrap();
        let again = build_day_qp(&spec, &day, true)
            .unwrap()
            .solve(&AdmmSettings::default())
            .unwrap();
        assert!((seq.cost - again.objective).abs() < 1e-6);
    }

    #[test]
    fn library_solves_cover_every_scenario_in_order() {
        let spec = tiny_spec(2);
        let days = vec![
            flat_tiny_day("one", 2, 0.3, 80.0),
            flat_tiny_day("two", 2, 0.9, 80.0),
        ];
        let library = ScenarioLibrary::new(days, 2).unwrap();
        let set = solve_library(&spec, &library, &AdmmSettings::default()).unwrap();
        assert_eq!(set.entries.len(), 2);
        assert_eq!(set.entries[0].scenario_id, "one");
        assert_eq!(set.entries[1].scenario_id, "two");
        assert_eq!(set.horizon(), 2);
        assert_eq!(set.ges_count(), 1);
        // The heavier day needs more supply: its tie-line runs higher.
        assert!(set.entries[1].grid[0] > set.entries[0].grid[0]);
    }

    #[test]
    fn library_rejects_mixed_horizons_and_bad_days() {
        assert!(ScenarioLibrary::new(vec![], 2).is_err());
        let days = vec![flat_tiny_day("a", 2, 0.5, 80.0), flat_tiny_day("b", 3, 0.5, 80.0)];
        let err = ScenarioLibrary::new(days, 2).unwrap_err();
        assert!(matches!(err, GridError::Horizon { expected: 2, found: 3, .. }));
        let days = vec![flat_tiny_day("short", 2, 0.5, 80.0)];
        assert!(ScenarioLibrary::new(days, 5).is_err());
    }

    #[test]
    fn normalization_constants_track_the_library_peaks() {
        let mut day = flat_tiny_day("peaks", 2, 0.5, 80.0);
        day.periods[1].load_mw[1] = 2.0;
        day.periods[0].res_mw[1] = 0.25;
        let library = ScenarioLibrary::new(vec![day], 2).unwrap();
        assert_eq!(library.load_scale[1], 2.0);
        assert_eq!(library.res_scale[1], 0.25);
        // All-zero buses fall back to a unit scale.
        assert_eq!(library.load_scale[0], 1.0);
        assert_eq!(library.res_scale[0], 1.0);
    }

    #[test]
    fn distance_updates_accumulate_squared_mismatch() {
        let day = flat_tiny_day("base", 4, 0.5, 80.0);
        let library = ScenarioLibrary::new(vec![day], 2).unwrap();
        // Scales: load 0.5 at bus 1, everything else 1.
        let mut state = ReferenceState::new(1, 1, 1.0);
        state.distances_sq[0] = 1.0;
        // Differences: res +0.3 at bus 0 (scale 1), load +0.2 at bus 1
        // (scale 0.5 → normalized 0.4): 1.0 + 0.09 + 0.16 = 1.25.
        let obs = Realization::with_power_factor(vec![0.0, 0.7], vec![0.3, 0.0], 80.0, 0.95);
        state.update_distances(&obs, &library).unwrap();
        assert!((state.distances_sq[0] - 1.25).abs() < 1e-12);
        assert_eq!(state.observed, 1);
        // A matching observation leaves the distance unchanged.
        let same = library.days[0].periods[1].clone();
        state.update_distances(&same, &library).unwrap();
        assert!((state.distances_sq[0] - 1.25).abs() < 1e-12);
    }

    #[test]
    fn incremental_distances_match_a_direct_computation() {
        let mut day_a = flat_tiny_day("a", 5, 0.5, 80.0);
        let mut day_b = flat_tiny_day("b", 5, 0.8, 80.0);
        for t in 0..5 {
            day_a.periods[t].load_mw[1] = 0.4 + 0.1 * t as f64;
            day_b.periods[t].res_mw[1] = 0.05 * t as f64;
        }
        let library = ScenarioLibrary::new(vec![day_a, day_b], 2).unwrap();
        let mut state = ReferenceState::new(2, 1, 1.0);
        let observations: Vec<Realization> = (0..5)
            .map(|t| {
                Realization::with_power_factor(
                    vec![0.0, 0.6 + 0.02 * t as f64],
                    vec![0.0, 0.03 * t as f64],
                    80.0,
                    0.95,
                )
            })
            .collect();
        for obs in &observations {
            state.update_distances(obs, &library).unwrap();
        }
        for (s, day) in library.days.iter().enumerate() {
            let mut direct = 0.0;
            for (obs, past) in observations.iter().zip(&day.periods) {
                for b in 0..2 {
                    let dr = (obs.res_mw[b] - past.res_mw[b]) / library.res_scale[b];
                    let dl = (obs.load_mw[b] - past.load_mw[b]) / library.load_scale[b];
                    direct += dr * dr + dl * dl;
                }
            }
            assert!((state.distances_sq[s] - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn distance_updates_stop_at_the_library_horizon() {
        let library = ScenarioLibrary::new(vec![flat_tiny_day("a", 2, 0.5, 80.0)], 2).unwrap();
        let mut state = ReferenceState::new(1, 1, 1.0);
        let obs = Realization::with_power_factor(vec![0.0, 0.5], vec![0.0, 0.0], 80.0, 0.95);
        state.update_distances(&obs, &library).unwrap();
        state.update_distances(&obs, &library).unwrap();
        assert!(state.update_distances(&obs, &library).is_err());
        let short = Realization::with_power_factor(vec![0.5], vec![0.0], 80.0, 0.95);
        let mut fresh = ReferenceState::new(1, 1, 1.0);
        assert!(fresh.update_distances(&short, &library).is_err());
    }

    #[test]
    fn kernel_weight_examples() {
        let w = kernel_weights(&[3.0, 3.0, 3.0], 4, 1.0);
        for v in &w {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        // d² = [1, 2] with t·τ = 2: ω₁ = e^{−1/2} / (e^{−1/2} + e^{−1}).
        let w = kernel_weights(&[1.0, 2.0], 2, 1.0);
        let expect = (-0.5f64).exp() / ((-0.5f64).exp() + (-1.0f64).exp());
        assert!((w[0] - expect).abs() < 1e-12);
        assert!((w[0] - 0.6225).abs() < 5e-5);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // A huge bandwidth flattens the kernel toward uniform weights.
        let w = kernel_weights(&[1.0, 2.0, 5.0], 1, 1e9);
        for v in &w {
            assert!((v - 1.0 / 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn closer_scenarios_always_weigh_more() {
        let d = [0.3, 2.0, 0.9, 5.5, 0.30001];
        let w = kernel_weights(&d, 7, 0.8);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..d.len() {
            for j in 0..d.len() {
                if d[i] < d[j] {
                    assert!(w[i] > w[j], "d {} < {} but ω {} <= {}", d[i], d[j], w[i], w[j]);
                }
            }
        }
    }

    fn toy_sequences() -> ExPostSequences {
        ExPostSequences {
            entries: vec![
                ExPostSequence {
                    scenario_id: "a".into(),
                    soc: vec![vec![0.2, 0.4]],
                    grid: vec![0.4, 1.0],
                    cost: 1.0,
                },
                ExPostSequence {
                    scenario_id: "b".into(),
                    soc: vec![vec![0.6, 0.8]],
                    grid: vec![0.8, 2.0],
                    cost: 2.0,
                },
            ],
        }
    }

    #[test]
    fn reference_blends_the_stored_trajectories() {
        let seqs = toy_sequences();
        let (soc, grid) = reference(&[0.25, 0.75], &seqs, 0);
        assert!((grid - 0.7).abs() < 1e-12);
        assert!((soc[0] - 0.5).abs() < 1e-12);
        // One-hot weights reproduce a single scenario exactly.
        let (soc, grid) = reference(&[0.0, 1.0], &seqs, 1);
        assert_eq!(soc[0], 0.8);
        assert_eq!(grid, 2.0);
        // Identical sequences are immune to the weighting.
        let mut same = toy_sequences();
        same.entries[1].soc = same.entries[0].soc.clone();
        same.entries[1].grid = same.entries[0].grid.clone();
        let (soc, grid) = reference(&[0.9, 0.1], &same, 0);
        assert_eq!(soc[0], 0.2);
        assert_eq!(grid, 0.4);
    }

    #[test]
    fn references_stay_inside_the_sequence_envelope() {
        let seqs = toy_sequences();
        for t in 0..2 {
            let (soc, grid) = reference(&[0.37, 0.63], &seqs, t);
            let grid_lo = seqs.entries.iter().map(|e| e.grid[t]).fold(f64::INFINITY, f64::min);
            let grid_hi = seqs.entries.iter().map(|e| e.grid[t]).fold(f64::NEG_INFINITY, f64::max);
            assert!(grid >= grid_lo - 1e-12 && grid <= grid_hi + 1e-12);
            let soc_lo = seqs.entries.iter().map(|e| e.soc[0][t]).fold(f64::INFINITY, f64::min);
            let soc_hi = seqs.entries.iter().map(|e| e.soc[0][t]).fold(f64::NEG_INFINITY, f64::max);
            assert!(soc[0] >= soc_lo - 1e-12 && soc[0] <= soc_hi + 1e-12);
        }
    }

    #[test]
    fn advance_tracks_the_matching_scenario() {
        // Two very different library days; observations replay day "near"
        // exactly, so its weight should crush the other's and the reference
        // should converge to its trajectories.
        let mut near = flat_tiny_day("near", 4, 0.3, 80.0);
        let far = flat_tiny_day("far", 4, 0.9, 80.0);
        for t in 0..4 {
            near.periods[t].load_mw[1] = 0.3 + 0.02 * t as f64;
        }
        let library = ScenarioLibrary::new(vec![near.clone(), far], 2).unwrap();
        let spec = tiny_spec(4);
        let sequences = solve_library(&spec, &library, &AdmmSettings::default()).unwrap();
        let mut state = ReferenceState::new(2, 1, 0.05);
        for t in 0..4 {
            let obs = near.periods[t].clone();
            let (soc_ref, grid_ref) = state.advance(&obs, &library, &sequences).unwrap();
            assert!((state.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(state.weights[0] > state.weights[1]);
            let expect_grid = sequences.entries[0].grid[t];
            let envelope = (sequences.entries[1].grid[t] - expect_grid).abs();
            assert!((grid_ref - expect_grid).abs() <= envelope + 1e-12);
            assert_eq!(soc_ref.len(), 1);
        }
        // Replaying one day exactly keeps its distance at zero.
        assert_eq!(state.distances_sq[0], 0.0);
        assert!(state.distances_sq[1] > 1.0);
        assert!(state.weights[0] > 0.99);
    }

    #[test]
    fn advance_requires_matching_sequence_and_library_sizes() {
        let library = ScenarioLibrary::new(vec![flat_tiny_day("a", 2, 0.5, 80.0)], 2).unwrap();
        let mut state = ReferenceState::new(1, 1, 1.0);
        let obs = Realization::with_power_factor(vec![0.0, 0.5], vec![0.0, 0.0], 80.0, 0.95);
        let empty = ExPostSequences { entries: vec![] };
        assert!(state.advance(&obs, &library, &empty).is_err());
    }
}
