//! Per-round hindsight benchmarks and the synthetic single-stage driver.

use crate::oco::synthetic::{run_drift_benchmark, DriftSetup};
use crate::oco::{BenchmarkPoint, OcoError, OcoMetrics, RoundRecord};
use crate::solver::{solve_qp_with, AdmmSettings, QpBuilder, QuadraticProgram, SolveStatus};

use super::{RoundLog, RoundProblem, SimError};

/// How many rounds of a day received a hindsight benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkCoverage {
    pub benchmarked: usize,
    /// Rounds whose revealed constraints admit no feasible point at all, so
    /// no benchmark exists; these stay unfilled.
    pub skipped: usize,
}

impl BenchmarkCoverage {
    pub fn complete(&self) -> bool {
        self.skipped == 0
    }
}

/// The round's revealed problem as a single solvable program: its cost over
/// the action set intersected with the revealed `≤ 0` rows.
pub(crate) fn constrained_qp(problem: &RoundProblem) -> Result<QuadraticProgram, SimError> {
    let dim = problem.feasible.dim();
    let mut b = QpBuilder::new(dim);
    for i in 0..dim {
        b.set_var_bounds(i, problem.feasible.lower[i], problem.feasible.upper[i]);
    }
    for row in &problem.feasible.rows {
        b.add_row(&row.terms, row.lower, row.upper);
    }
    for r in 0..problem.strain.rows {
        let coeffs = problem.strain.row(r);
        let terms: Vec<(usize, f64)> = coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| (i, *c))
            .collect();
        b.add_row(&terms, f64::NEG_INFINITY, -problem.strain.offsets[r]);
    }
    let hessian = problem.cost.hessian();
    for i in 0..dim {
        // The builder doubles diagonal entries, so feed half the Hessian
        // diagonal; off-diagonal products already count both (i,j) and (j,i).
        b.add_obj_product(i, i, hessian[i * dim + i] / 2.0);
        for j in (i + 1)..dim {
            let h = hessian[i * dim + j];
            if h != 0.0 {
                b.add_obj_product(i, j, h);
            }
        }
    }
    for (i, &q) in problem.cost.linear().iter().enumerate() {
        if q != 0.0 {
            b.add_obj_linear(i, q);
        }
    }
    Ok(b.finish()?)
}

/// Solves each logged round's revealed problem to optimality and attaches
/// the minimizer as that round's benchmark. Rounds whose revealed rows cut
/// the action set to nothing are skipped (counted, benchmark left empty);
/// a solve that stalls without a verdict is an error naming the round.
pub fn round_benchmark(
    rounds: &mut [RoundLog],
    settings: &AdmmSettings,
) -> Result<BenchmarkCoverage, SimError> {
    let mut coverage = BenchmarkCoverage {
        benchmarked: 0,
        skipped: 0,
    };
    for (t, log) in rounds.iter_mut().enumerate() {
        let qp = constrained_qp(&log.problem)?;
        let report =
            solve_qp_with(&qp, settings).map_err(|e| SimError::at_round(t, SimError::from(e)))?;
        match report.status {
            SolveStatus::Optimal => {
                let value = log.problem.cost.value(&report.solution);
                log.record.benchmark = Some(BenchmarkPoint {
                    point: report.solution,
                    value,
                });
                coverage.benchmarked += 1;
            }
            SolveStatus::InfeasibleDetected => {
                coverage.skipped += 1;
            }
            SolveStatus::MaxIterations => {
                return Err(SimError::at_round(
                    t,
                    SimError::from(crate::solver::SolveError::NotConverged {
                        status: report.status,
                        iterations: report.iterations,
                        primal: report.primal_residual,
                        dual: report.dual_residual,
                    }),
                ));
            }
        }
    }
    Ok(coverage)
}

/// Runs the drifting synthetic single-stage benchmark and returns the full
/// per-round history with its summary metrics. `rounds` must be at least
/// one hundred so the averaged trends are meaningful.
pub fn synthetic_oco_benchmark(
    rounds: usize,
    dim: usize,
    seed: u64,
) -> Result<(Vec<RoundRecord>, OcoMetrics), OcoError> {
    run_drift_benchmark(&DriftSetup::new(dim, rounds, seed), &AdmmSettings::default())
}
