//! Run summaries: cumulative cost against per-round benchmarks, constraint
//! violation in both the round-by-round and the averaged sense, and the path
//! length of the benchmark sequence.

use serde::{Deserialize, Serialize};

/// Per-round benchmark: the best feasible point for that round's revealed
/// data and its cost value.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkPoint {
    pub point: Vec<f64>,
    pub value: f64,
}

/// Everything recorded about one committed round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    /// The committed decision.
    pub decision: Vec<f64>,
    /// Revealed cost evaluated at the committed decision.
    pub cost_value: f64,
    /// Revealed monitored-row values at the committed decision (positive
    /// entries are violations).
    pub strain: Vec<f64>,
    /// Per-round benchmark, when one was computed.
    pub benchmark: Option<BenchmarkPoint>,
}

/// Summary of a recorded run.
///
/// `regret` and `benchmark_path` are only available when every round carried
/// a benchmark. `hard_violation` sums the per-round norms of the violation
/// parts, so violations in opposite directions cannot cancel;
/// `soft_violation` norms the violation part of the summed strain, so they
/// can. The hard figure always dominates the soft one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcoMetrics {
    pub rounds: usize,
    pub total_cost: f64,
    pub regret: Option<f64>,
    pub hard_violation: f64,
    pub soft_violation: f64,
    pub benchmark_path: Option<f64>,
}

/// Computes the run summary. All records must report the same number of
/// monitored rows.
pub fn compute_metrics(records: &[RoundRecord]) -> OcoMetrics {
    let rounds = records.len();
    let total_cost: f64 = records.iter().map(|r| r.cost_value).sum();

    let strain_rows = records.first().map_or(0, |r| r.strain.len());
    let mut hard = 0.0;
    let mut summed = vec![0.0; strain_rows];
    for record in records {
        assert_eq!(
            record.strain.len(),
            strain_rows,
            "records disagree on the monitored row count"
        );
        let mut round_sq = 0.0;
        for (sum, s) in summed.iter_mut().zip(&record.strain) {
            let excess = s.max(0.0);
            round_sq += excess * excess;
            *sum += s;
        }
        hard += round_sq.sqrt();
    }
    let soft = summed
        .iter()
        .map(|s| {
            let excess = s.max(0.0);
            excess * excess
        })
        .sum::<f64>()
        .sqrt();

    let all_benchmarked = !records.is_empty() && records.iter().all(|r| r.benchmark.is_some());
    let regret = all_benchmarked.then(|| {
        total_cost
            - records
                .iter()
                .map(|r| r.benchmark.as_ref().unwrap().value)
                .sum::<f64>()
    });
    let benchmark_path = all_benchmarked.then(|| {
        records
            .windows(2)
            .map(|pair| {
                let a = &pair[0].benchmark.as_ref().unwrap().point;
                let b = &pair[1].benchmark.as_ref().unwrap().point;
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    });

    OcoMetrics {
        rounds,
        total_cost,
        regret,
        hard_violation: hard,
        soft_violation: soft,
        benchmark_path,
    }
}
