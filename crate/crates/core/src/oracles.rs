//! Independent reference implementations used only by test suites.
//!
//! Everything here deliberately avoids the production code paths: the QP
//! oracle is an augmented-Lagrangian projected-gradient method (no operator
//! splitting, no factorizations), quantiles come from brute-force sampling,
//! and tiny dispatch instances can be cross-checked by exhaustive lattice
//! search. Agreement between these routes and the production solver is what
//! the acceptance suite certifies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::linalg;
use crate::solver::{QpBuilder, QuadraticProgram};

/// Solves `min 0.5 x'Px + q'x` over the box and rows of `qp` by an augmented
/// Lagrangian outer loop with an accelerated projected-gradient inner loop.
/// Runs until the joint stationarity and feasibility residuals drop below
/// `tol` (or the iteration budget is exhausted, which the caller should treat
/// as a test failure by checking the returned residual).
pub fn projected_gradient_qp(qp: &QuadraticProgram, tol: f64) -> PgSolution {
    let n = qp.num_vars();
    let m = qp.num_rows();
    let lip_p = power_iteration_p(qp);
    let norm_a = power_iteration_a(qp);

    let mut x = vec![0.0; n];
    for i in 0..n {
        x[i] = 0.0f64.clamp(qp.var_lower[i], qp.var_upper[i]);
    }
    let mut y = vec![0.0; m];
    let mut penalty = 10.0;
    let mut feas = f64::INFINITY;
    let mut stat = f64::INFINITY;

    for _outer in 0..200 {
        let lip = lip_p + penalty * norm_a * norm_a + 1e-12;
        let step = 1.0 / lip;
        // FISTA with restart on the smoothed augmented Lagrangian.
        let mut momentum = x.clone();
        let mut t_acc = 1.0f64;
        let mut prev_obj = f64::INFINITY;
        for inner in 0..200_000 {
            let grad = augmented_gradient(qp, &momentum, &y, penalty);
            let mut x_next = vec![0.0; n];
            for i in 0..n {
                x_next[i] =
                    (momentum[i] - step * grad[i]).clamp(qp.var_lower[i], qp.var_upper[i]);
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_acc * t_acc).sqrt());
            let beta = (t_acc - 1.0) / t_next;
            for i in 0..n {
                momentum[i] = x_next[i] + beta * (x_next[i] - x[i]);
            }
            t_acc = t_next;
            x = x_next;

            if inner % 64 == 0 {
                let obj = augmented_value(qp, &x, &y, penalty);
                if obj > prev_obj {
                    // Restart the momentum sequence.
                    momentum.copy_from_slice(&x);
                    t_acc = 1.0;
                }
                prev_obj = obj;
                let g = augmented_gradient(qp, &x, &y, penalty);
                let mut res = 0.0f64;
                for i in 0..n {
                    let proj = (x[i] - step * g[i]).clamp(qp.var_lower[i], qp.var_upper[i]);
                    res = res.max(((x[i] - proj) / step).abs());
                }
                stat = res;
                if res <= 0.1 * tol {
                    break;
                }
            }
        }
        // Multiplier update and feasibility measurement.
        let mut ax = vec![0.0; m];
        qp.rows.matvec(&x, &mut ax);
        feas = 0.0;
        for r in 0..m {
            let w = ax[r] + y[r] / penalty;
            let proj = w.clamp(qp.row_lower[r], qp.row_upper[r]);
            y[r] = penalty * (w - proj);
            feas = feas.max((ax[r] - ax[r].clamp(qp.row_lower[r], qp.row_upper[r])).abs());
        }
        if feas <= tol && stat <= tol {
            break;
        }
        penalty = (penalty * 5.0).min(1e8);
    }
    PgSolution {
        objective: qp.objective(&x),
        x,
        row_duals: y,
        feasibility: feas,
        stationarity: stat,
    }
}

/// Oracle output: primal point, multipliers for the general rows, and the
/// residuals actually reached.
pub struct PgSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub row_duals: Vec<f64>,
    pub feasibility: f64,
    pub stationarity: f64,
}

fn augmented_gradient(qp: &QuadraticProgram, x: &[f64], y: &[f64], penalty: f64) -> Vec<f64> {
    let n = qp.num_vars();
    let m = qp.num_rows();
    let mut grad = vec![0.0; n];
    qp.quad.matvec(x, &mut grad);
    linalg::axpy(1.0, &qp.linear, &mut grad);
    if m > 0 {
        let mut ax = vec![0.0; m];
        qp.rows.matvec(x, &mut ax);
        let mut mult = vec![0.0; m];
        for r in 0..m {
            let w = ax[r] + y[r] / penalty;
            mult[r] = penalty * (w - w.clamp(qp.row_lower[r], qp.row_upper[r]));
        }
        qp.rows.matvec_transpose_add(&mult, &mut grad);
    }
    grad
}

fn augmented_value(qp: &QuadraticProgram, x: &[f64], y: &[f64], penalty: f64) -> f64 {
    let m = qp.num_rows();
    let mut value = qp.objective(x);
    if m > 0 {
        let mut ax = vec![0.0; m];
        qp.rows.matvec(x, &mut ax);
        for r in 0..m {
            let w = ax[r] + y[r] / penalty;
            let d = w - w.clamp(qp.row_lower[r], qp.row_upper[r]);
            value += 0.5 * penalty * d * d;
        }
    }
    value
}

fn power_iteration_p(qp: &QuadraticProgram) -> f64 {
    let n = qp.num_vars();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut w = vec![0.0; n];
        qp.quad.matvec(&v, &mut w);
        let norm = linalg::norm2(&w);
        if norm <= 1e-14 {
            return 0.0;
        }
        lambda = norm;
        for i in 0..n {
            v[i] = w[i] / norm;
        }
    }
    lambda
}

fn power_iteration_a(qp: &QuadraticProgram) -> f64 {
    let n = qp.num_vars();
    let m = qp.num_rows();
    if m == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut sigma = 0.0;
    for _ in 0..100 {
        let mut av = vec![0.0; m];
        qp.rows.matvec(&v, &mut av);
        let mut w = vec![0.0; n];
        qp.rows.matvec_transpose_add(&av, &mut w);
        let norm = linalg::norm2(&w);
        if norm <= 1e-14 {
            return 0.0;
        }
        sigma = norm.sqrt();
        for i in 0..n {
            v[i] = w[i] / norm;
        }
    }
    sigma
}

/// Draws a random feasible QP with `n <= 10` variables and `m <= 10` rows:
/// a (possibly singular) positive semidefinite quadratic, a finite box, and
/// rows built around an interior point so the instance is always feasible.
/// Roughly a fifth of the rows are equalities.
pub fn random_qp(seed: u64) -> QuadraticProgram {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=10);
    let m = rng.gen_range(0..=10usize);
    let rank = rng.gen_range(0..=n);

    let mut qp = QpBuilder::new(n);
    // P = M'M from a rank x n factor.
    let mut factor = vec![0.0; rank * n];
    for v in factor.iter_mut() {
        *v = rng.sample::<f64, _>(StandardNormal);
    }
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in 0..rank {
                acc += factor[k * n + i] * factor[k * n + j];
            }
            if acc != 0.0 {
                if i == j {
                    qp.add_obj_product(i, i, 0.5 * acc);
                } else {
                    qp.add_obj_product(i, j, acc);
                }
            }
        }
    }
    for i in 0..n {
        qp.add_obj_linear(i, 2.0 * rng.sample::<f64, _>(StandardNormal));
        let lo = -1.0 - rng.gen_range(0.0..2.0);
        let hi = 1.0 + rng.gen_range(0.0..2.0);
        qp.set_var_bounds(i, lo, hi);
    }
    // Interior anchor guaranteeing feasibility.
    let anchor: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for _ in 0..m {
        let terms: Vec<(usize, f64)> = (0..n)
            .map(|i| (i, rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let at_anchor: f64 = terms.iter().map(|(i, c)| c * anchor[*i]).sum();
        if rng.gen_bool(0.2) {
            qp.add_row(&terms, at_anchor, at_anchor);
        } else {
            let slack_lo = rng.gen_range(0.05..1.5);
            let slack_hi = rng.gen_range(0.05..1.5);
            qp.add_row(&terms, at_anchor - slack_lo, at_anchor + slack_hi);
        }
    }
    qp.finish().expect("generated instance is well formed")
}

/// Empirical `1 - epsilon` quantile of a zero-mean unit-variance sample from
/// the named distribution, by sorting `samples` draws (nearest-rank rule).
pub fn mc_quantile(dist: &str, epsilon: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut draws: Vec<f64> = match dist {
        "gaussian" | "normal" => {
            let normal = Normal::new(0.0, 1.0).unwrap();
            (0..samples).map(|_| normal.sample(&mut rng)).collect()
        }
        "uniform" => {
            // Uniform on [-sqrt(3), sqrt(3)] has unit variance.
            let half = 3.0f64.sqrt();
            (0..samples).map(|_| rng.gen_range(-half..half)).collect()
        }
        other => panic!("mc_quantile: unsupported distribution {other}"),
    };
    draws.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((1.0 - epsilon) * samples as f64).ceil() as usize;
    draws[rank.saturating_sub(1).min(samples - 1)]
}

/// Exhaustive minimizer of `objective` over a regular lattice on a box,
/// skipping points rejected by `feasible`. Returns the best lattice point and
/// its value. Only viable for very small dimensions; tests use it to pin down
/// two- and three-variable dispatch rounds.
pub fn lattice_minimize(
    lower: &[f64],
    upper: &[f64],
    steps: usize,
    feasible: impl Fn(&[f64]) -> bool,
    objective: impl Fn(&[f64]) -> f64,
) -> (Vec<f64>, f64) {
    let dim = lower.len();
    assert!(dim <= 4, "lattice search is exponential in the dimension");
    let mut best = (Vec::new(), f64::INFINITY);
    let mut idx = vec![0usize; dim];
    let mut point = vec![0.0; dim];
    loop {
        for d in 0..dim {
            let frac = if steps > 1 {
                idx[d] as f64 / (steps - 1) as f64
            } else {
                0.0
            };
            point[d] = lower[d] + frac * (upper[d] - lower[d]);
        }
        if feasible(&point) {
            let v = objective(&point);
            if v < best.1 {
                best = (point.clone(), v);
            }
        }
        // Odometer increment.
        let mut d = 0;
        loop {
            if d == dim {
                return best;
            }
            idx[d] += 1;
            if idx[d] < steps {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}
