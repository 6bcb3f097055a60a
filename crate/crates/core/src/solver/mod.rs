//! First-order operator-splitting solver for convex quadratic programs
//!
//! Problems take the form
//!
//! ```text
//!   minimize    0.5 x' P x + q' x
//!   subject to  l  <=  A x  <=  u        (general rows)
//!               lo <=   x   <=  hi       (variable box)
//! ```
//!
//! with `P` positive semidefinite. The solver is an ADMM scheme in the OSQP
//! family: the box is folded into the row block, iterates alternate between a
//! regularized equality-constrained subproblem (one `L D L^T` solve against a
//! cached envelope factorization) and a clamp onto `[l, u]`, with
//! over-relaxation and a periodically adapted penalty. Termination residuals
//! are normalized component-wise so problems mixing very different magnitudes
//! (tracking weights around `1e4` next to per-unit voltage rows around `1e-2`)
//! converge to a meaningful relative accuracy.
//!
//! The same module carries the hinge prox step used by the online experts: the
//! penalty `<w, [g(x)]_+>` is lifted to slack variables (`s >= g(x)`, `s >= 0`)
//! so the subproblem stays a plain QP.

mod admm;
mod ldl;
mod prox;
mod sparse;

pub use prox::{project_box, solve_prox_step, AffineBlock, BoundedRow, DecisionSet};
pub use sparse::SparseMatrix;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("inconsistent problem shape: {0}")]
    Shape(String),
    #[error("non-finite data: {0}")]
    NonFinite(String),
    #[error("quadratic term is asymmetric by {0:.3e} (tolerance 1e-10)")]
    AsymmetricQuadratic(f64),
    #[error("empty feasible interval: {0}")]
    EmptyInterval(String),
    #[error("unbounded objective detected after {0} iterations")]
    Unbounded(usize),
    #[error("subproblem did not converge: status {status:?} after {iterations} iterations (primal {primal:.3e}, dual {dual:.3e})")]
    NotConverged {
        status: SolveStatus,
        iterations: usize,
        primal: f64,
        dual: f64,
    },
}

/// Sparse quadratic program; see the module header for the sign conventions.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub quad: SparseMatrix,
    pub linear: Vec<f64>,
    pub rows: SparseMatrix,
    pub row_lower: Vec<f64>,
    pub row_upper: Vec<f64>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
}

impl QuadraticProgram {
    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn num_rows(&self) -> usize {
        self.row_lower.len()
    }

    /// `0.5 x' P x + q' x` at `x`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut px = vec![0.0; self.num_vars()];
        self.quad.matvec(x, &mut px);
        0.5 * linalg::dot(x, &px) + linalg::dot(&self.linear, x)
    }

    fn validate(&self) -> Result<(), SolveError> {
        let n = self.num_vars();
        if n == 0 {
            return Err(SolveError::Shape("problem has no variables".into()));
        }
        if self.quad.rows() != n || self.quad.cols() != n {
            return Err(SolveError::Shape(format!(
                "quadratic term is {}x{} for {n} variables",
                self.quad.rows(),
                self.quad.cols()
            )));
        }
        if self.rows.cols() != n {
            return Err(SolveError::Shape(format!(
                "row block has {} columns for {n} variables",
                self.rows.cols()
            )));
        }
        let m = self.rows.rows();
        if self.row_lower.len() != m || self.row_upper.len() != m {
            return Err(SolveError::Shape("row bound lengths disagree".into()));
        }
        if self.var_lower.len() != n || self.var_upper.len() != n {
            return Err(SolveError::Shape("variable bound lengths disagree".into()));
        }
        for v in self.linear.iter() {
            if !v.is_finite() {
                return Err(SolveError::NonFinite("linear term".into()));
            }
        }
        for (k, (l, u)) in self.row_lower.iter().zip(&self.row_upper).enumerate() {
            if l.is_nan() || u.is_nan() {
                return Err(SolveError::NonFinite(format!("row {k} bounds")));
            }
            if l > u {
                return Err(SolveError::EmptyInterval(format!(
                    "row {k} has lower {l} > upper {u}"
                )));
            }
        }
        for (i, (l, u)) in self.var_lower.iter().zip(&self.var_upper).enumerate() {
            if l.is_nan() || u.is_nan() {
                return Err(SolveError::NonFinite(format!("variable {i} bounds")));
            }
            if l > u {
                return Err(SolveError::EmptyInterval(format!(
                    "variable {i} has lower {l} > upper {u}"
                )));
            }
        }
        let asym = self.quad.asymmetry();
        if asym > 1e-10 {
            return Err(SolveError::AsymmetricQuadratic(asym));
        }
        Ok(())
    }
}

/// Incremental construction of a [`QuadraticProgram`].
#[derive(Debug, Clone)]
pub struct QpBuilder {
    n: usize,
    quad_triplets: Vec<(usize, usize, f64)>,
    linear: Vec<f64>,
    row_triplets: Vec<(usize, usize, f64)>,
    row_lower: Vec<f64>,
    row_upper: Vec<f64>,
    var_lower: Vec<f64>,
    var_upper: Vec<f64>,
}

impl QpBuilder {
    pub fn new(n: usize) -> Self {
        QpBuilder {
            n,
            quad_triplets: Vec::new(),
            linear: vec![0.0; n],
            row_triplets: Vec::new(),
            row_lower: Vec::new(),
            row_upper: Vec::new(),
            var_lower: vec![f64::NEG_INFINITY; n],
            var_upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.row_lower.len()
    }

    /// Adds `c * x_i * x_j` to the objective.
    pub fn add_obj_product(&mut self, i: usize, j: usize, c: f64) {
        if c == 0.0 {
            return;
        }
        if i == j {
            self.quad_triplets.push((i, i, 2.0 * c));
        } else {
            self.quad_triplets.push((i, j, c));
            self.quad_triplets.push((j, i, c));
        }
    }

    /// Adds `c * (sum_k w_k x_k + shift)^2` to the objective, dropping the
    /// constant part (tracked by callers when they need exact values).
    pub fn add_obj_square(&mut self, terms: &[(usize, f64)], shift: f64, c: f64) {
        if c == 0.0 {
            return;
        }
        for (a, (i, wi)) in terms.iter().enumerate() {
            self.add_obj_product(*i, *i, c * wi * wi);
            for (j, wj) in terms.iter().skip(a + 1) {
                self.add_obj_product(*i, *j, 2.0 * c * wi * wj);
            }
            self.add_obj_linear(*i, 2.0 * c * shift * wi);
        }
    }

    /// Adds `c * x_i` to the objective.
    pub fn add_obj_linear(&mut self, i: usize, c: f64) {
        self.linear[i] += c;
    }

    /// Appends the row `lower <= sum_k coeff_k x_k <= upper`, returning its index.
    pub fn add_row(&mut self, terms: &[(usize, f64)], lower: f64, upper: f64) -> usize {
        let r = self.row_lower.len();
        for (i, c) in terms {
            self.row_triplets.push((r, *i, *c));
        }
        self.row_lower.push(lower);
        self.row_upper.push(upper);
        r
    }

    /// Sets (overwrites) the box for variable `i`.
    pub fn set_var_bounds(&mut self, i: usize, lower: f64, upper: f64) {
        self.var_lower[i] = lower;
        self.var_upper[i] = upper;
    }

    /// Intersects the existing box for variable `i` with `[lower, upper]`.
    pub fn tighten_var_bounds(&mut self, i: usize, lower: f64, upper: f64) {
        self.var_lower[i] = self.var_lower[i].max(lower);
        self.var_upper[i] = self.var_upper[i].min(upper);
    }

    pub fn finish(self) -> Result<QuadraticProgram, SolveError> {
        let m = self.row_lower.len();
        let qp = QuadraticProgram {
            quad: SparseMatrix::from_triplets(self.n, self.n, &self.quad_triplets)?,
            linear: self.linear,
            rows: SparseMatrix::from_triplets(m, self.n, &self.row_triplets)?,
            row_lower: self.row_lower,
            row_upper: self.row_upper,
            var_lower: self.var_lower,
            var_upper: self.var_upper,
        };
        qp.validate()?;
        Ok(qp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    InfeasibleDetected,
}

/// Solver outcome. `primal_residual` and `dual_residual` are the worst
/// component-wise normalized KKT residuals (see the module header); status
/// [`SolveStatus::Optimal`] guarantees both are at or below the requested
/// tolerance. `row_duals` and `var_duals` are the multipliers for the general
/// rows and the variable box, signed positive when the upper bound binds.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub row_duals: Vec<f64>,
    pub var_duals: Vec<f64>,
}

/// Tunables for the splitting iteration.
#[derive(Debug, Clone)]
pub struct AdmmSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Over-relaxation coefficient applied to the subproblem output.
    pub relaxation: f64,
    /// Tikhonov regularizer added to the quadratic term.
    pub sigma: f64,
    /// Initial penalty; adapted on the fly unless `adaptive_penalty` is off.
    pub penalty: f64,
    /// Extra penalty multiplier on equality rows (`l == u`).
    pub equality_penalty_scale: f64,
    pub adaptive_penalty: bool,
    /// Residuals are evaluated every this many iterations.
    pub check_interval: usize,
    /// Ruiz equilibration sweeps applied before iterating.
    pub scaling_sweeps: usize,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        AdmmSettings {
            tolerance: 1e-6,
            max_iterations: 20_000,
            relaxation: 1.6,
            sigma: 1e-6,
            penalty: 0.1,
            equality_penalty_scale: 1e3,
            adaptive_penalty: true,
            check_interval: 25,
            scaling_sweeps: 10,
        }
    }
}

impl AdmmSettings {
    pub fn with_tolerance(tolerance: f64, max_iterations: usize) -> Self {
        AdmmSettings {
            tolerance,
            max_iterations,
            ..AdmmSettings::default()
        }
    }
}

/// Solves the program with explicit tolerance and iteration budget.
pub fn solve_qp(
    qp: &QuadraticProgram,
    tolerance: f64,
    max_iterations: usize,
) -> Result<SolveReport, SolveError> {
    solve_qp_with(qp, &AdmmSettings::with_tolerance(tolerance, max_iterations))
}

/// Solves the program with full control over the iteration tunables.
pub fn solve_qp_with(
    qp: &QuadraticProgram,
    settings: &AdmmSettings,
) -> Result<SolveReport, SolveError> {
    qp.validate()?;
    if settings.tolerance <= 0.0 {
        return Err(SolveError::Shape("tolerance must be positive".into()));
    }
    admm::solve(qp, settings)
}

/// Stationarity, feasibility, and complementarity residuals of a candidate
/// primal/dual pair, computed from the problem data alone so reports can be
/// audited independently of the solver. Complementarity is normalized as
/// `|y| * gap / (1 + |y|)` per row, which stays meaningful for large duals.
pub fn kkt_residuals(
    qp: &QuadraticProgram,
    x: &[f64],
    row_duals: &[f64],
    var_duals: &[f64],
) -> (f64, f64, f64) {
    let n = qp.num_vars();
    let m = qp.num_rows();
    let mut stationarity = vec![0.0; n];
    qp.quad.matvec(x, &mut stationarity);
    linalg::axpy(1.0, &qp.linear, &mut stationarity);
    qp.rows.matvec_transpose_add(row_duals, &mut stationarity);
    linalg::axpy(1.0, var_duals, &mut stationarity);
    let stat = linalg::norm_inf(&stationarity);

    let mut ax = vec![0.0; m];
    qp.rows.matvec(x, &mut ax);
    let mut feas = 0.0f64;
    let mut comp = 0.0f64;
    let gap = |v: f64, l: f64, u: f64, y: f64| -> (f64, f64) {
        let viol = (l - v).max(v - u).max(0.0);
        let active_gap = if y > 0.0 {
            if u.is_finite() {
                (u - v).abs()
            } else {
                f64::INFINITY
            }
        } else if y < 0.0 {
            if l.is_finite() {
                (v - l).abs()
            } else {
                f64::INFINITY
            }
        } else {
            0.0
        };
        let c = if y == 0.0 {
            0.0
        } else {
            y.abs() * active_gap / (1.0 + y.abs())
        };
        (viol, c)
    };
    for r in 0..m {
        let (v, c) = gap(ax[r], qp.row_lower[r], qp.row_upper[r], row_duals[r]);
        feas = feas.max(v);
        comp = comp.max(c);
    }
    for i in 0..n {
        let (v, c) = gap(x[i], qp.var_lower[i], qp.var_upper[i], var_duals[i]);
        feas = feas.max(v);
        comp = comp.max(c);
    }
    (stat, feas, comp)
}
