//! Prox subproblem for the virtual-queue experts and small projection
//! utilities shared by the online policies.
//!
//! Each expert advances by solving
//!
//! ```text
//!   min_{x in X}  alpha <grad, x - x_prev>
//!               + alpha beta <Q, [g(x)]_+>
//!               + || x - x_prev ||^2
//! ```
//!
//! where `X` is a box possibly intersected with a few affine rows (state-of
//! -charge corridors, for instance) and `g` is the block of soft constraint
//! rows observed last round. The hinge is handled exactly by lifting each row
//! to a slack: `s_k >= g_k(x)`, `s_k >= 0`, with linear cost
//! `alpha beta Q_k s_k`; the lifted problem is a plain QP.

use super::{AdmmSettings, QpBuilder, SolveError, SolveStatus};

/// Ceiling on a slack's linear cost. A hinge weight only matters up to the
/// magnitude of the optimal multiplier of the corresponding hard constraint;
/// beyond that the minimizer is unchanged, so clamping preserves the exact
/// solution while keeping the subproblem well scaled. The queue floors grow
/// linearly with the round index and would otherwise push coefficients past
/// `1e8` on long horizons, orders of magnitude above any multiplier this
/// problem family produces.
const SLACK_COST_CEILING: f64 = 1e6;

/// Affine map `g(x) = A x + b` evaluated row-wise; `coeffs` is row-major.
#[derive(Debug, Clone)]
pub struct AffineBlock {
    pub rows: usize,
    pub dim: usize,
    pub coeffs: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl AffineBlock {
    pub fn new(rows: usize, dim: usize, coeffs: Vec<f64>, offsets: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), rows * dim);
        assert_eq!(offsets.len(), rows);
        AffineBlock {
            rows,
            dim,
            coeffs,
            offsets,
        }
    }

    /// Block with no rows (a round without soft constraints).
    pub fn empty(dim: usize) -> Self {
        AffineBlock {
            rows: 0,
            dim,
            coeffs: Vec::new(),
            offsets: Vec::new(),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.coeffs[r * self.dim..(r + 1) * self.dim]
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| crate::linalg::dot(self.row(r), x) + self.offsets[r])
            .collect()
    }
}

/// One affine row with interval bounds, `lower <= sum coeffs_k x_k <= upper`.
#[derive(Debug, Clone)]
pub struct BoundedRow {
    pub terms: Vec<(usize, f64)>,
    pub lower: f64,
    pub upper: f64,
}

/// Feasible set of a round: a box intersected with optional affine rows.
#[derive(Debug, Clone)]
pub struct DecisionSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<BoundedRow>,
}

impl DecisionSet {
    pub fn bounds_only(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        DecisionSet {
            lower,
            upper,
            rows: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if self.lower.len() != self.upper.len() {
            return Err(SolveError::Shape("box bound lengths disagree".into()));
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() {
                return Err(SolveError::NonFinite(format!("box bounds for variable {i}")));
            }
            if l > u {
                return Err(SolveError::EmptyInterval(format!(
                    "box for variable {i} has lower {l} > upper {u}"
                )));
            }
        }
        for (k, row) in self.rows.iter().enumerate() {
            if row.lower > row.upper {
                return Err(SolveError::EmptyInterval(format!(
                    "set row {k} has lower {} > upper {}",
                    row.lower, row.upper
                )));
            }
        }
        Ok(())
    }

    /// Membership within slack `tol` on every bound and row.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        for i in 0..x.len() {
            if x[i] < self.lower[i] - tol || x[i] > self.upper[i] + tol {
                return false;
            }
        }
        for row in &self.rows {
            let v: f64 = row.terms.iter().map(|(i, c)| c * x[*i]).sum();
            if v < row.lower - tol || v > row.upper + tol {
                return false;
            }
        }
        true
    }

    /// Euclidean projection onto the set; a plain clamp when there are no
    /// affine rows, otherwise a small QP.
    pub fn project(&self, x: &[f64], settings: &AdmmSettings) -> Result<Vec<f64>, SolveError> {
        self.validate()?;
        if self.rows.is_empty() {
            return project_box(x, &self.lower, &self.upper);
        }
        let n = self.dim();
        let mut qp = QpBuilder::new(n);
        for i in 0..n {
            qp.add_obj_product(i, i, 1.0);
            qp.add_obj_linear(i, -2.0 * x[i]);
            qp.set_var_bounds(i, self.lower[i], self.upper[i]);
        }
        for row in &self.rows {
            qp.add_row(&row.terms, row.lower, row.upper);
        }
        let report = super::solve_qp_with(&qp.finish()?, settings)?;
        expect_optimal(&report)?;
        Ok(report.solution)
    }
}

/// Elementwise clamp of `x` onto `[lower, upper]`; errors on an empty box.
pub fn project_box(x: &[f64], lower: &[f64], upper: &[f64]) -> Result<Vec<f64>, SolveError> {
    if x.len() != lower.len() || x.len() != upper.len() {
        return Err(SolveError::Shape("projection dimensions disagree".into()));
    }
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        if lower[i] > upper[i] {
            return Err(SolveError::EmptyInterval(format!(
                "box for variable {i} has lower {} > upper {}",
                lower[i], upper[i]
            )));
        }
        out.push(x[i].clamp(lower[i], upper[i]));
    }
    Ok(out)
}

/// Solves the expert prox step described in the module header and returns the
/// minimizer over `set`.
#[allow(clippy::too_many_arguments)]
pub fn solve_prox_step(
    gradient: &[f64],
    queue: &[f64],
    alpha: f64,
    beta: f64,
    g_rows: &AffineBlock,
    set: &DecisionSet,
    x_prev: &[f64],
    settings: &AdmmSettings,
) -> Result<Vec<f64>, SolveError> {
    let n = set.dim();
    if gradient.len() != n || x_prev.len() != n || g_rows.dim != n {
        return Err(SolveError::Shape(
            "prox inputs disagree on the decision dimension".into(),
        ));
    }
    if queue.len() != g_rows.rows {
        return Err(SolveError::Shape(
            "queue length does not match the constraint block".into(),
        ));
    }
    if !(alpha > 0.0) || !(beta > 0.0) {
        return Err(SolveError::Shape("prox rates must be positive".into()));
    }
    set.validate()?;
    // The proximal center anchors the step; a center far outside the variable
    // box signals a caller bug (stale state), not a solvable subproblem.
    for i in 0..n {
        if x_prev[i] < set.lower[i] - 1e-6 || x_prev[i] > set.upper[i] + 1e-6 {
            return Err(SolveError::Shape(format!(
                "prox center component {i} ({}) lies outside the variable box [{}, {}]",
                x_prev[i], set.lower[i], set.upper[i]
            )));
        }
    }

    // Rows with zero weight cannot influence the minimizer; skip their slacks.
    let kept: Vec<usize> = (0..g_rows.rows)
        .filter(|k| alpha * beta * queue[*k] > 0.0)
        .collect();
    let total = n + kept.len();
    let mut qp = QpBuilder::new(total);
    for i in 0..n {
        qp.add_obj_product(i, i, 1.0);
        qp.add_obj_linear(i, alpha * gradient[i] - 2.0 * x_prev[i]);
        qp.set_var_bounds(i, set.lower[i], set.upper[i]);
    }
    for (slot, k) in kept.iter().enumerate() {
        let s = n + slot;
        let weight = (alpha * beta * queue[*k]).min(SLACK_COST_CEILING);
        qp.add_obj_linear(s, weight);
        qp.set_var_bounds(s, 0.0, f64::INFINITY);
        let mut terms: Vec<(usize, f64)> = g_rows
            .row(*k)
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| (i, *c))
            .collect();
        terms.push((s, -1.0));
        qp.add_row(&terms, f64::NEG_INFINITY, -g_rows.offsets[*k]);
    }
    for row in &set.rows {
        qp.add_row(&row.terms, row.lower, row.upper);
    }

    let report = super::solve_qp_with(&qp.finish()?, settings)?;
    expect_optimal(&report)?;
    Ok(report.solution[..n].to_vec())
}

fn expect_optimal(report: &super::SolveReport) -> Result<(), SolveError> {
    if report.status == SolveStatus::Optimal {
        Ok(())
    } else {
        Err(SolveError::NotConverged {
            status: report.status,
            iterations: report.iterations,
            primal: report.primal_residual,
            dual: report.dual_residual,
        })
    }
}
