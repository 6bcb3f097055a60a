//! The splitting iteration behind [`solve_qp`](super::solve_qp).

use super::ldl::EnvelopeMatrix;
use super::{AdmmSettings, QuadraticProgram, SolveError, SolveReport, SolveStatus, SparseMatrix};
use crate::linalg;

/// Relative threshold for the primal/dual infeasibility certificates.
const INFEASIBILITY_TOL: f64 = 1e-6;
/// Penalty rescaling triggers only outside `[1/ADAPT_TRIGGER, ADAPT_TRIGGER]`.
const ADAPT_TRIGGER: f64 = 5.0;

/// Residual checks per penalty-adaptation opportunity.
const ADAPT_EVERY_CHECKS: usize = 8;

/// Largest multiplicative change one penalty adaptation may apply. Residual
/// ratios are unreliable while the duals are still traversing toward their
/// equilibrium (the primal residual saturates at 1 and the dual residual
/// vanishes along the way), so a single reading must not be allowed to fling
/// the penalty across its whole range and restart that traversal from
/// scratch.
const ADAPT_STEP_LIMIT: f64 = 10.0;

struct Workspace {
    n: usize,
    m_total: usize,
    /// Scaled row block `[A; I]` and bounds.
    a: SparseMatrix,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Scaled quadratic term and linear term.
    p: SparseMatrix,
    q: Vec<f64>,
    /// Diagonal scalings: variables (`d`) and rows (`e`).
    d: Vec<f64>,
    e: Vec<f64>,
    /// Per-row penalty; equality rows carry the extra multiplier.
    rho: Vec<f64>,
    equality: Vec<bool>,
}

pub(super) fn solve(
    qp: &QuadraticProgram,
    settings: &AdmmSettings,
) -> Result<SolveReport, SolveError> {
    let mut ws = build_workspace(qp, settings)?;
    let n = ws.n;
    let m_total = ws.m_total;

    // Envelope profile of M = P + sigma I + A' diag(rho) A.
    let mut first = vec![0usize; n];
    {
        let mut best = (0..n).collect::<Vec<usize>>();
        for i in 0..n {
            let (cols, _) = ws.p.row(i);
            if let Some(c) = cols.first() {
                best[i] = best[i].min(*c);
            }
        }
        let mut row_min = vec![usize::MAX; m_total];
        for r in 0..m_total {
            let (cols, _) = ws.a.row(r);
            if let Some(c) = cols.first() {
                row_min[r] = *c;
            }
        }
        for r in 0..m_total {
            let (cols, _) = ws.a.row(r);
            for c in cols {
                best[*c] = best[*c].min(row_min[r]);
            }
        }
        for i in 0..n {
            first[i] = best[i].min(i);
        }
    }
    let mut kkt = EnvelopeMatrix::new(first);
    assemble(&mut kkt, &ws, settings.sigma);
    let mut factor = kkt.factorize();

    // Iterates (scaled space).
    let mut x = vec![0.0; n];
    let mut z = vec![0.0; m_total];
    for r in 0..m_total {
        z[r] = 0.0f64.clamp(ws.lower[r], ws.upper[r]);
    }
    let mut y = vec![0.0; m_total];

    // Work buffers.
    let mut rhs = vec![0.0; n];
    let mut zt = vec![0.0; m_total];
    let mut zr = vec![0.0; m_total];
    let mut prev_x = vec![0.0; n];
    let mut prev_y = vec![0.0; m_total];
    let mut x_un = vec![0.0; n];
    let mut z_un = vec![0.0; m_total];
    let mut y_un = vec![0.0; m_total];
    let mut delta = vec![0.0; n.max(m_total)];
    let mut scratch_n = vec![0.0; n];
    let mut scratch_m = vec![0.0; m_total];

    let relax = settings.relaxation;
    let mut penalty = settings.penalty;
    let mut primal_res = f64::INFINITY;
    let mut dual_res = f64::INFINITY;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = settings.max_iterations;

    for k in 1..=settings.max_iterations {
        prev_x.copy_from_slice(&x);
        prev_y.copy_from_slice(&y);

        // rhs = sigma x - q + A'(rho z - y)
        for r in 0..m_total {
            scratch_m[r] = ws.rho[r] * z[r] - y[r];
        }
        for i in 0..n {
            rhs[i] = settings.sigma * x[i] - ws.q[i];
        }
        ws.a.matvec_transpose_add(&scratch_m, &mut rhs);
        factor.solve_in_place(&mut rhs);

        ws.a.matvec(&rhs, &mut zt);
        for i in 0..n {
            x[i] = relax * rhs[i] + (1.0 - relax) * x[i];
        }
        for r in 0..m_total {
            zr[r] = relax * zt[r] + (1.0 - relax) * z[r];
            let v = zr[r] + y[r] / ws.rho[r];
            let z_new = v.clamp(ws.lower[r], ws.upper[r]);
            y[r] += ws.rho[r] * (zr[r] - z_new);
            z[r] = z_new;
        }

        if k % settings.check_interval != 0 && k != settings.max_iterations {
            continue;
        }

        // Unscale and evaluate normalized KKT residuals on the original data.
        for i in 0..n {
            x_un[i] = ws.d[i] * x[i];
        }
        for r in 0..m_total {
            z_un[r] = z[r] / ws.e[r];
            y_un[r] = ws.e[r] * y[r];
        }
        let (p_res, d_res) = residuals(
            qp,
            &x_un,
            &z_un,
            &y_un,
            &mut scratch_n,
            &mut scratch_m[..qp.num_rows()],
        );
        primal_res = p_res;
        dual_res = d_res;
        if p_res <= settings.tolerance && d_res <= settings.tolerance {
            status = SolveStatus::Optimal;
            iterations = k;
            break;
        }

        // Infeasibility certificates from successive-iterate differences.
        for r in 0..m_total {
            delta[r] = ws.e[r] * (y[r] - prev_y[r]);
        }
        if primal_infeasible(&ws, qp, &delta[..m_total], &mut scratch_n) {
            status = SolveStatus::InfeasibleDetected;
            iterations = k;
            break;
        }
        for i in 0..n {
            delta[i] = ws.d[i] * (x[i] - prev_x[i]);
        }
        if dual_infeasible(&ws, qp, &delta[..n], &mut scratch_m) {
            return Err(SolveError::Unbounded(k));
        }

        // Penalty adaptation keeps primal and dual progress balanced. It
        // runs on a much coarser clock than the residual checks: each
        // rescaling discards the factorization and perturbs the iteration
        // map, so adapting too eagerly can cycle instead of converge.
        if settings.adaptive_penalty
            && k < settings.max_iterations
            && k % (settings.check_interval * ADAPT_EVERY_CHECKS) == 0
        {
            let factor_raw = (p_res / d_res.max(1e-30)).sqrt();
            if factor_raw > ADAPT_TRIGGER || factor_raw < 1.0 / ADAPT_TRIGGER {
                let step = factor_raw.clamp(1.0 / ADAPT_STEP_LIMIT, ADAPT_STEP_LIMIT);
                let new_penalty = (penalty * step).clamp(1e-6, 1e6);
                if (new_penalty / penalty - 1.0).abs() > 1e-9 {
                    penalty = new_penalty;
                    for r in 0..ws.rho.len() {
                        ws.rho[r] = if ws.equality[r] {
                            penalty * settings.equality_penalty_scale
                        } else {
                            penalty
                        };
                    }
                    assemble(&mut kkt, &ws, settings.sigma);
                    factor = kkt.factorize();
                }
            }
        }
    }

    for i in 0..n {
        x_un[i] = ws.d[i] * x[i];
    }
    for r in 0..m_total {
        y_un[r] = ws.e[r] * y[r];
    }
    let m = qp.num_rows();
    Ok(SolveReport {
        objective: qp.objective(&x_un),
        solution: x_un,
        primal_residual: primal_res,
        dual_residual: dual_res,
        iterations,
        status,
        row_duals: y_un[..m].to_vec(),
        var_duals: y_un[m..].to_vec(),
    })
}

fn build_workspace(
    qp: &QuadraticProgram,
    settings: &AdmmSettings,
) -> Result<Workspace, SolveError> {
    let n = qp.num_vars();
    let m = qp.num_rows();
    let m_total = m + n;

    // Stack the general rows on top of an identity block for the box.
    let mut triplets = Vec::with_capacity(qp.rows.nnz() + n);
    for r in 0..m {
        let (cols, vals) = qp.rows.row(r);
        for (c, v) in cols.iter().zip(vals) {
            triplets.push((r, *c, *v));
        }
    }
    for i in 0..n {
        triplets.push((m + i, i, 1.0));
    }
    let mut a = SparseMatrix::from_triplets(m_total, n, &triplets)?;
    let mut lower = Vec::with_capacity(m_total);
    let mut upper = Vec::with_capacity(m_total);
    lower.extend_from_slice(&qp.row_lower);
    upper.extend_from_slice(&qp.row_upper);
    lower.extend_from_slice(&qp.var_lower);
    upper.extend_from_slice(&qp.var_upper);

    let mut p = qp.quad.clone();
    let mut q = qp.linear.clone();
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m_total];

    // Ruiz equilibration on the stacked [P A'; A 0] pattern.
    for _ in 0..settings.scaling_sweeps {
        let pc = p.col_inf_norms();
        let ac = a.col_inf_norms();
        let mut dv = vec![1.0; n];
        for i in 0..n {
            let norm = pc[i].max(ac[i]);
            if norm > 1e-12 {
                dv[i] = 1.0 / norm.sqrt();
            }
        }
        p.scale_rows(&dv);
        p.scale_cols(&dv);
        a.scale_cols(&dv);
        for i in 0..n {
            q[i] *= dv[i];
            d[i] *= dv[i];
        }
        let ar = a.row_inf_norms();
        let mut ev = vec![1.0; m_total];
        for r in 0..m_total {
            if ar[r] > 1e-12 {
                ev[r] = 1.0 / ar[r].sqrt();
            }
        }
        a.scale_rows(&ev);
        for r in 0..m_total {
            lower[r] *= ev[r];
            upper[r] *= ev[r];
            e[r] *= ev[r];
        }
    }

    let equality: Vec<bool> = lower
        .iter()
        .zip(&upper)
        .map(|(l, u)| l.is_finite() && l == u)
        .collect();
    let rho: Vec<f64> = equality
        .iter()
        .map(|eq| {
            if *eq {
                settings.penalty * settings.equality_penalty_scale
            } else {
                settings.penalty
            }
        })
        .collect();

    Ok(Workspace {
        n,
        m_total,
        a,
        lower,
        upper,
        p,
        q,
        d,
        e,
        rho,
        equality,
    })
}

fn assemble(kkt: &mut EnvelopeMatrix, ws: &Workspace, sigma: f64) {
    kkt.reset();
    for i in 0..ws.n {
        kkt.add(i, i, sigma);
        let (cols, vals) = ws.p.row(i);
        for (c, v) in cols.iter().zip(vals) {
            if *c <= i {
                kkt.add(i, *c, *v);
            }
        }
    }
    for r in 0..ws.m_total {
        let (cols, vals) = ws.a.row(r);
        let rho = ws.rho[r];
        for (ki, (ci, vi)) in cols.iter().zip(vals).enumerate() {
            for (cj, vj) in cols[..=ki].iter().zip(&vals[..=ki]) {
                kkt.add(*ci, *cj, rho * vi * vj);
            }
        }
    }
}

/// Component-normalized primal and dual residuals against the original data.
fn residuals(
    qp: &QuadraticProgram,
    x: &[f64],
    z: &[f64],
    y: &[f64],
    work_n: &mut [f64],
    work_m: &mut [f64],
) -> (f64, f64) {
    let n = qp.num_vars();
    let m = qp.num_rows();

    let mut primal = 0.0f64;
    qp.rows.matvec(x, work_m);
    for r in 0..m {
        let scale = 1.0f64.max(work_m[r].abs()).max(z[r].abs());
        primal = primal.max((work_m[r] - z[r]).abs() / scale);
    }
    for i in 0..n {
        let zi = z[m + i];
        let scale = 1.0f64.max(x[i].abs()).max(zi.abs());
        primal = primal.max((x[i] - zi).abs() / scale);
    }

    // Stationarity: P x + q + A' y_rows + y_box, tracked with per-component scale.
    let mut px = vec![0.0; n];
    qp.quad.matvec(x, &mut px);
    work_n.iter_mut().for_each(|v| *v = 0.0);
    qp.rows.matvec_transpose_add(&y[..m], work_n);
    let mut dual = 0.0f64;
    for i in 0..n {
        let aty = work_n[i];
        let ybox = y[m + i];
        let res = px[i] + qp.linear[i] + aty + ybox;
        let scale = 1.0f64
            .max(px[i].abs())
            .max(qp.linear[i].abs())
            .max(aty.abs())
            .max(ybox.abs());
        dual = dual.max(res.abs() / scale);
    }
    (primal, dual)
}

fn primal_infeasible(
    ws: &Workspace,
    qp: &QuadraticProgram,
    dy: &[f64],
    work_n: &mut [f64],
) -> bool {
    let norm = linalg::norm_inf(dy);
    if norm <= 1e-14 {
        return false;
    }
    let m = qp.num_rows();
    work_n.iter_mut().for_each(|v| *v = 0.0);
    qp.rows.matvec_transpose_add(&dy[..m], work_n);
    for i in 0..ws.n {
        work_n[i] += dy[m + i];
    }
    if linalg::norm_inf(work_n) > INFEASIBILITY_TOL * norm {
        return false;
    }
    let mut support = 0.0;
    let bound = |r: usize| -> (f64, f64) {
        if r < m {
            (qp.row_lower[r], qp.row_upper[r])
        } else {
            (qp.var_lower[r - m], qp.var_upper[r - m])
        }
    };
    for (r, dyr) in dy.iter().enumerate() {
        let (l, u) = bound(r);
        if *dyr > INFEASIBILITY_TOL * norm {
            if u.is_infinite() {
                return false;
            }
            support += u * dyr;
        } else if *dyr < -INFEASIBILITY_TOL * norm {
            if l.is_infinite() {
                return false;
            }
            support += l * dyr;
        }
    }
    support < -INFEASIBILITY_TOL * norm
}

fn dual_infeasible(
    ws: &Workspace,
    qp: &QuadraticProgram,
    dx: &[f64],
    work_m: &mut [f64],
) -> bool {
    let norm = linalg::norm_inf(dx);
    if norm <= 1e-14 {
        return false;
    }
    let n = ws.n;
    let mut pdx = vec![0.0; n];
    qp.quad.matvec(dx, &mut pdx);
    if linalg::norm_inf(&pdx) > INFEASIBILITY_TOL * norm {
        return false;
    }
    if linalg::dot(&qp.linear, dx) >= -INFEASIBILITY_TOL * norm {
        return false;
    }
    let m = qp.num_rows();
    qp.rows.matvec(dx, &mut work_m[..m]);
    let check = |v: f64, l: f64, u: f64| -> bool {
        (u.is_infinite() || v <= INFEASIBILITY_TOL * norm)
            && (l.is_infinite() || v >= -INFEASIBILITY_TOL * norm)
    };
    for r in 0..m {
        if !check(work_m[r], qp.row_lower[r], qp.row_upper[r]) {
            return false;
        }
    }
    for i in 0..n {
        if !check(dx[i], qp.var_lower[i], qp.var_upper[i]) {
            return false;
        }
    }
    true
}
