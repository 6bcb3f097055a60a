//! Radial feeder model: tree topology rooted at the substation bus, a linear
//! lossless branch-flow solve, and the voltage sensitivity map.
//!
//! Conventions: bus 0 is the substation, held at the fixed voltage
//! `slack_voltage`. Injections are passed as *net withdrawals* (load minus
//! generation), so positive values pull power from the root and depress
//! voltages. Branch impedances are per-unit on `base_mva`; withdrawals are in
//! MW/MVar and converted internally.
//!
//! The voltage model is the standard linearization of the branch drop: for a
//! branch `b` carrying per-unit flow `(P_b, Q_b)` into its child,
//! `V_child = V_parent − (R_b P_b + X_b Q_b) / V_slack`. Flows accumulate
//! subtree withdrawals exactly (lossless), which makes every voltage an
//! affine function of the withdrawals — the basis for the sensitivity map.

use super::GridError;
use serde::{Deserialize, Serialize};

/// One feeder branch with per-unit impedance. Orientation in `from`/`to` is
/// free; the tree structure fixes which end is closer to the substation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub resistance: f64,
    pub reactance: f64,
}

/// Static description of the feeder.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NetworkSpec {
    /// Number of buses including the substation (bus 0).
    pub bus_count: usize,
    pub branches: Vec<Branch>,
    /// Substation voltage in per-unit.
    pub slack_voltage: f64,
    /// Power base used to convert MW to per-unit.
    pub base_mva: f64,
    /// Lower voltage limit in per-unit.
    pub v_min: f64,
    /// Upper voltage limit in per-unit.
    pub v_max: f64,
    /// Buses whose voltages the dispatch problem constrains and the reports
    /// grade.
    pub monitored: Vec<usize>,
}

/// Rooted form of the feeder tree with per-bus path data, built once and
/// reused by the flow solve and the sensitivity map.
#[derive(Debug, Clone)]
pub struct TreeIndex {
    /// Parent bus of each bus; the root stores itself.
    pub parent: Vec<usize>,
    /// Index into `branches` of the branch feeding each non-root bus; the
    /// root stores `usize::MAX`.
    pub feed_branch: Vec<usize>,
    /// Buses in breadth-first order from the root.
    pub order: Vec<usize>,
    pub depth: Vec<usize>,
    /// Cumulative per-unit resistance and reactance from the root.
    pub r_to_root: Vec<f64>,
    pub x_to_root: Vec<f64>,
}

impl TreeIndex {
    /// Deepest common bus on the root paths of `a` and `b`.
    pub fn common_ancestor(&self, a: usize, b: usize) -> usize {
        let (mut a, mut b) = (a, b);
        while self.depth[a] > self.depth[b] {
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b];
        }
        while a != b {
            a = self.parent[a];
            b = self.parent[b];
        }
        a
    }
}

/// Result of one linear flow solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowResult {
    /// Active flow per branch in MW, positive from `from` toward `to`.
    pub branch_active_mw: Vec<f64>,
    /// Reactive flow per branch in MVar, same orientation.
    pub branch_reactive_mvar: Vec<f64>,
    /// Per-bus voltage in per-unit.
    pub voltage_pu: Vec<f64>,
    /// Net import over the substation in MW (positive = import).
    pub grid_mw: f64,
}

impl NetworkSpec {
    /// Validates the spec and roots the tree at the substation.
    pub fn index(&self) -> Result<TreeIndex, GridError> {
        let n = self.bus_count;
        if n < 1 {
            return Err(GridError::Topology("feeder has no buses".into()));
        }
        if !(self.slack_voltage > 0.0) || !(self.base_mva > 0.0) {
            return Err(GridError::Invalid(
                "slack voltage and power base must be positive".into(),
            ));
        }
        if !(self.v_min < self.v_max) {
            return Err(GridError::Invalid(format!(
                "voltage band [{}, {}] is empty",
                self.v_min, self.v_max
            )));
        }
        if self.branches.len() != n - 1 {
            return Err(GridError::Topology(format!(
                "{} branches cannot span {} buses as a tree",
                self.branches.len(),
                n
            )));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (b, branch) in self.branches.iter().enumerate() {
            if branch.from >= n || branch.to >= n {
                return Err(GridError::Topology(format!(
                    "branch {b} references bus {} outside 0..{n}",
                    branch.from.max(branch.to)
                )));
            }
            if branch.from == branch.to {
                return Err(GridError::Topology(format!(
                    "branch {b} connects bus {} to itself",
                    branch.from
                )));
            }
            if branch.resistance < 0.0 || branch.reactance < 0.0 {
                return Err(GridError::Invalid(format!(
                    "branch {b} has negative impedance"
                )));
            }
            adjacency[branch.from].push((branch.to, b));
            adjacency[branch.to].push((branch.from, b));
        }
        let mut parent = vec![usize::MAX; n];
        let mut feed_branch = vec![usize::MAX; n];
        let mut depth = vec![0usize; n];
        let mut r_to_root = vec![0.0; n];
        let mut x_to_root = vec![0.0; n];
        let mut order = Vec::with_capacity(n);
        parent[0] = 0;
        order.push(0);
        let mut head = 0;
        while head < order.len() {
            let bus = order[head];
            head += 1;
            for &(next, b) in &adjacency[bus] {
                if next == 0 || parent[next] != usize::MAX {
                    if feed_branch[bus] != b {
                        return Err(GridError::Topology(format!(
                            "branch {b} closes a cycle through bus {next}"
                        )));
                    }
                    continue;
                }
                parent[next] = bus;
                feed_branch[next] = b;
                depth[next] = depth[bus] + 1;
                r_to_root[next] = r_to_root[bus] + self.branches[b].resistance;
                x_to_root[next] = x_to_root[bus] + self.branches[b].reactance;
                order.push(next);
            }
        }
        if order.len() != n {
            return Err(GridError::Topology(format!(
                "only {} of {n} buses are reachable from the substation",
                order.len()
            )));
        }
        let mut seen = vec![false; n];
        for &m in &self.monitored {
            if m >= n {
                return Err(GridError::Invalid(format!(
                    "monitored bus {m} outside 0..{n}"
                )));
            }
            if seen[m] {
                return Err(GridError::Invalid(format!("monitored bus {m} repeated")));
            }
            seen[m] = true;
        }
        Ok(TreeIndex {
            parent,
            feed_branch,
            order,
            depth,
            r_to_root,
            x_to_root,
        })
    }

    /// Linear lossless flow solve for net withdrawals in MW/MVar (positive =
    /// consumption). Returns branch flows, voltages, and the substation
    /// import.
    pub fn distflow_solve(
        &self,
        withdrawal_mw: &[f64],
        withdrawal_mvar: &[f64],
    ) -> Result<PowerFlowResult, GridError> {
        let index = self.index()?;
        let n = self.bus_count;
        if withdrawal_mw.len() != n || withdrawal_mvar.len() != n {
            return Err(GridError::Invalid(format!(
                "withdrawal vectors ({}, {}) do not cover {n} buses",
                withdrawal_mw.len(),
                withdrawal_mvar.len()
            )));
        }
        // Accumulate subtree withdrawals leaf-first.
        let mut down_p = withdrawal_mw.to_vec();
        let mut down_q = withdrawal_mvar.to_vec();
        for &bus in index.order.iter().rev() {
            if bus != 0 {
                let p = index.parent[bus];
                down_p[p] += down_p[bus];
                down_q[p] += down_q[bus];
            }
        }
        let mut branch_active_mw = vec![0.0; self.branches.len()];
        let mut branch_reactive_mvar = vec![0.0; self.branches.len()];
        let mut voltage_pu = vec![self.slack_voltage; n];
        for &bus in &index.order {
            if bus == 0 {
                continue;
            }
            let b = index.feed_branch[bus];
            // Flow toward `bus` equals its subtree withdrawal; report it in
            // the stored `from -> to` orientation.
            let sign = if self.branches[b].to == bus { 1.0 } else { -1.0 };
            branch_active_mw[b] = sign * down_p[bus];
            branch_reactive_mvar[b] = sign * down_q[bus];
            let p_pu = down_p[bus] / self.base_mva;
            let q_pu = down_q[bus] / self.base_mva;
            voltage_pu[bus] = voltage_pu[index.parent[bus]]
                - (self.branches[b].resistance * p_pu + self.branches[b].reactance * q_pu)
                    / self.slack_voltage;
        }
        Ok(PowerFlowResult {
            branch_active_mw,
            branch_reactive_mvar,
            voltage_pu,
            grid_mw: down_p[0],
        })
    }

    /// Per-bus voltage sensitivities of a target bus: returns `(dv_dp, dv_dq)`
    /// such that `V_target = slack_voltage + Σ_k dv_dp[k]·P_k + dv_dq[k]·Q_k`
    /// for withdrawals `P` in MW and `Q` in MVar. Entries are nonpositive:
    /// withdrawing anywhere can only depress a downstream voltage.
    pub fn voltage_coefficients(&self, index: &TreeIndex, target: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.bus_count;
        let scale = 1.0 / (self.base_mva * self.slack_voltage);
        let mut dv_dp = vec![0.0; n];
        let mut dv_dq = vec![0.0; n];
        for k in 1..n {
            let shared = index.common_ancestor(target, k);
            dv_dp[k] = -index.r_to_root[shared] * scale;
            dv_dq[k] = -index.x_to_root[shared] * scale;
        }
        (dv_dp, dv_dq)
    }
}
