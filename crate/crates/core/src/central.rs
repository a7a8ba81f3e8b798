//! Central controller: relaxed branch-flow OPF over a radial feeder with the
//! nodal flexibility charts as feasible sets and cost functions. The rotated
//! cone `l v >= p^2 + q^2` is handled by tangent cuts, chart rows are added
//! lazily.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{LpBuilder, LpError, LpSession, LpStatus};
use crate::realtime::FlexChart2D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CentralError {
    #[error("invalid feeder: {0}")]
    InvalidFeeder(String),
    #[error("no chart for node {0}")]
    MissingChart(usize),
    #[error("empty chart at node {0}")]
    EmptyChart(usize),
    #[error("voltage limits cannot be met, binding node {node}")]
    Infeasible { node: usize },
    #[error("power flow did not converge")]
    SweepDiverged,
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r_pu: f64,
    pub x_pu: f64,
}

/// Radial feeder rooted at the slack node 0. Impedances in per unit on
/// `s_base_kva` / `v_base_v`; voltages are squared magnitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeederModel {
    pub num_nodes: usize,
    pub lines: Vec<Line>,
    pub v0_sq: f64,
    pub v_min_sq: f64,
    pub v_max_sq: f64,
    pub s_base_kva: f64,
    pub v_base_v: f64,
}

impl FeederModel {
    pub fn z_base_ohm(s_base_kva: f64, v_base_v: f64) -> f64 {
        v_base_v * v_base_v / (s_base_kva * 1000.0)
    }

    pub fn validate(&self) -> Result<(), CentralError> {
        let bad = |m: String| Err(CentralError::InvalidFeeder(m));
        if self.num_nodes < 2 {
            return bad("need a slack node and at least one bus".into());
        }
        if self.lines.len() != self.num_nodes - 1 {
            return bad(format!("{} lines for {} nodes is not a tree", self.lines.len(), self.num_nodes));
        }
        let mut parent = vec![None; self.num_nodes];
        for (k, l) in self.lines.iter().enumerate() {
            if l.from >= self.num_nodes || l.to >= self.num_nodes || l.from == l.to {
                return bad(format!("line {k} has invalid endpoints"));
            }
            if !(l.r_pu > 0.0 && l.x_pu >= 0.0) {
                return bad(format!("line {k} needs positive R and non-negative X"));
            }
            if l.to == 0 || parent[l.to].is_some() {
                return bad(format!("node {} has two feeding lines", l.to));
            }
            parent[l.to] = Some(k);
        }
        if self.order().len() != self.num_nodes {
            return bad("network is not connected to the slack".into());
        }
        if !(0.0 < self.v_min_sq && self.v_min_sq < self.v_max_sq && self.v0_sq > 0.0 && self.s_base_kva > 0.0) {
            return bad("invalid voltage limits or base".into());
        }
        Ok(())
    }

    /// Index of the line feeding each node (`None` for the slack).
    pub fn feeding_line(&self) -> Vec<Option<usize>> {
        let mut f = vec![None; self.num_nodes];
        for (k, l) in self.lines.iter().enumerate() {
            f[l.to] = Some(k);
        }
        f
    }

    pub fn child_lines(&self, node: usize) -> Vec<usize> {
        (0..self.lines.len()).filter(|&k| self.lines[k].from == node).collect()
    }

    /// Nodes in breadth-first order from the slack.
    pub fn order(&self) -> Vec<usize> {
        let mut out = vec![0];
        let mut i = 0;
        while i < out.len() && out.len() <= self.num_nodes {
            let n = out[i];
            for k in self.child_lines(n) {
                out.push(self.lines[k].to);
            }
            i += 1;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralOptions {
    /// Loss price, EUR/kWh.
    pub pi_loss: f64,
    /// Duration the loss cost applies to, hours.
    pub dt_h: f64,
    pub cone_tol: f64,
    pub max_rounds: usize,
}

impl Default for CentralOptions {
    fn default() -> Self {
        CentralOptions { pi_loss: 0.3, dt_h: 10.0 / 3600.0, cone_tol: 1e-7, max_rounds: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralSolution {
    /// Net injections per node (p.u.); entry 0 is the slack.
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Squared voltage magnitudes per node.
    pub v: Vec<f64>,
    /// Sending-end flows and squared currents per line.
    pub p_flow: Vec<f64>,
    pub q_flow: Vec<f64>,
    pub l: Vec<f64>,
    /// Chart cost at the setpoint per node (EUR), zero for the slack.
    pub node_cost: Vec<f64>,
    pub objective: f64,
    pub cut_rounds: usize,
    /// Objective of every LP solve of the cut loop.
    pub round_objectives: Vec<f64>,
    /// False when the cone cuts stalled above tolerance.
    pub gap_closed: bool,
}

impl CentralSolution {
    pub fn injection_kw(&self, node: usize, s_base_kva: f64) -> (f64, f64) {
        (self.p[node] * s_base_kva, self.q[node] * s_base_kva)
    }
}

/// `l v_from - p^2 - q^2` per line.
pub fn relaxation_gap(feeder: &FeederModel, sol: &CentralSolution) -> Vec<f64> {
    feeder
        .lines
        .iter()
        .enumerate()
        .map(|(k, line)| sol.l[k] * sol.v[line.from] - sol.p_flow[k].powi(2) - sol.q_flow[k].powi(2))
        .collect()
}

struct Layout {
    nodes: usize,
    lines: usize,
}

impl Layout {
    // per bus j >= 1: P, Q, t; per line: p, q, l; per bus j >= 1: v
    fn p(&self, j: usize) -> usize {
        3 * (j - 1)
    }
    fn q(&self, j: usize) -> usize {
        3 * (j - 1) + 1
    }
    fn t(&self, j: usize) -> usize {
        3 * (j - 1) + 2
    }
    fn pf(&self, k: usize) -> usize {
        3 * (self.nodes - 1) + 3 * k
    }
    fn qf(&self, k: usize) -> usize {
        self.pf(k) + 1
    }
    fn l(&self, k: usize) -> usize {
        self.pf(k) + 2
    }
    fn v(&self, j: usize) -> usize {
        3 * (self.nodes - 1) + 3 * self.lines + (j - 1)
    }
}

/// Candidate row: `terms . x <= rhs`.
type Row = (Vec<(usize, f64)>, f64);

/// Solve the relaxed OPF. `charts[j]` belongs to node `j` (entry 0 ignored).
pub fn solve_central(
    feeder: &FeederModel,
    charts: &[FlexChart2D],
    opts: &CentralOptions,
) -> Result<CentralSolution, CentralError> {
    feeder.validate()?;
    let n = feeder.num_nodes;
    if charts.len() < n {
        return Err(CentralError::MissingChart(charts.len().max(1)));
    }
    for (j, chart) in charts.iter().enumerate().take(n).skip(1) {
        if chart.is_empty() {
            return Err(CentralError::EmptyChart(j));
        }
    }
    match build_and_solve(feeder, charts, opts, None)? {
        Some(sol) => Ok(sol),
        None => Err(CentralError::Infeasible { node: binding_node(feeder, charts, opts)? }),
    }
}

fn build_and_solve(
    feeder: &FeederModel,
    charts: &[FlexChart2D],
    opts: &CentralOptions,
    voltage_slack_penalty: Option<f64>,
) -> Result<Option<CentralSolution>, CentralError> {
    let n = feeder.num_nodes;
    let lay = Layout { nodes: n, lines: feeder.lines.len() };
    let sb = feeder.s_base_kva;
    let inf = f64::INFINITY;
    let mut b = LpBuilder::new();
    let mut candidates: Vec<Row> = Vec::new();
    for chart in charts.iter().take(n).skip(1) {
        let (lo, hi) = chart.bbox().expect("non-empty chart");
        let (cmin, _) = chart.min_cost().expect("non-empty chart");
        b.var(0.0, lo[0] / sb, hi[0] / sb);
        b.var(0.0, lo[1] / sb, hi[1] / sb);
        b.var(1.0, cmin, inf);
    }
    let loss_w = opts.pi_loss * sb * opts.dt_h;
    for line in &feeder.lines {
        b.var(0.0, -inf, inf);
        b.var(0.0, -inf, inf);
        b.var(loss_w * line.r_pu, 0.0, inf);
    }
    let (v_lo, v_hi) = if voltage_slack_penalty.is_some() { (0.0, inf) } else { (feeder.v_min_sq, feeder.v_max_sq) };
    for _ in 1..n {
        b.var(0.0, v_lo, v_hi);
    }
    // voltage-bound slacks for the infeasibility diagnosis
    let slack_base = b.num_vars();
    if let Some(w) = voltage_slack_penalty {
        for j in 1..n {
            let up = b.var(w, 0.0, inf);
            let dn = b.var(w, 0.0, inf);
            b.le(&[(lay.v(j), 1.0), (up, -1.0)], feeder.v_max_sq);
            b.le(&[(lay.v(j), -1.0), (dn, -1.0)], -feeder.v_min_sq);
        }
    }
    for (k, line) in feeder.lines.iter().enumerate() {
        let j = line.to;
        let children = feeder.child_lines(j);
        let mut tp = vec![(lay.pf(k), 1.0), (lay.l(k), -line.r_pu), (lay.p(j), 1.0)];
        let mut tq = vec![(lay.qf(k), 1.0), (lay.l(k), -line.x_pu), (lay.q(j), 1.0)];
        for &c in &children {
            tp.push((lay.pf(c), -1.0));
            tq.push((lay.qf(c), -1.0));
        }
        b.eq(&tp, 0.0);
        b.eq(&tq, 0.0);
        let z2 = line.r_pu * line.r_pu + line.x_pu * line.x_pu;
        let mut tv = vec![(lay.v(j), 1.0), (lay.pf(k), 2.0 * line.r_pu), (lay.qf(k), 2.0 * line.x_pu), (lay.l(k), -z2)];
        let rhs = if line.from == 0 {
            feeder.v0_sq
        } else {
            tv.push((lay.v(line.from), -1.0));
            0.0
        };
        b.eq(&tv, rhs);
    }
    for (j, chart) in charts.iter().enumerate().take(n).skip(1) {
        for (a, r) in chart.hull_rows() {
            candidates.push((vec![(lay.p(j), a[0] * sb), (lay.q(j), a[1] * sb)], r));
        }
        for piece in &chart.pieces {
            let c = piece.cost;
            candidates.push((vec![(lay.p(j), c.b_p * sb), (lay.q(j), c.b_q * sb), (lay.t(j), -1.0)], -c.a));
        }
    }
    let mut added = vec![false; candidates.len()];
    let mut session = LpSession::new(b.build())?;
    let mut rounds = 0;
    let mut gap_closed = true;
    let mut round_objectives = Vec::new();
    let mut last;
    loop {
        let sol = session.solve()?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Ok(None),
            LpStatus::Unbounded => return Err(LpError::NumericalFailure("central LP unbounded".into()).into()),
        }
        let x = sol.x.clone();
        round_objectives.push(sol.objective);
        last = (x.clone(), sol.objective);
        let mut new_rows: Vec<Row> = Vec::new();
        for (i, (terms, rhs)) in candidates.iter().enumerate() {
            if added[i] {
                continue;
            }
            let lhs: f64 = terms.iter().map(|&(j, a)| a * x[j]).sum();
            if lhs > rhs + 1e-9 * (1.0 + rhs.abs()) {
                added[i] = true;
                new_rows.push((terms.clone(), *rhs));
            }
        }
        let mut cone_violation = 0.0f64;
        let mut cuts: Vec<Row> = Vec::new();
        for (k, line) in feeder.lines.iter().enumerate() {
            let (p, q, l) = (x[lay.pf(k)], x[lay.qf(k)], x[lay.l(k)]);
            let v = if line.from == 0 { feeder.v0_sq } else { x[lay.v(line.from)] };
            let viol = p * p + q * q - l * v;
            cone_violation = cone_violation.max(viol);
            if viol > opts.cone_tol && v > 0.0 {
                let s2 = (p * p + q * q) / (v * v);
                let mut terms = vec![(lay.pf(k), 2.0 * p / v), (lay.qf(k), 2.0 * q / v), (lay.l(k), -1.0)];
                let rhs = if line.from == 0 {
                    s2 * feeder.v0_sq
                } else {
                    terms.push((lay.v(line.from), -s2));
                    0.0
                };
                cuts.push((terms, rhs));
            }
        }
        if !cuts.is_empty() {
            rounds += 1;
            if rounds > opts.max_rounds {
                gap_closed = false;
                break;
            }
        }
        new_rows.extend(cuts);
        if new_rows.is_empty() {
            break;
        }
        session.add_le_rows(&new_rows);
    }
    let (x, objective) = last;
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut v = vec![feeder.v0_sq; n];
    let mut node_cost = vec![0.0; n];
    for j in 1..n {
        p[j] = x[lay.p(j)];
        q[j] = x[lay.q(j)];
        v[j] = x[lay.v(j)];
        node_cost[j] = x[lay.t(j)];
    }
    let nl = feeder.lines.len();
    let p_flow: Vec<f64> = (0..nl).map(|k| x[lay.pf(k)]).collect();
    let q_flow: Vec<f64> = (0..nl).map(|k| x[lay.qf(k)]).collect();
    let l: Vec<f64> = (0..nl).map(|k| x[lay.l(k)]).collect();
    for k in feeder.child_lines(0) {
        p[0] += p_flow[k];
        q[0] += q_flow[k];
    }
    if voltage_slack_penalty.is_some() {
        // stash the slack magnitudes in node_cost for the caller
        for j in 1..n {
            node_cost[j] = x[slack_base + 2 * (j - 1)] + x[slack_base + 2 * (j - 1) + 1];
        }
    }
    Ok(Some(CentralSolution {
        p,
        q,
        v,
        p_flow,
        q_flow,
        l,
        node_cost,
        objective,
        cut_rounds: rounds,
        round_objectives,
        gap_closed,
    }))
}

/// Node with the largest voltage-bound violation when the bounds are softened.
fn binding_node(feeder: &FeederModel, charts: &[FlexChart2D], opts: &CentralOptions) -> Result<usize, CentralError> {
    match build_and_solve(feeder, charts, opts, Some(1e6))? {
        Some(sol) => Ok((1..feeder.num_nodes)
            .max_by(|&a, &b| sol.node_cost[a].total_cmp(&sol.node_cost[b]).then(b.cmp(&a)))
            .unwrap_or(1)),
        None => Ok(1),
    }
}

/// Backward/forward sweep load flow. Injections in p.u. (generation
/// positive), entry 0 ignored. Returns complex node voltages.
pub fn backward_forward_sweep(
    feeder: &FeederModel,
    p_inj: &[f64],
    q_inj: &[f64],
) -> Result<Vec<Complex64>, CentralError> {
    feeder.validate()?;
    let n = feeder.num_nodes;
    let order = feeder.order();
    let feeding = feeder.feeding_line();
    let v0 = Complex64::new(feeder.v0_sq.sqrt(), 0.0);
    let mut volt = vec![v0; n];
    for _ in 0..200 {
        let mut inj_current = vec![Complex64::new(0.0, 0.0); n];
        for j in 1..n {
            let s = Complex64::new(p_inj[j], q_inj[j]);
            inj_current[j] = (s / volt[j]).conj();
        }
        // branch current into node j = load current of j plus downstream
        let mut branch = vec![Complex64::new(0.0, 0.0); feeder.lines.len()];
        for &j in order.iter().rev() {
            if let Some(k) = feeding[j] {
                let mut i = -inj_current[j];
                for c in feeder.child_lines(j) {
                    i += branch[c];
                }
                branch[k] = i;
            }
        }
        let mut delta = 0.0f64;
        for &j in order.iter().skip(1) {
            let k = feeding[j].unwrap();
            let line = &feeder.lines[k];
            let z = Complex64::new(line.r_pu, line.x_pu);
            let nv = volt[line.from] - z * branch[k];
            delta = delta.max((nv - volt[j]).norm());
            volt[j] = nv;
        }
        if delta < 1e-12 {
            return Ok(volt);
        }
    }
    Err(CentralError::SweepDiverged)
}

/// Largest |sqrt(v) - |V|| between the relaxed solution and a load flow of
/// its injections.
pub fn voltage_mismatch(feeder: &FeederModel, sol: &CentralSolution) -> Result<f64, CentralError> {
    let volt = backward_forward_sweep(feeder, &sol.p, &sol.q)?;
    Ok((1..feeder.num_nodes).map(|j| (sol.v[j].sqrt() - volt[j].norm()).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line2() -> FeederModel {
        FeederModel {
            num_nodes: 2,
            lines: vec![Line { from: 0, to: 1, r_pu: 0.01, x_pu: 0.005 }],
            v0_sq: 1.0,
            v_min_sq: 0.9,
            v_max_sq: 1.1,
            s_base_kva: 100.0,
            v_base_v: 400.0,
        }
    }

    #[test]
    fn rejects_non_tree() {
        let mut f = line2();
        f.lines.push(Line { from: 1, to: 0, r_pu: 0.01, x_pu: 0.01 });
        assert!(f.validate().is_err());
    }

    #[test]
    fn sweep_single_line_matches_closed_form() {
        let f = line2();
        let v = backward_forward_sweep(&f, &[0.0, -0.1], &[0.0, 0.0]).unwrap();
        // V1 = 1 - Z * conj(S/V1): solve the scalar fixed point directly
        let z = Complex64::new(0.01, 0.005);
        let mut v1 = Complex64::new(1.0, 0.0);
        for _ in 0..100 {
            v1 = Complex64::new(1.0, 0.0) - z * (Complex64::new(0.1, 0.0) / v1).conj();
        }
        assert!((v[1] - v1).norm() < 1e-10);
    }
}
