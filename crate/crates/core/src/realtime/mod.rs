//! Per-unit real-time layer: fix the measured parameters inside the offline
//! region store to get the node's flexibility chart in (P_grid, Q_grid), and
//! map a central setpoint back to device setpoints.

mod chart;
mod message;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chart::{convex_hull, hull_rows, AffineCost, ChartPiece, ChartSource, FlexChart2D};
pub use message::{ChartMessage, PieceMessage, SetpointMessage};

use crate::lp::{clip_box_2d, polygon_area, solve_lp, LinearProgram, LpStatus, Polyhedron};
use crate::mplp::{enumerate_regions, EnumerateOptions, MplpError, ParametricLP};
use crate::period::{
    tick_hours, Envelope, ParamLayout, PeriodError, PeriodProblem, PeriodRegionStore, VarLayout, REMAINDER_MAX_S,
};
use crate::planning::ValueFunctionPWA;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RtError {
    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),
    #[error("value function has {got} segments, store expects {expected}")]
    InconsistentSegments { expected: usize, got: usize },
    #[error("measurements not covered by the region store")]
    NotCovered,
    #[error("no feasible grid exchange for these measurements")]
    EmptyChart,
    #[error("setpoint ({0}, {1}) outside the chart")]
    OutsideChart(f64, f64),
    #[error(transparent)]
    Period(#[from] PeriodError),
    #[error(transparent)]
    Mplp(#[from] MplpError),
}

/// Local measurements and forecasts of one unit at a control tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurements {
    pub soc: f64,
    pub p_load_kw: f64,
    pub q_load_kvar: f64,
    /// MPP estimate.
    pub p_max_pv_kw: f64,
    /// Forecast PV and load energy over the rest of the period.
    pub e_pv_2_kwh: f64,
    pub e_load_2_kwh: f64,
    pub pi_imp: f64,
    pub pi_exp: f64,
    /// Time left in the period after this tick, seconds.
    pub dtau_r_s: f64,
    pub value_function: ValueFunctionPWA,
}

impl Measurements {
    pub fn validate(&self, store: &PeriodRegionStore) -> Result<(), RtError> {
        let bat = &store.config.battery;
        let bad = |m: &str| Err(RtError::InvalidMeasurement(m.to_string()));
        let vals = [
            self.soc,
            self.p_load_kw,
            self.q_load_kvar,
            self.p_max_pv_kw,
            self.e_pv_2_kwh,
            self.e_load_2_kwh,
            self.pi_imp,
            self.pi_exp,
            self.dtau_r_s,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return bad("non-finite value");
        }
        if self.soc < bat.soc_min - 1e-9 || self.soc > bat.soc_max + 1e-9 {
            return bad("SOC outside battery bounds");
        }
        if self.dtau_r_s < -1e-9 || self.dtau_r_s > REMAINDER_MAX_S + 1e-9 {
            return bad("remaining time outside the period");
        }
        if self.value_function.num_segments() != store.config.n_s {
            return Err(RtError::InconsistentSegments {
                expected: store.config.n_s,
                got: self.value_function.num_segments(),
            });
        }
        Ok(())
    }

    /// Full parameter vector with the grid exchange set to `(p, q)`.
    pub fn parameter_vector(&self, n_s: usize, p: f64, q: f64) -> Vec<f64> {
        let pl = ParamLayout { n_s };
        let mut x = vec![0.0; pl.len()];
        for n in 0..n_s {
            x[pl.theta(n)] = self.value_function.slopes[n];
        }
        for n in 0..=n_s {
            x[pl.breakpoint(n)] = self.value_function.breakpoints[n];
        }
        x[pl.p_load()] = self.p_load_kw;
        x[pl.q_load()] = self.q_load_kvar;
        x[pl.soc()] = self.soc;
        x[pl.p_max_pv()] = self.p_max_pv_kw;
        x[pl.e_pv()] = self.e_pv_2_kwh;
        x[pl.e_load()] = self.e_load_2_kwh;
        x[pl.pi_exp()] = self.pi_exp;
        x[pl.pi_imp()] = self.pi_imp;
        x[pl.dtau_r()] = self.dtau_r_s.clamp(0.0, REMAINDER_MAX_S) / 3600.0;
        x[pl.p_grid()] = p;
        x[pl.q_grid()] = q;
        x
    }
}

/// Parameters fixed for a whole market period (value function and prices).
fn slow_params(pl: &ParamLayout) -> Vec<usize> {
    let mut v: Vec<usize> = (0..pl.n_s).map(|n| pl.theta(n)).collect();
    v.extend((0..=pl.n_s).map(|n| pl.breakpoint(n)));
    v.push(pl.pi_exp());
    v.push(pl.pi_imp());
    v
}

/// Parameters that change every tick, followed by the grid exchange.
fn fast_params(pl: &ParamLayout) -> [usize; 9] {
    [pl.p_load(), pl.q_load(), pl.soc(), pl.p_max_pv(), pl.e_pv(), pl.e_load(), pl.dtau_r(), pl.p_grid(), pl.q_grid()]
}

const NF: usize = 9;
const ZERO_COEF: f64 = 1e-12;
const ROW_TOL: f64 = 1e-9;

/// A region with the slow parameters substituted.
#[derive(Clone, Debug)]
struct SliceRegion {
    id: usize,
    rows: Vec<([f64; NF], f64)>,
    cost_const: f64,
    cost_grad: [f64; NF],
}

/// Projects charts from a store, caching the per-period substitution of the
/// value-function and price parameters.
#[derive(Clone, Debug)]
pub struct ChartProjector<'a> {
    store: &'a PeriodRegionStore,
    key: Vec<f64>,
    slice: Vec<SliceRegion>,
}

impl<'a> ChartProjector<'a> {
    pub fn new(store: &'a PeriodRegionStore) -> Self {
        ChartProjector { store, key: Vec::new(), slice: Vec::new() }
    }

    pub fn store(&self) -> &PeriodRegionStore {
        self.store
    }

    fn refresh(&mut self, x: &[f64]) {
        let pl = ParamLayout { n_s: self.store.config.n_s };
        let slow = slow_params(&pl);
        let key: Vec<f64> = slow.iter().map(|&k| x[k]).collect();
        if key == self.key {
            return;
        }
        let fast = fast_params(&pl);
        let mut slice = Vec::new();
        'regions: for r in &self.store.store.regions {
            let mut rows = Vec::with_capacity(r.poly.num_rows());
            for i in 0..r.poly.num_rows() {
                let mut b = r.poly.b[i];
                for &k in &slow {
                    b -= r.poly.a[(i, k)] * x[k];
                }
                let mut a = [0.0; NF];
                let mut zero = true;
                for (f, &k) in fast.iter().enumerate() {
                    a[f] = r.poly.a[(i, k)];
                    if a[f].abs() > ZERO_COEF {
                        zero = false;
                    }
                }
                if zero {
                    if b < -ROW_TOL {
                        continue 'regions;
                    }
                    continue;
                }
                rows.push((a, b));
            }
            let (cost_const, cost_grad) = slice_cost(&r.cost_const, &r.cost_linear, &r.cost_quad, &slow, &fast, x);
            slice.push(SliceRegion { id: r.id, rows, cost_const, cost_grad });
        }
        self.key = key;
        self.slice = slice;
    }

    /// Regions surviving the current period substitution.
    pub fn active_regions(&self) -> usize {
        self.slice.len()
    }

    pub fn project(&mut self, node: usize, m: &Measurements) -> Result<FlexChart2D, RtError> {
        m.validate(self.store)?;
        let n_s = self.store.config.n_s;
        let pl = ParamLayout { n_s };
        let x = m.parameter_vector(n_s, 0.0, 0.0);
        if !inside_envelope(&self.store.envelope, n_s, &x) {
            return Err(RtError::NotCovered);
        }
        self.refresh(&x);
        let fast = fast_params(&pl);
        let (lo, hi) = pq_box(&self.store.envelope, &pl);
        let mut pieces = Vec::new();
        'regions: for sr in &self.slice {
            let mut rows2 = Vec::with_capacity(sr.rows.len());
            for (a, b) in &sr.rows {
                let mut bb = *b;
                for f in 0..NF - 2 {
                    bb -= a[f] * x[fast[f]];
                }
                let (ap, aq) = (a[NF - 2], a[NF - 1]);
                if ap.abs() <= ZERO_COEF && aq.abs() <= ZERO_COEF {
                    if bb < -ROW_TOL {
                        continue 'regions;
                    }
                    continue;
                }
                rows2.push(([ap, aq], bb));
            }
            let vertices = clip_box_2d(lo, hi, &rows2);
            if vertices.is_empty() {
                continue;
            }
            let mut a = sr.cost_const;
            for f in 0..NF - 2 {
                a += sr.cost_grad[f] * x[fast[f]];
            }
            let cost = AffineCost { a, b_p: sr.cost_grad[NF - 2], b_q: sr.cost_grad[NF - 1] };
            let poly_rows: Vec<(Vec<f64>, f64)> = rows2.iter().map(|(a, b)| (a.to_vec(), *b)).collect();
            pieces.push(ChartPiece { poly: Polyhedron::from_rows(2, &poly_rows), cost, region: sr.id, vertices });
        }
        finish_chart(node, pieces, ChartSource::Store)
    }
}

/// One-shot projection without caching.
pub fn project_chart(store: &PeriodRegionStore, node: usize, m: &Measurements) -> Result<FlexChart2D, RtError> {
    ChartProjector::new(store).project(node, m)
}

/// Drop slivers when full-dimensional pieces exist and check that the pieces
/// tile their hull.
fn finish_chart(node: usize, mut pieces: Vec<ChartPiece>, source: ChartSource) -> Result<FlexChart2D, RtError> {
    if pieces.is_empty() {
        return Err(RtError::EmptyChart);
    }
    let area = |p: &ChartPiece| polygon_area(&p.vertices).abs();
    const SLIVER: f64 = 1e-9;
    if pieces.iter().any(|p| area(p) > SLIVER) {
        pieces.retain(|p| area(p) > SLIVER);
    }
    pieces.sort_by_key(|p| p.region);
    let chart = FlexChart2D { node, pieces, source };
    let hull_area = polygon_area(&chart.hull()).abs();
    let covered: f64 = chart.pieces.iter().map(area).sum();
    if hull_area > SLIVER && covered < hull_area * (1.0 - 1e-6) - SLIVER {
        return Err(RtError::NotCovered);
    }
    Ok(chart)
}

fn pq_box(env: &Envelope, pl: &ParamLayout) -> ([f64; 2], [f64; 2]) {
    ([env.lower[pl.p_grid()], env.lower[pl.q_grid()]], [env.upper[pl.p_grid()], env.upper[pl.q_grid()]])
}

fn inside_envelope(env: &Envelope, n_s: usize, x: &[f64]) -> bool {
    let pl = ParamLayout { n_s };
    let theta = env.theta(n_s);
    let mut probe = x.to_vec();
    // the grid exchange is free; test at a point inside its range
    probe[pl.p_grid()] = env.lower[pl.p_grid()];
    probe[pl.q_grid()] = env.lower[pl.q_grid()];
    theta.contains(&probe, 1e-9)
}

/// Constant and gradient of the region cost after fixing the slow parameters.
fn slice_cost(
    c0: &f64,
    lin: &[f64],
    quad: &DMatrix<f64>,
    slow: &[usize],
    fast: &[usize; NF],
    x: &[f64],
) -> (f64, [f64; NF]) {
    let mut c = *c0;
    for &k in slow {
        c += lin[k] * x[k];
        for &j in slow {
            c += quad[(k, j)] * x[k] * x[j];
        }
    }
    let mut g = [0.0; NF];
    for (f, &k) in fast.iter().enumerate() {
        g[f] = lin[k];
        for &j in slow {
            g[f] += (quad[(k, j)] + quad[(j, k)]) * x[j];
        }
    }
    (c, g)
}

/// LP with every parameter except the grid exchange fixed, plus the grid
/// exchange as a 2-parameter RHS.
fn fixed_subproblem(problem: &PeriodProblem, store_env: &Envelope, m: &Measurements) -> ParametricLP {
    let pl = problem.params;
    let x = m.parameter_vector(pl.n_s, 0.0, 0.0);
    let fixed: Vec<(usize, f64)> =
        (0..pl.len()).filter(|&k| k != pl.p_grid() && k != pl.q_grid()).map(|k| (k, x[k])).collect();
    let (lo, hi) = pq_box(store_env, &pl);
    problem.plp.fix(&fixed, Polyhedron::from_box(&lo, &hi))
}

/// Cheapest feasible grid exchange of the fixed subproblem, if any.
fn cheapest_exchange(sub: &ParametricLP) -> Result<Option<[f64; 2]>, RtError> {
    let lp = &sub.base;
    let n = lp.num_vars();
    let mut aug = LinearProgram::new(n + 2);
    aug.cost[..n].copy_from_slice(&lp.cost);
    aug.lower[..n].copy_from_slice(&lp.lower);
    aug.upper[..n].copy_from_slice(&lp.upper);
    for k in 0..2 {
        aug.lower[n + k] = -sub.theta.b[2 * k + 1];
        aug.upper[n + k] = sub.theta.b[2 * k];
    }
    let ne = lp.num_eq();
    let nu = lp.num_ub();
    aug.a_eq = DMatrix::zeros(ne, n + 2);
    aug.a_ub = DMatrix::zeros(nu, n + 2);
    aug.a_eq.view_mut((0, 0), (ne, n)).copy_from(&lp.a_eq);
    aug.a_ub.view_mut((0, 0), (nu, n)).copy_from(&lp.a_ub);
    for k in 0..2 {
        for i in 0..ne {
            aug.a_eq[(i, n + k)] = -sub.rhs_sens[(i, k)];
        }
        for i in 0..nu {
            aug.a_ub[(i, n + k)] = -sub.rhs_sens[(ne + i, k)];
        }
    }
    aug.b_eq = lp.b_eq.clone();
    aug.b_ub = lp.b_ub.clone();
    let sol = solve_lp(&aug).map_err(MplpError::from)?;
    Ok((sol.status == LpStatus::Optimal).then(|| [sol.x[n], sol.x[n + 1]]))
}

/// Exact chart from a direct two-parameter solve of the fixed subproblem.
pub fn fallback_chart(
    problem: &PeriodProblem,
    envelope: &Envelope,
    node: usize,
    m: &Measurements,
) -> Result<FlexChart2D, RtError> {
    if m.value_function.num_segments() != problem.config.n_s {
        return Err(RtError::InconsistentSegments {
            expected: problem.config.n_s,
            got: m.value_function.num_segments(),
        });
    }
    let sub = fixed_subproblem(problem, envelope, m);
    let Some(seed) = cheapest_exchange(&sub)? else {
        return Err(RtError::EmptyChart);
    };
    let opts = EnumerateOptions { refill_rounds: 2, refill_samples: 60, ..Default::default() };
    let store = enumerate_regions(&sub, &[seed.to_vec()], &opts)?;
    let (lo, hi) = pq_box(envelope, &problem.params);
    let mut pieces = Vec::new();
    for r in &store.regions {
        let rows: Vec<([f64; 2], f64)> =
            (0..r.poly.num_rows()).map(|i| ([r.poly.a[(i, 0)], r.poly.a[(i, 1)]], r.poly.b[i])).collect();
        let vertices = clip_box_2d(lo, hi, &rows);
        if vertices.is_empty() {
            continue;
        }
        let cost = AffineCost { a: r.cost_const, b_p: r.cost_linear[0], b_q: r.cost_linear[1] };
        pieces.push(ChartPiece { poly: r.poly.clone(), cost, region: r.id, vertices });
    }
    finish_chart(node, pieces, ChartSource::Fallback)
}

/// Device setpoints for the coming tick and the plan for the rest of the period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetSetpoints {
    pub p_imp: f64,
    pub p_exp: f64,
    pub q_imp: f64,
    pub q_exp: f64,
    pub p_pv: f64,
    pub q_pv: f64,
    pub p_ch: f64,
    pub p_dis: f64,
    pub q_bat: f64,
    pub e_imp_2: f64,
    pub e_exp_2: f64,
    pub e_ch_2: f64,
    pub e_dis_2: f64,
    pub soc_1: f64,
    pub soc_2: f64,
    /// Local objective value (EUR) at this setpoint.
    pub local_cost: f64,
    /// True when the stored policy was replaced by a direct solve.
    pub direct_solve: bool,
}

impl AssetSetpoints {
    fn from_vector(u: &[f64], cost: f64, direct: bool) -> Self {
        type V = VarLayout;
        AssetSetpoints {
            p_imp: u[V::P_IMP],
            p_exp: u[V::P_EXP],
            q_imp: u[V::Q_IMP],
            q_exp: u[V::Q_EXP],
            p_pv: u[V::P_PV],
            q_pv: u[V::Q_PV_POS] - u[V::Q_PV_NEG],
            p_ch: u[V::P_CH],
            p_dis: u[V::P_DIS],
            q_bat: u[V::Q_BAT_POS] - u[V::Q_BAT_NEG],
            e_imp_2: u[V::E_IMP],
            e_exp_2: u[V::E_EXP],
            e_ch_2: u[V::E_CH],
            e_dis_2: u[V::E_DIS],
            soc_1: u[V::SOC_1],
            soc_2: u[V::SOC_2],
            local_cost: cost,
            direct_solve: direct,
        }
    }
}

const DISAGG_TOL: f64 = 1e-7;

/// Map a nodal setpoint (kW, kvar) to device setpoints through the policy
/// of the chart piece containing it.
pub fn disaggregate(
    problem: &PeriodProblem,
    store: Option<&PeriodRegionStore>,
    m: &Measurements,
    chart: &FlexChart2D,
    setpoint: (f64, f64),
) -> Result<AssetSetpoints, RtError> {
    let (p, q) = setpoint;
    if !chart.contains(p, q, DISAGG_TOL) {
        return Err(RtError::OutsideChart(p, q));
    }
    let x = m.parameter_vector(problem.config.n_s, p, q);
    let lp = problem.plp.instantiate(&x);
    if let (ChartSource::Store, Some(store)) = (chart.source, store) {
        if let Some(k) = chart.piece_at(p, q, DISAGG_TOL) {
            let region = &store.store.regions[chart.pieces[k].region];
            if !region.flags.degenerate {
                let u = region.policy_at(&x);
                let scale = 1.0 + u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if lp.max_violation(&u) <= DISAGG_TOL * scale {
                    let cost = lp.cost.iter().zip(&u).map(|(c, v)| c * v).sum();
                    return Ok(AssetSetpoints::from_vector(&u, cost, false));
                }
            }
        }
    }
    let sol = solve_lp(&lp).map_err(MplpError::from)?;
    if sol.status != LpStatus::Optimal {
        return Err(RtError::OutsideChart(p, q));
    }
    Ok(AssetSetpoints::from_vector(&sol.x, sol.objective, true))
}

/// Local optimum at fixed measurements and grid exchange, by direct LP.
pub fn local_optimum(
    problem: &PeriodProblem,
    m: &Measurements,
    p: f64,
    q: f64,
) -> Result<Option<(f64, Vec<f64>)>, RtError> {
    let lp = problem.plp.instantiate(&m.parameter_vector(problem.config.n_s, p, q));
    let sol = solve_lp(&lp).map_err(MplpError::from)?;
    Ok((sol.status == LpStatus::Optimal).then_some((sol.objective, sol.x)))
}

/// First sub-interval length in hours (re-exported for callers building
/// measurements).
pub fn tick_h() -> f64 {
    tick_hours()
}
