//! Day-ahead operational planning: a battery scheduling LP solved
//! parametrically in the initial state of charge, giving a convex
//! piecewise-affine cost-to-go.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::{AssetError, BatteryParams};
use crate::lp::{solve_lp, LpBuilder, LpStatus, Polyhedron};
use crate::mplp::{enumerate_regions, EnumerateOptions, MplpError, ParametricLP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanningError {
    #[error("invalid horizon: {0}")]
    InvalidHorizon(String),
    #[error("planning LP infeasible at SOC {0}")]
    InfeasibleAtBound(f64),
    #[error("segment count must be at least 1")]
    NoSegments,
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Mplp(#[from] MplpError),
}

/// Forecasts and prices per planning interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanningHorizon {
    pub dt_h: Vec<f64>,
    pub pv_kw: Vec<f64>,
    pub load_kw: Vec<f64>,
    pub pi_imp: Vec<f64>,
    pub pi_exp: Vec<f64>,
    pub pi_bat: f64,
}

/// Default interval lengths: 16 x 15 min, 8 x 1 h, 3 x ~3.92 h (23 h 45 min).
pub fn default_durations() -> Vec<f64> {
    let mut d = vec![0.25; 16];
    d.extend(vec![1.0; 8]);
    let rest = (23.75 - 4.0 - 8.0) / 3.0;
    d.extend(vec![rest; 3]);
    d
}

/// Default grid truncated to `available_h` hours (last interval shortened).
pub fn clipped_durations(available_h: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut left = available_h;
    for d in default_durations() {
        if left <= 1e-9 {
            break;
        }
        let step = d.min(left);
        out.push(step);
        left -= step;
    }
    out
}

impl PlanningHorizon {
    pub fn len(&self) -> usize {
        self.dt_h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dt_h.is_empty()
    }

    pub fn validate(&self) -> Result<(), PlanningError> {
        let n = self.len();
        if [self.pv_kw.len(), self.load_kw.len(), self.pi_imp.len(), self.pi_exp.len()].iter().any(|&l| l != n) {
            return Err(PlanningError::InvalidHorizon("series lengths differ".into()));
        }
        if self.dt_h.iter().any(|d| !(*d > 0.0)) {
            return Err(PlanningError::InvalidHorizon("durations must be positive".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.pv_kw) || !finite(&self.load_kw) || !finite(&self.pi_imp) || !finite(&self.pi_exp) {
            return Err(PlanningError::InvalidHorizon("non-finite forecast".into()));
        }
        Ok(())
    }
}

/// Convex piecewise-affine function of the state of charge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueFunctionPWA {
    pub breakpoints: Vec<f64>,
    pub slopes: Vec<f64>,
    /// Value at the first breakpoint.
    pub offset: f64,
}

impl ValueFunctionPWA {
    pub fn flat(soc_min: f64, soc_max: f64, n_s: usize) -> Self {
        let n_s = n_s.max(1);
        let breakpoints = (0..=n_s).map(|k| soc_min + (soc_max - soc_min) * k as f64 / n_s as f64).collect();
        ValueFunctionPWA { breakpoints, slopes: vec![0.0; n_s], offset: 0.0 }
    }

    pub fn num_segments(&self) -> usize {
        self.slopes.len()
    }

    pub fn eval(&self, soc: f64) -> f64 {
        let mut v = self.offset;
        for (k, s) in self.slopes.iter().enumerate() {
            let a = self.breakpoints[k];
            let b = self.breakpoints[k + 1];
            let x = soc.clamp(a, b);
            v += s * (x - a);
        }
        // linear extension outside the domain
        let first = self.breakpoints[0];
        let last = *self.breakpoints.last().unwrap();
        if soc < first {
            v += self.slopes[0] * (soc - first);
        } else if soc > last {
            v += self.slopes.last().unwrap() * (soc - last);
        }
        v
    }

    /// Values at the breakpoints.
    pub fn breakpoint_values(&self) -> Vec<f64> {
        self.breakpoints.iter().map(|&b| self.eval(b)).collect()
    }

    /// Merge adjacent segments with the closest slopes (chord slope keeps
    /// endpoint values and convexity) until `n_s` remain; split the longest
    /// segments when there are fewer.
    pub fn simplify(&self, n_s: usize) -> Result<ValueFunctionPWA, PlanningError> {
        if n_s == 0 {
            return Err(PlanningError::NoSegments);
        }
        let mut bp = self.breakpoints.clone();
        let mut val = self.breakpoint_values();
        while bp.len() - 1 > n_s {
            let slopes: Vec<f64> = (0..bp.len() - 1).map(|k| (val[k + 1] - val[k]) / (bp[k + 1] - bp[k])).collect();
            let mut best = 0;
            let mut gap = f64::INFINITY;
            for k in 0..slopes.len() - 1 {
                let g = slopes[k + 1] - slopes[k];
                if g < gap {
                    gap = g;
                    best = k;
                }
            }
            bp.remove(best + 1);
            val.remove(best + 1);
        }
        while bp.len() - 1 < n_s {
            let k = (0..bp.len() - 1)
                .max_by(|&a, &b| (bp[a + 1] - bp[a]).partial_cmp(&(bp[b + 1] - bp[b])).unwrap().then(b.cmp(&a)))
                .unwrap();
            let mid = 0.5 * (bp[k] + bp[k + 1]);
            let vm = 0.5 * (val[k] + val[k + 1]);
            bp.insert(k + 1, mid);
            val.insert(k + 1, vm);
        }
        let mut slopes: Vec<f64> = (0..n_s).map(|k| (val[k + 1] - val[k]) / (bp[k + 1] - bp[k])).collect();
        // guard against rounding producing a tiny convexity violation
        for k in 1..slopes.len() {
            if slopes[k] < slopes[k - 1] {
                slopes[k] = slopes[k - 1];
            }
        }
        Ok(ValueFunctionPWA { breakpoints: bp, slopes, offset: val[0] })
    }
}

/// Variable layout: per interval `[p_imp, p_exp, p_ch, p_dis, soc]`.
pub const VARS_PER_INTERVAL: usize = 5;

pub fn build_planning_lp(h: &PlanningHorizon, bat: &BatteryParams) -> Result<ParametricLP, PlanningError> {
    h.validate()?;
    bat.validate()?;
    let mut b = LpBuilder::new();
    let n = h.len();
    let mut soc_prev: Option<usize> = None;
    let mut soc_row0 = None;
    for t in 0..n {
        let dt = h.dt_h[t];
        let p_imp = b.var(h.pi_imp[t] * dt, 0.0, f64::INFINITY);
        let p_exp = b.var(-h.pi_exp[t] * dt, 0.0, f64::INFINITY);
        let p_ch = b.var(h.pi_bat * dt, 0.0, bat.p_max_kw);
        let p_dis = b.var(h.pi_bat * dt, 0.0, bat.p_max_kw);
        let soc = b.var(0.0, bat.soc_min, bat.soc_max);
        // p_exp - p_imp - p_dis + p_ch = pv - load
        b.eq(&[(p_exp, 1.0), (p_imp, -1.0), (p_dis, -1.0), (p_ch, 1.0)], h.pv_kw[t] - h.load_kw[t]);
        let k = dt / bat.capacity_kwh;
        let mut terms = vec![(soc, 1.0), (p_ch, -bat.eta_ch * k), (p_dis, k / bat.eta_dis)];
        match soc_prev {
            Some(prev) => {
                terms.push((prev, -1.0));
                b.eq(&terms, 0.0);
            }
            None => soc_row0 = Some(b.eq(&terms, 0.0)),
        }
        soc_prev = Some(soc);
    }
    let base = b.build();
    let m = base.num_eq() + base.num_ub();
    let mut rhs_sens = DMatrix::zeros(m, 1);
    if let Some(r) = soc_row0 {
        rhs_sens[(r, 0)] = 1.0;
    }
    Ok(ParametricLP {
        cost_sens: DMatrix::zeros(base.num_vars(), 1),
        base,
        rhs_sens,
        theta: Polyhedron::from_box(&[bat.soc_min], &[bat.soc_max]),
        param_names: vec!["soc0".into()],
    })
}

/// Optimal planning cost at a given initial SOC.
pub fn planning_cost(plp: &ParametricLP, soc0: f64) -> Result<Option<f64>, PlanningError> {
    let sol = solve_lp(&plp.instantiate(&[soc0])).map_err(MplpError::from)?;
    Ok((sol.status == LpStatus::Optimal).then_some(sol.objective))
}

/// Exact piecewise-affine value function from the critical regions.
pub fn exact_value_function(plp: &ParametricLP, bat: &BatteryParams) -> Result<ValueFunctionPWA, PlanningError> {
    let (lo, hi) = (bat.soc_min, bat.soc_max);
    if plp.base.num_vars() == 0 {
        return Ok(ValueFunctionPWA { breakpoints: vec![lo, hi], slopes: vec![0.0], offset: 0.0 });
    }
    for s in [lo, hi] {
        if planning_cost(plp, s)?.is_none() {
            return Err(PlanningError::InfeasibleAtBound(s));
        }
    }
    let seeds = vec![vec![0.5 * (lo + hi)], vec![lo], vec![hi]];
    let opts = EnumerateOptions { refill_rounds: 2, refill_samples: 50, ..Default::default() };
    let store = enumerate_regions(plp, &seeds, &opts)?;

    // Candidate kinks: every region endpoint.
    let mut pts = vec![lo, hi];
    for r in &store.regions {
        for i in 0..r.poly.num_rows() {
            let a = r.poly.a[(i, 0)];
            if a.abs() > 1e-12 {
                let x = r.poly.b[i] / a;
                if x > lo && x < hi {
                    pts.push(x);
                }
            }
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let value = |x: f64| -> Result<f64, PlanningError> {
        match store.locate(&[x], 1e-9) {
            Ok(r) => Ok(r.cost_at(&[x])),
            Err(_) => planning_cost(plp, x)?.ok_or(PlanningError::InfeasibleAtBound(x)),
        }
    };
    let vals = pts.iter().map(|&x| value(x)).collect::<Result<Vec<_>, _>>()?;
    let mut bp = vec![pts[0]];
    let mut bv = vec![vals[0]];
    let mut slopes: Vec<f64> = Vec::new();
    for k in 1..pts.len() {
        let s = (vals[k] - vals[k - 1]) / (pts[k] - pts[k - 1]);
        if let Some(last) = slopes.last() {
            if (s - last).abs() <= 1e-9 * (1.0 + s.abs()) {
                *bp.last_mut().unwrap() = pts[k];
                *bv.last_mut().unwrap() = vals[k];
                let n = bp.len();
                *slopes.last_mut().unwrap() = (bv[n - 1] - bv[n - 2]) / (bp[n - 1] - bp[n - 2]);
                continue;
            }
        }
        slopes.push(s);
        bp.push(pts[k]);
        bv.push(vals[k]);
    }
    Ok(ValueFunctionPWA { breakpoints: bp, slopes, offset: bv[0] })
}

/// Value function simplified to exactly `n_s` segments.
pub fn solve_value_function(
    plp: &ParametricLP,
    bat: &BatteryParams,
    n_s: usize,
) -> Result<ValueFunctionPWA, PlanningError> {
    exact_value_function(plp, bat)?.simplify(n_s)
}
