//! Device and tariff parameters and the linearized PV / battery capability polygons.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::Polyhedron;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssetError {
    #[error("invalid battery parameters: {0}")]
    InvalidBattery(String),
    #[error("invalid PV parameters: {0}")]
    InvalidPv(String),
    #[error("invalid tariff: {0}")]
    InvalidTariff(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub capacity_kwh: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    /// Charge and discharge power limit (kW).
    pub p_max_kw: f64,
    pub s_nom_kva: f64,
    pub soc_min: f64,
    pub soc_max: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        BatteryParams {
            capacity_kwh: 10.0,
            eta_ch: 0.95,
            eta_dis: 0.95,
            p_max_kw: 5.0,
            s_nom_kva: 5.0,
            soc_min: 0.1,
            soc_max: 0.9,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<(), AssetError> {
        let bad = |m: &str| Err(AssetError::InvalidBattery(m.to_string()));
        if !(self.capacity_kwh > 0.0) {
            return bad("capacity must be positive");
        }
        if !(self.eta_ch > 0.0 && self.eta_ch <= 1.0 && self.eta_dis > 0.0 && self.eta_dis <= 1.0) {
            return bad("efficiencies must lie in (0, 1]");
        }
        if !(self.p_max_kw >= 0.0 && self.s_nom_kva >= 0.0) {
            return bad("power ratings must be non-negative");
        }
        if !(0.0 < self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return bad("need 0 < soc_min < soc_max <= 1");
        }
        Ok(())
    }

    /// Active power limit actually reachable through the inverter.
    pub fn p_limit(&self) -> f64 {
        self.p_max_kw.min(self.s_nom_kva)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PvParams {
    pub s_nom_kva: f64,
    /// `|q| <= q_slope * p`.
    pub q_slope: f64,
}

impl Default for PvParams {
    fn default() -> Self {
        PvParams { s_nom_kva: 5.0, q_slope: 1.0 / 3.0 }
    }
}

impl PvParams {
    pub fn validate(&self) -> Result<(), AssetError> {
        if !(self.s_nom_kva > 0.0) {
            return Err(AssetError::InvalidPv("apparent power must be positive".into()));
        }
        if !(self.q_slope >= 0.0 && self.q_slope.is_finite()) {
            return Err(AssetError::InvalidPv("reactive slope must be non-negative".into()));
        }
        Ok(())
    }
}

/// Scalar prices (EUR/kWh, EUR/kvarh).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    pub pi_imp: f64,
    pub pi_exp: f64,
    pub pi_bat: f64,
    pub pi_q: f64,
    pub pi_loss: f64,
}

impl Default for Tariff {
    fn default() -> Self {
        Tariff { pi_imp: 0.30, pi_exp: 0.12, pi_bat: 0.02, pi_q: 0.01, pi_loss: 0.30 }
    }
}

impl Tariff {
    pub fn validate(&self) -> Result<(), AssetError> {
        let all = [self.pi_imp, self.pi_exp, self.pi_bat, self.pi_q, self.pi_loss];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(AssetError::InvalidTariff("prices must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviceTag {
    Pv,
    Battery,
}

/// Capability polygon in (p, q), kW / kvar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevicePolytope {
    pub tag: DeviceTag,
    pub poly: Polyhedron,
    pub s_nom: f64,
    pub p_limit: f64,
    pub n_arc: usize,
}

/// Half-planes `cos(m) p + sin(m) q <= S cos(w/2)` for `n` equal chords of the
/// circle of radius `s` between angles `from` and `to`. Chord endpoints lie
/// on the circle, so the cut set is an inner approximation.
pub(crate) fn chord_rows(s: f64, from: f64, to: f64, n: usize) -> Vec<([f64; 2], f64)> {
    let n = n.max(1);
    let w = (to - from) / n as f64;
    if w <= 0.0 {
        return Vec::new();
    }
    (0..n)
        .map(|k| {
            let m = from + (k as f64 + 0.5) * w;
            ([m.cos(), m.sin()], s * (0.5 * w).cos())
        })
        .collect()
}

/// PV rows independent of the MPP limit, in (p, q): non-negativity,
/// inverter rating, reactive slope and circle chords. The MPP row
/// `p <= p_max` is added separately.
pub(crate) fn pv_fixed_rows(params: &PvParams, n_arc: usize) -> Vec<([f64; 2], f64)> {
    let s = params.s_nom_kva;
    let phi = params.q_slope.atan();
    let mut rows =
        vec![([-1.0, 0.0], 0.0), ([1.0, 0.0], s), ([-params.q_slope, 1.0], 0.0), ([-params.q_slope, -1.0], 0.0)];
    rows.extend(chord_rows(s, -phi, phi, n_arc));
    rows
}

pub fn pv_polytope(params: &PvParams, p_max: f64, n_arc: usize) -> DevicePolytope {
    let mut rows = pv_fixed_rows(params, n_arc);
    rows.push(([1.0, 0.0], p_max.max(0.0)));
    DevicePolytope {
        tag: DeviceTag::Pv,
        poly: to_poly(&rows),
        s_nom: params.s_nom_kva,
        p_limit: p_max.max(0.0).min(params.s_nom_kva),
        n_arc,
    }
}

/// Battery rows in (p_bat, q_bat) with `p_bat > 0` meaning discharge.
/// `n_arc` chords per quadrant cover the part of the circle not cut off by
/// the active power limit.
pub(crate) fn battery_rows(params: &BatteryParams, n_arc: usize) -> Vec<([f64; 2], f64)> {
    let s = params.s_nom_kva;
    let pm = params.p_max_kw;
    if s <= 0.0 {
        return vec![([1.0, 0.0], 0.0), ([-1.0, 0.0], 0.0), ([0.0, 1.0], 0.0), ([0.0, -1.0], 0.0)];
    }
    let start = (pm / s).min(1.0).acos();
    let mut rows = vec![([1.0, 0.0], pm.min(s)), ([-1.0, 0.0], pm.min(s))];
    let half = std::f64::consts::FRAC_PI_2;
    for (a, b) in [(start, half), (half, 2.0 * half - start)] {
        rows.extend(chord_rows(s, a, b, n_arc));
        rows.extend(chord_rows(s, -b, -a, n_arc));
    }
    rows
}

pub fn battery_polytope(params: &BatteryParams, n_arc: usize) -> DevicePolytope {
    DevicePolytope {
        tag: DeviceTag::Battery,
        poly: to_poly(&battery_rows(params, n_arc)),
        s_nom: params.s_nom_kva,
        p_limit: params.p_limit(),
        n_arc,
    }
}

fn to_poly(rows: &[([f64; 2], f64)]) -> Polyhedron {
    let r: Vec<(Vec<f64>, f64)> = rows.iter().map(|(a, b)| (a.to_vec(), *b)).collect();
    Polyhedron::from_rows(2, &r)
}

/// State of charge after `dt_h` hours at the given charge/discharge powers.
pub fn soc_step(soc: f64, p_ch: f64, p_dis: f64, dt_h: f64, params: &BatteryParams) -> f64 {
    soc + (params.eta_ch * p_ch - p_dis / params.eta_dis) * dt_h / params.capacity_kwh
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::polygon_area;

    #[test]
    fn pv_small_mpp_is_triangle() {
        let pv = PvParams { s_nom_kva: 10.0, q_slope: 1.0 / 3.0 };
        for n in [1, 3, 8] {
            let v = pv_polytope(&pv, 3.0, n).poly.vertices_2d().unwrap();
            assert_eq!(v.len(), 3);
            for expect in [[0.0, 0.0], [3.0, 1.0], [3.0, -1.0]] {
                assert!(v.iter().any(|p| (p[0] - expect[0]).abs() < 1e-9 && (p[1] - expect[1]).abs() < 1e-9));
            }
        }
    }

    #[test]
    fn pv_zero_mpp_is_point() {
        let v = pv_polytope(&PvParams::default(), 0.0, 6).poly.vertices_2d().unwrap();
        assert_eq!(v.len(), 1);
        assert!(v[0][0].abs() < 1e-12 && v[0][1].abs() < 1e-12);
    }

    #[test]
    fn soc_step_arithmetic() {
        let b = BatteryParams { capacity_kwh: 10.0, eta_ch: 0.95, ..Default::default() };
        assert_eq!(soc_step(0.5, 0.0, 0.0, 0.25, &b), 0.5);
        assert!((soc_step(0.5, 4.0, 0.0, 0.25, &b) - 0.595).abs() < 1e-12);
    }

    #[test]
    fn battery_square_case() {
        let b = BatteryParams { s_nom_kva: 5.0, p_max_kw: 5.0, ..Default::default() };
        let v = battery_polytope(&b, 1).poly.vertices_2d().unwrap();
        assert_eq!(v.len(), 4);
        assert!((polygon_area(&v) - 50.0).abs() < 1e-9);
    }
}
