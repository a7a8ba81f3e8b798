//! Day scenarios: feeder, unit devices, PV, load and price profiles at tick
//! resolution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::assets::{BatteryParams, PvParams, Tariff};
use crate::central::{FeederModel, Line};
use crate::period::{PERIOD_S, TICK_S};
use crate::planning::{clipped_durations, PlanningHorizon};

pub const TICKS_PER_PERIOD: usize = (PERIOD_S / TICK_S) as usize;
pub const TICKS_PER_HOUR: usize = 360;

/// Devices of one residential unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitSpec {
    /// Key of the offline store this unit uses.
    pub archetype: String,
    pub battery: BatteryParams,
    pub pv: PvParams,
    pub soc0: f64,
}

impl Default for UnitSpec {
    fn default() -> Self {
        UnitSpec { archetype: "default".into(), battery: BatteryParams::default(), pv: PvParams::default(), soc0: 0.5 }
    }
}

/// Inputs of one simulated day. Profiles are indexed by tick; `units[j - 1]`
/// sits at feeder node `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub feeder: FeederModel,
    pub units: Vec<UnitSpec>,
    pub tariff: Tariff,
    /// Available PV power per kVA of inverter rating (shared irradiance).
    pub pv_per_kva: Vec<f64>,
    pub load_p_kw: Vec<Vec<f64>>,
    pub load_q_kvar: Vec<Vec<f64>>,
    /// Hourly import and export prices, EUR/kWh.
    pub pi_imp_hourly: Vec<f64>,
    pub pi_exp_hourly: Vec<f64>,
    /// Relative standard deviation of the planning forecasts.
    pub forecast_sigma: f64,
    pub n_s: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn num_ticks(&self) -> usize {
        self.pv_per_kva.len()
    }

    pub fn num_periods(&self) -> usize {
        self.num_ticks().div_ceil(TICKS_PER_PERIOD)
    }

    pub fn tick_h(&self) -> f64 {
        TICK_S / 3600.0
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        self.feeder.validate()?;
        if self.units.len() + 1 != self.feeder.num_nodes {
            return bad(format!("{} units for {} feeder nodes", self.units.len(), self.feeder.num_nodes));
        }
        let n = self.num_ticks();
        if n == 0 || !n.is_multiple_of(TICKS_PER_PERIOD) {
            return bad("the day must be a whole number of market periods".into());
        }
        if self.load_p_kw.len() != self.units.len() || self.load_q_kvar.len() != self.units.len() {
            return bad("one load profile per unit required".into());
        }
        if self.load_p_kw.iter().chain(&self.load_q_kvar).any(|l| l.len() != n) {
            return bad("load profiles must cover every tick".into());
        }
        let hours = n.div_ceil(TICKS_PER_HOUR);
        if self.pi_imp_hourly.len() < hours || self.pi_exp_hourly.len() < hours {
            return bad("price series shorter than the day".into());
        }
        for u in &self.units {
            u.battery.validate()?;
            u.pv.validate()?;
            if u.soc0 < u.battery.soc_min || u.soc0 > u.battery.soc_max {
                return bad("initial SOC outside battery bounds".into());
            }
        }
        self.tariff.validate()?;
        Ok(())
    }

    /// Settlement prices of a market period: hourly prices interpolated
    /// linearly at the period midpoint.
    pub fn period_prices(&self, period: usize) -> (f64, f64) {
        let t_h = (period as f64 + 0.5) * PERIOD_S / 3600.0;
        (interp_hourly(&self.pi_imp_hourly, t_h), interp_hourly(&self.pi_exp_hourly, t_h))
    }

    pub fn pv_available_kw(&self, unit: usize, tick: usize) -> f64 {
        self.pv_per_kva[tick] * self.units[unit].pv.s_nom_kva
    }

    /// True mean over ticks `[from, to)` of the PV availability and load of a unit.
    pub fn mean_pv_load(&self, unit: usize, from: usize, to: usize) -> (f64, f64) {
        if to <= from {
            return (0.0, 0.0);
        }
        let k = (to - from) as f64;
        let pv: f64 = (from..to).map(|t| self.pv_available_kw(unit, t)).sum::<f64>() / k;
        let load: f64 = self.load_p_kw[unit][from..to].iter().sum::<f64>() / k;
        (pv, load)
    }

    /// Forecast horizon starting at tick `start`, clipped at the end of the day.
    pub fn planning_horizon(&self, unit: usize, start: usize, rng: &mut ChaCha8Rng) -> PlanningHorizon {
        let left_h = (self.num_ticks() - start.min(self.num_ticks())) as f64 / TICKS_PER_HOUR as f64;
        let dt_h = clipped_durations(left_h);
        let noise = Normal::new(0.0, self.forecast_sigma.max(0.0)).expect("finite sigma");
        let mut h = PlanningHorizon {
            dt_h: Vec::new(),
            pv_kw: Vec::new(),
            load_kw: Vec::new(),
            pi_imp: Vec::new(),
            pi_exp: Vec::new(),
            pi_bat: self.tariff.pi_bat,
        };
        let mut t0 = start;
        for d in dt_h {
            let t1 = (t0 + (d * TICKS_PER_HOUR as f64).round() as usize).min(self.num_ticks());
            if t1 <= t0 {
                break;
            }
            let (mut pv, mut load) = self.mean_pv_load(unit, t0, t1);
            if self.forecast_sigma > 0.0 {
                pv = (pv * (1.0 + noise.sample(rng))).max(0.0);
                load = (load * (1.0 + noise.sample(rng))).max(0.0);
            }
            let p0 = t0 / TICKS_PER_PERIOD;
            let p1 = (t1 - 1) / TICKS_PER_PERIOD;
            let (mut imp, mut exp) = (0.0, 0.0);
            for p in p0..=p1 {
                let a = t0.max(p * TICKS_PER_PERIOD);
                let b = t1.min((p + 1) * TICKS_PER_PERIOD);
                let (pi, pe) = self.period_prices(p);
                imp += pi * (b - a) as f64;
                exp += pe * (b - a) as f64;
            }
            let k = (t1 - t0) as f64;
            h.dt_h.push(k / TICKS_PER_HOUR as f64);
            h.pv_kw.push(pv);
            h.load_kw.push(load);
            h.pi_imp.push(imp / k);
            h.pi_exp.push(exp / k);
            t0 = t1;
        }
        h
    }
}

fn interp_hourly(series: &[f64], t_h: f64) -> f64 {
    // hourly values sit at the middle of their hour
    let x = t_h - 0.5;
    if x <= 0.0 {
        return series[0];
    }
    let i = x.floor() as usize;
    if i + 1 >= series.len() {
        return *series.last().unwrap();
    }
    let w = x - i as f64;
    (1.0 - w) * series[i] + w * series[i + 1]
}

/// Feeder presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeederPreset {
    /// Four 0.08 ohm segments, slack at 1.00 p.u.
    Nominal,
    /// Long overhead-like segments with the slack held at 1.01 p.u.
    Weak,
}

/// Chain feeder `0 - 1 - ... - n_units` on a 100 kVA / 400 V base.
pub fn chain_feeder(n_units: usize, r_ohm: f64, x_ohm: f64, v0: f64) -> FeederModel {
    let s_base = 100.0;
    let v_base = 400.0;
    let z = FeederModel::z_base_ohm(s_base, v_base);
    FeederModel {
        num_nodes: n_units + 1,
        lines: (0..n_units).map(|k| Line { from: k, to: k + 1, r_pu: r_ohm / z, x_pu: x_ohm / z }).collect(),
        v0_sq: v0 * v0,
        v_min_sq: 0.95 * 0.95,
        v_max_sq: 1.05 * 1.05,
        s_base_kva: s_base,
        v_base_v: v_base,
    }
}

impl FeederPreset {
    pub fn feeder(self, n_units: usize) -> FeederModel {
        match self {
            FeederPreset::Nominal => chain_feeder(n_units, 0.08, 0.03, 1.0),
            FeederPreset::Weak => chain_feeder(n_units, 0.2, 0.07, 1.01),
        }
    }
}

/// Knobs of the synthetic day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOptions {
    pub seed: u64,
    pub n_units: usize,
    /// Clock hour of the first tick.
    pub start_hour: usize,
    pub hours: usize,
    pub feeder: FeederPreset,
    pub unit: UnitSpec,
    pub tariff: Tariff,
    /// Scale of the two-peak load template and its noise.
    pub load_scale: f64,
    /// Scale of the irradiance curve (1 = clear sky).
    pub pv_scale: f64,
    pub forecast_sigma: f64,
    pub n_s: usize,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        ScenarioOptions {
            seed: 1,
            n_units: 4,
            start_hour: 0,
            hours: 24,
            feeder: FeederPreset::Nominal,
            unit: UnitSpec::default(),
            tariff: Tariff::default(),
            load_scale: 1.0,
            pv_scale: 1.0,
            forecast_sigma: 0.0,
            n_s: 4,
        }
    }
}

impl ScenarioOptions {
    /// Weak feeder where unmanaged midday export lifts voltages above limits.
    pub fn high_pv(seed: u64) -> Self {
        ScenarioOptions { seed, feeder: FeederPreset::Weak, ..Default::default() }
    }
}

/// Clear-sky shape: zero before 05:00 and after 21:00, peak 1 at 13:00.
pub fn clear_sky(t_h: f64) -> f64 {
    let x = (t_h - 13.0) / 8.0;
    if x.abs() >= 1.0 {
        0.0
    } else {
        (x * std::f64::consts::FRAC_PI_2).cos().powf(1.3)
    }
}

/// Residential template (kW): night base, morning and evening peaks.
pub fn load_template(t_h: f64) -> f64 {
    let bump = |c: f64, w: f64, a: f64| a * (-0.5 * ((t_h - c) / w).powi(2)).exp();
    0.35 + bump(7.5, 1.0, 1.1) + bump(12.5, 1.5, 0.35) + bump(19.0, 1.6, 1.9)
}

/// Hourly import price template, EUR/kWh.
pub fn import_price_template() -> Vec<f64> {
    vec![
        0.22, 0.21, 0.20, 0.20, 0.21, 0.23, 0.27, 0.32, 0.34, 0.31, 0.28, 0.26, 0.24, 0.23, 0.24, 0.26, 0.29, 0.33,
        0.37, 0.39, 0.37, 0.32, 0.27, 0.24,
    ]
}

const LOAD_MAX_KW: f64 = 9.0;
const LOAD_TAN_PHI: f64 = 0.3287; // power factor 0.95
const OU_TIME_S: f64 = 600.0;
const OU_STD_KW: f64 = 0.35;

/// Generate a scenario: shared clear-sky PV, per-unit Ornstein-Uhlenbeck
/// loads around the template, hourly prices with export at 40 % of import.
pub fn generate(opts: &ScenarioOptions) -> Result<Scenario, SimError> {
    let n_ticks = opts.hours * TICKS_PER_HOUR;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let clock = |t: usize| opts.start_hour as f64 + (t as f64 + 0.5) / TICKS_PER_HOUR as f64;
    let pv_per_kva: Vec<f64> = (0..n_ticks).map(|t| opts.pv_scale * clear_sky(clock(t))).collect();
    let decay = (-TICK_S / OU_TIME_S).exp();
    let kick = OU_STD_KW * (1.0 - decay * decay).sqrt();
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut load_p = Vec::new();
    let mut load_q = Vec::new();
    for _ in 0..opts.n_units {
        let scale = opts.load_scale * (0.7 + 0.6 * rand::Rng::random::<f64>(&mut rng));
        let mut x = OU_STD_KW * std.sample(&mut rng);
        let mut p = Vec::with_capacity(n_ticks);
        for t in 0..n_ticks {
            let base = scale * load_template(clock(t));
            p.push((base + opts.load_scale * x).clamp(0.0, LOAD_MAX_KW));
            x = decay * x + kick * std.sample(&mut rng);
        }
        load_q.push(p.iter().map(|v| v * LOAD_TAN_PHI).collect());
        load_p.push(p);
    }
    let template = import_price_template();
    let imp: Vec<f64> = (0..24).map(|h| template[(opts.start_hour + h) % 24]).collect();
    let exp = imp.iter().map(|v| 0.4 * v).collect();
    let sc = Scenario {
        feeder: opts.feeder.feeder(opts.n_units),
        units: vec![opts.unit.clone(); opts.n_units],
        tariff: opts.tariff.clone(),
        pv_per_kva,
        load_p_kw: load_p,
        load_q_kvar: load_q,
        pi_imp_hourly: imp,
        pi_exp_hourly: exp,
        forecast_sigma: opts.forecast_sigma,
        n_s: opts.n_s,
        seed: opts.seed,
    };
    sc.validate()?;
    Ok(sc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_have_expected_shape() {
        let sc = generate(&ScenarioOptions::default()).unwrap();
        assert_eq!(sc.num_ticks(), 8640);
        assert_eq!(sc.num_periods(), 96);
        let peak = (0..sc.num_ticks()).max_by(|&a, &b| sc.pv_per_kva[a].total_cmp(&sc.pv_per_kva[b])).unwrap();
        assert!((peak as f64 / TICKS_PER_HOUR as f64 - 13.0).abs() < 0.01);
        assert!((sc.pv_available_kw(0, peak) - 5.0).abs() < 1e-6);
        assert_eq!(sc.pv_per_kva[0], 0.0);
        assert!(sc.load_p_kw.iter().flatten().all(|v| *v >= 0.0 && *v <= LOAD_MAX_KW));
        let (pi, pe) = sc.period_prices(0);
        assert!((pe - 0.4 * pi).abs() < 1e-12);
    }

    #[test]
    fn horizon_covers_rest_of_day() {
        let sc = generate(&ScenarioOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = sc.planning_horizon(0, 90, &mut rng);
        assert!((h.dt_h.iter().sum::<f64>() - 23.75).abs() < 1e-9);
        let h = sc.planning_horizon(0, 8640 - 360, &mut rng);
        assert!((h.dt_h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(sc.planning_horizon(0, 8640, &mut rng).is_empty());
    }

    #[test]
    fn same_seed_same_profiles() {
        let a = generate(&ScenarioOptions::default()).unwrap();
        let b = generate(&ScenarioOptions::default()).unwrap();
        assert_eq!(a, b);
        let c = generate(&ScenarioOptions { seed: 2, ..Default::default() }).unwrap();
        assert_ne!(a.load_p_kw, c.load_p_kw);
    }
}
