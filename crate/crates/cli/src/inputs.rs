use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, NaiveDateTime, Timelike};
use serde::Deserialize;

use gridflex::assets::{BatteryParams, PvParams};
use gridflex::central::{FeederModel, Line};
use gridflex::sim::{generate, FeederPreset, Scenario, ScenarioOptions, UnitSpec, TICKS_PER_HOUR};

use crate::config::Config;

/// Reactive share of resampled loads (power factor 0.95).
const LOAD_TAN_PHI: f64 = 0.3287;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeederFile {
    base: Base,
    #[serde(default = "one")]
    v0_pu: f64,
    #[serde(default = "v_lo")]
    v_min_pu: f64,
    #[serde(default = "v_hi")]
    v_max_pu: f64,
    nodes: Vec<NodeSpec>,
    lines: Vec<LineSpec>,
}

fn one() -> f64 {
    1.0
}
fn v_lo() -> f64 {
    0.95
}
fn v_hi() -> f64 {
    1.05
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Base {
    s_base_kva: f64,
    v_base_v: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeSpec {
    id: usize,
    #[serde(default = "default_archetype")]
    archetype: String,
    s_nom_pv_kva: f64,
    #[serde(default = "pv_slope")]
    pv_q_slope: f64,
    s_nom_bat_kva: f64,
    c_bat_kwh: f64,
    p_max_bat_kw: Option<f64>,
    #[serde(default = "eta")]
    eta_ch: f64,
    #[serde(default = "eta")]
    eta_dis: f64,
    #[serde(default = "soc_lo")]
    soc_min: f64,
    #[serde(default = "soc_hi")]
    soc_max: f64,
    #[serde(default = "soc_mid")]
    soc0: f64,
}

fn default_archetype() -> String {
    "default".into()
}
fn pv_slope() -> f64 {
    1.0 / 3.0
}
fn eta() -> f64 {
    0.95
}
fn soc_lo() -> f64 {
    0.1
}
fn soc_hi() -> f64 {
    0.9
}
fn soc_mid() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineSpec {
    from: usize,
    to: usize,
    r_ohm: f64,
    x_ohm: f64,
}

/// Parse a feeder description: the slack is node 0, `nodes` lists the
/// unit buses `1..=n`.
pub fn read_feeder(path: &Path) -> Result<(FeederModel, Vec<UnitSpec>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read feeder {}", path.display()))?;
    let f: FeederFile = serde_json::from_str(&text).with_context(|| format!("feeder {}", path.display()))?;
    let n = f.nodes.len();
    let mut ids: Vec<usize> = f.nodes.iter().map(|nd| nd.id).collect();
    ids.sort_unstable();
    if ids != (1..=n).collect::<Vec<_>>() {
        bail!("feeder {}: node ids must be 1..={n} (node 0 is the slack)", path.display());
    }
    let z = FeederModel::z_base_ohm(f.base.s_base_kva, f.base.v_base_v);
    let feeder = FeederModel {
        num_nodes: n + 1,
        lines: f.lines.iter().map(|l| Line { from: l.from, to: l.to, r_pu: l.r_ohm / z, x_pu: l.x_ohm / z }).collect(),
        v0_sq: f.v0_pu * f.v0_pu,
        v_min_sq: f.v_min_pu * f.v_min_pu,
        v_max_sq: f.v_max_pu * f.v_max_pu,
        s_base_kva: f.base.s_base_kva,
        v_base_v: f.base.v_base_v,
    };
    feeder.validate().with_context(|| format!("feeder {}", path.display()))?;
    let mut nodes = f.nodes;
    nodes.sort_by_key(|nd| nd.id);
    let mut seen: BTreeMap<String, (BatteryParams, PvParams)> = BTreeMap::new();
    let mut units = Vec::with_capacity(n);
    for nd in nodes {
        let battery = BatteryParams {
            capacity_kwh: nd.c_bat_kwh,
            eta_ch: nd.eta_ch,
            eta_dis: nd.eta_dis,
            p_max_kw: nd.p_max_bat_kw.unwrap_or(nd.s_nom_bat_kva),
            s_nom_kva: nd.s_nom_bat_kva,
            soc_min: nd.soc_min,
            soc_max: nd.soc_max,
        };
        let pv = PvParams { s_nom_kva: nd.s_nom_pv_kva, q_slope: nd.pv_q_slope };
        battery.validate().with_context(|| format!("node {}", nd.id))?;
        pv.validate().with_context(|| format!("node {}", nd.id))?;
        if let Some(prev) = seen.get(&nd.archetype) {
            if prev != &(battery.clone(), pv.clone()) {
                bail!("node {}: archetype {} used with different device parameters", nd.id, nd.archetype);
            }
        }
        seen.insert(nd.archetype.clone(), (battery.clone(), pv.clone()));
        units.push(UnitSpec { archetype: nd.archetype, battery, pv, soc0: nd.soc0 });
    }
    Ok((feeder, units))
}

/// Seconds after midnight of the timestamp's own day.
fn parse_clock_s(ts: &str) -> Result<(chrono::NaiveDate, f64)> {
    let naive = match DateTime::parse_from_rfc3339(ts) {
        Ok(t) => t.naive_local(),
        Err(_) => NaiveDateTime::parse_from_str(ts, "%Y-%m-%dT%H:%M:%S")
            .or_else(|_| NaiveDateTime::parse_from_str(ts, "%Y-%m-%d %H:%M:%S"))
            .map_err(|_| anyhow!("bad ISO-8601 timestamp {ts:?}"))?,
    };
    Ok((naive.date(), naive.num_seconds_from_midnight() as f64))
}

/// Time-stamped series. Times are seconds since midnight of the first row's day.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub names: Vec<String>,
    pub t_s: Vec<f64>,
    pub columns: Vec<Vec<f64>>,
}

impl Series {
    pub fn read(path: &Path) -> Result<Series> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
        let headers = r.headers()?.clone();
        if headers.len() < 2 {
            bail!("{}: need a timestamp column and at least one value column", path.display());
        }
        let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
        let mut s = Series { names, t_s: Vec::new(), columns: vec![Vec::new(); headers.len() - 1] };
        let mut day0 = None;
        for (i, rec) in r.records().enumerate() {
            let rec = rec.with_context(|| format!("{} row {}", path.display(), i + 2))?;
            let (day, secs) =
                parse_clock_s(rec.get(0).unwrap_or("")).with_context(|| format!("{} row {}", path.display(), i + 2))?;
            let d0 = *day0.get_or_insert(day);
            let t = secs + (day - d0).num_days() as f64 * 86400.0;
            if s.t_s.last().is_some_and(|&last| t <= last) {
                bail!("{} row {}: timestamps must increase", path.display(), i + 2);
            }
            s.t_s.push(t);
            for (c, col) in s.columns.iter_mut().enumerate() {
                let v = rec.get(c + 1).unwrap_or("").trim();
                col.push(v.parse().map_err(|_| anyhow!("{} row {}: bad number {v:?}", path.display(), i + 2))?);
            }
        }
        if s.t_s.is_empty() {
            bail!("{}: no rows", path.display());
        }
        Ok(s)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| anyhow!("missing column {name}"))
    }

    /// Last value at or before `t` (the first value before the first row).
    pub fn step_hold(&self, col: &[f64], t: f64) -> f64 {
        let i = self.t_s.partition_point(|&x| x <= t);
        col[i.saturating_sub(1)]
    }

    /// Linear interpolation, held flat outside the rows.
    pub fn linear(&self, col: &[f64], t: f64) -> f64 {
        let i = self.t_s.partition_point(|&x| x <= t);
        if i == 0 {
            return col[0];
        }
        if i == self.t_s.len() {
            return col[i - 1];
        }
        let (t0, t1) = (self.t_s[i - 1], self.t_s[i]);
        let w = (t - t0) / (t1 - t0);
        (1.0 - w) * col[i - 1] + w * col[i]
    }
}

/// Synthetic scenario from the config, with the feeder file and CSV
/// overrides applied.
pub fn build_scenario(cfg: &Config) -> Result<Scenario> {
    let preset = if cfg.preset == "weak" { FeederPreset::Weak } else { FeederPreset::Nominal };
    let custom = cfg.feeder.as_deref().map(read_feeder).transpose()?;
    let n_units = custom.as_ref().map_or(cfg.n_units, |(_, u)| u.len());
    let opts = ScenarioOptions {
        seed: cfg.seed,
        n_units,
        start_hour: cfg.start_hour,
        hours: cfg.hours,
        feeder: preset,
        load_scale: cfg.load_scale,
        pv_scale: cfg.pv_scale,
        forecast_sigma: cfg.forecast_sigma,
        n_s: cfg.n_s,
        ..Default::default()
    };
    let mut sc = generate(&opts)?;
    if let Some((feeder, units)) = custom {
        sc.feeder = feeder;
        sc.units = units;
    }
    let tick_t = |t: usize| cfg.start_hour as f64 * 3600.0 + t as f64 * 3600.0 / TICKS_PER_HOUR as f64;
    if let Some(p) = &cfg.irradiance {
        let s = Series::read(p)?;
        let col = s.column(&s.names[0])?;
        sc.pv_per_kva = (0..sc.num_ticks()).map(|t| s.step_hold(col, tick_t(t)).max(0.0)).collect();
    }
    if let Some(p) = &cfg.loads {
        let s = Series::read(p)?;
        for k in 0..sc.units.len() {
            let col = s.column(&(k + 1).to_string()).with_context(|| format!("loads {}", p.display()))?;
            let prof: Vec<f64> = (0..sc.num_ticks()).map(|t| s.step_hold(col, tick_t(t)).max(0.0)).collect();
            sc.load_q_kvar[k] = prof.iter().map(|v| v * LOAD_TAN_PHI).collect();
            sc.load_p_kw[k] = prof;
        }
    }
    if let Some(p) = &cfg.prices {
        let s = Series::read(p)?;
        let (imp, exp) = (s.column("import")?, s.column("export")?);
        // sampled at the middle of each simulated hour
        let mid = |h: usize| (cfg.start_hour + h) as f64 * 3600.0 + 1800.0;
        sc.pi_imp_hourly = (0..24).map(|h| s.linear(imp, mid(h))).collect();
        sc.pi_exp_hourly = (0..24).map(|h| s.linear(exp, mid(h))).collect();
    }
    sc.validate()?;
    Ok(sc)
}
