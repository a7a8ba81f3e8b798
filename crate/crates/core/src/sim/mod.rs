//! Closed-loop day simulation of the control architecture on a radial
//! feeder, with the omniscient benchmark and an uncontrolled baseline.

mod baseline;
mod closed_loop;
mod omniscient;
pub mod scenario;

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baseline::run_baseline;
pub use closed_loop::{period_value_functions, run_central, value_function_schedule, CentralRunOptions, StoreSet};
pub use omniscient::{run_omniscient, OmniscientOptions};
pub use scenario::{
    chain_feeder, generate, FeederPreset, Scenario, ScenarioOptions, UnitSpec, TICKS_PER_HOUR, TICKS_PER_PERIOD,
};

use crate::assets::{AssetError, Tariff};
use crate::central::{CentralError, FeederModel};
use crate::lp::LpError;
use crate::period::PeriodError;
use crate::planning::{PlanningError, ValueFunctionPWA};
use crate::realtime::{FlexChart2D, RtError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("no offline store for archetype {0}")]
    MissingStore(String),
    #[error("store for archetype {0} was built for different devices")]
    StoreMismatch(String),
    #[error("omniscient problem infeasible")]
    Infeasible,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Planning(#[from] PlanningError),
    #[error(transparent)]
    Period(#[from] PeriodError),
    #[error(transparent)]
    Realtime(#[from] RtError),
    #[error(transparent)]
    Central(#[from] CentralError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Voltage excursions below this size (p.u. magnitude) are not counted.
pub const VOLTAGE_TOL_PU: f64 = 1e-5;

/// Day totals of one run. Energies are integrated over the held setpoints.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mode: String,
    pub seed: u64,
    pub steps: usize,
    pub total_cost_eur: f64,
    pub net_cost_eur: f64,
    pub reactive_cost_eur: f64,
    pub battery_cost_eur: f64,
    pub e_pv_kwh: f64,
    pub e_ch_kwh: f64,
    pub e_dis_kwh: f64,
    pub q_prod_kvarh: f64,
    pub e_import_kwh: f64,
    pub e_export_kwh: f64,
    pub loss_kwh: f64,
    pub voltage_violations: usize,
    pub worst_excursion_pu: f64,
    pub v_min_pu: f64,
    pub v_max_pu: f64,
    /// Charts built by the direct solve because the store did not cover them.
    pub fallback_charts: usize,
    /// Ticks that kept the previous setpoints because cone cuts stalled.
    pub held_ticks: usize,
    /// Ticks where the central problem was infeasible.
    pub infeasible_ticks: usize,
    /// Fraction of central solves with every edge gap below 1e-5 p.u.
    pub tight_fraction: f64,
    pub max_gap_pu: f64,
    pub max_mismatch_pu: f64,
    /// Largest power-balance residual of the delivered setpoints, kW.
    pub max_balance_residual_kw: f64,
}

/// One row per node and step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub node: usize,
    pub p_kw: f64,
    pub q_kvar: f64,
    pub soc: f64,
    pub v_pu: f64,
    pub cost_eur: f64,
}

/// Wall-clock timings, kept apart from the deterministic outputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub steps: usize,
    pub mean_step_ms: f64,
    pub max_step_ms: f64,
    pub p99_step_ms: f64,
    pub planning_ms: f64,
    pub total_ms: f64,
}

impl Timing {
    pub(crate) fn from_samples(mut step_ms: Vec<f64>, planning_ms: f64, total_ms: f64) -> Timing {
        let steps = step_ms.len();
        if steps == 0 {
            return Timing { planning_ms, total_ms, ..Default::default() };
        }
        step_ms.sort_by(f64::total_cmp);
        let mean = step_ms.iter().sum::<f64>() / steps as f64;
        let p99 = step_ms[((steps as f64 * 0.99).ceil() as usize).clamp(1, steps) - 1];
        Timing { steps, mean_step_ms: mean, max_step_ms: step_ms[steps - 1], p99_step_ms: p99, planning_ms, total_ms }
    }
}

/// Everything a run produces.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub trace: Vec<TraceRow>,
    pub timing: Timing,
    /// Charts per step when requested (central mode only).
    pub charts: Vec<(usize, Vec<FlexChart2D>)>,
    /// Value functions per period when requested, unit order.
    pub value_functions: Vec<(usize, Vec<ValueFunctionPWA>)>,
}

/// One row per value-function segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueFunctionRow {
    pub period: usize,
    pub node: usize,
    pub segment: usize,
    pub soc_from: f64,
    pub soc_to: f64,
    pub slope_eur: f64,
    pub value_from_eur: f64,
}

/// Flatten value functions into segment rows.
pub fn value_function_rows(vfs: &[(usize, Vec<ValueFunctionPWA>)]) -> Vec<ValueFunctionRow> {
    let mut rows = Vec::new();
    for (period, units) in vfs {
        for (k, vf) in units.iter().enumerate() {
            let values = vf.breakpoint_values();
            for (s, slope) in vf.slopes.iter().enumerate() {
                rows.push(ValueFunctionRow {
                    period: *period,
                    node: k + 1,
                    segment: s,
                    soc_from: vf.breakpoints[s],
                    soc_to: vf.breakpoints[s + 1],
                    slope_eur: *slope,
                    value_from_eur: values[s],
                });
            }
        }
    }
    rows
}

/// Realized device powers of one unit over one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct UnitFlows {
    pub p_pv: f64,
    pub q_pv: f64,
    pub p_ch: f64,
    pub p_dis: f64,
    pub q_bat: f64,
    pub p_load: f64,
    pub q_load: f64,
}

impl UnitFlows {
    pub fn net_p(&self) -> f64 {
        self.p_pv + self.p_dis - self.p_ch - self.p_load
    }

    pub fn net_q(&self) -> f64 {
        self.q_pv + self.q_bat - self.q_load
    }
}

/// Running totals of a run.
pub(crate) struct Accumulator {
    pub m: RunMetrics,
    gap_checks: usize,
    tight: usize,
}

impl Accumulator {
    pub fn new(mode: &str, seed: u64) -> Self {
        let m = RunMetrics {
            mode: mode.to_string(),
            seed,
            v_min_pu: f64::INFINITY,
            v_max_pu: f64::NEG_INFINITY,
            ..Default::default()
        };
        Accumulator { m, gap_checks: 0, tight: 0 }
    }

    /// Add the realized operation of one unit and return its cost.
    pub fn add_unit(&mut self, f: &UnitFlows, pi_imp: f64, pi_exp: f64, tariff: &Tariff, dt_h: f64) -> f64 {
        let net = f.net_p();
        let (imp, exp) = if net < 0.0 { (-net, 0.0) } else { (0.0, net) };
        let c_net = (pi_imp * imp - pi_exp * exp) * dt_h;
        let c_q = tariff.pi_q * (f.q_pv.abs() + f.q_bat.abs()) * dt_h;
        let c_bat = tariff.pi_bat * (f.p_ch + f.p_dis) * dt_h;
        let m = &mut self.m;
        m.net_cost_eur += c_net;
        m.reactive_cost_eur += c_q;
        m.battery_cost_eur += c_bat;
        m.total_cost_eur += c_net + c_q + c_bat;
        m.e_pv_kwh += f.p_pv * dt_h;
        m.e_ch_kwh += f.p_ch * dt_h;
        m.e_dis_kwh += f.p_dis * dt_h;
        m.q_prod_kvarh += (f.q_pv.abs() + f.q_bat.abs()) * dt_h;
        m.e_import_kwh += imp * dt_h;
        m.e_export_kwh += exp * dt_h;
        c_net + c_q + c_bat
    }

    pub fn add_voltages(&mut self, feeder: &FeederModel, v_pu: &[f64]) {
        let (lo, hi) = (feeder.v_min_sq.sqrt(), feeder.v_max_sq.sqrt());
        for &v in v_pu.iter().skip(1) {
            self.m.v_min_pu = self.m.v_min_pu.min(v);
            self.m.v_max_pu = self.m.v_max_pu.max(v);
            let exc = (v - hi).max(lo - v);
            if exc > VOLTAGE_TOL_PU {
                self.m.voltage_violations += 1;
            }
            self.m.worst_excursion_pu = self.m.worst_excursion_pu.max(exc.max(0.0));
        }
    }

    pub fn add_gap(&mut self, max_gap: f64) {
        self.gap_checks += 1;
        if max_gap <= 1e-5 {
            self.tight += 1;
        }
        self.m.max_gap_pu = self.m.max_gap_pu.max(max_gap);
    }

    pub fn finish(mut self, steps: usize) -> RunMetrics {
        self.m.steps = steps;
        self.m.tight_fraction = if self.gap_checks == 0 { 1.0 } else { self.tight as f64 / self.gap_checks as f64 };
        if !self.m.v_min_pu.is_finite() {
            self.m.v_min_pu = 0.0;
            self.m.v_max_pu = 0.0;
        }
        self.m
    }
}

/// Load flow of realized injections (kW, kvar per node, entry 0 unused):
/// voltage magnitudes and total line losses in kW.
pub(crate) fn load_flow(feeder: &FeederModel, p_kw: &[f64], q_kvar: &[f64]) -> Result<(Vec<f64>, f64), SimError> {
    let sb = feeder.s_base_kva;
    let p: Vec<f64> = p_kw.iter().map(|v| v / sb).collect();
    let q: Vec<f64> = q_kvar.iter().map(|v| v / sb).collect();
    let volt = crate::central::backward_forward_sweep(feeder, &p, &q)?;
    let mut loss = 0.0;
    for line in &feeder.lines {
        let z = Complex64::new(line.r_pu, line.x_pu);
        let i = (volt[line.from] - volt[line.to]) / z;
        loss += line.r_pu * i.norm_sqr() * sb;
    }
    Ok((volt.iter().map(|v| v.norm()).collect(), loss))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> SimError {
    SimError::Io(std::io::Error::other(e.to_string()))
}

impl RunOutput {
    /// Write `metrics.csv`, `trace.csv` and `timing.csv` into `dir`, plus
    /// one chart file per step under `chart_dump/` when charts were kept and
    /// `value_function.csv` when value functions were kept.
    pub fn write(&self, dir: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(dir)?;
        write_csv(&dir.join("metrics.csv"), std::slice::from_ref(&self.metrics))?;
        write_csv(&dir.join("trace.csv"), &self.trace)?;
        write_csv(&dir.join("timing.csv"), std::slice::from_ref(&self.timing))?;
        if !self.value_functions.is_empty() {
            write_csv(&dir.join("value_function.csv"), &value_function_rows(&self.value_functions))?;
        }
        if !self.charts.is_empty() {
            let cd = dir.join("chart_dump");
            std::fs::create_dir_all(&cd)?;
            for (step, charts) in &self.charts {
                let msgs: Vec<_> =
                    charts.iter().map(|c| crate::realtime::ChartMessage::from_chart(c, *step as u64)).collect();
                let mut f = std::fs::File::create(cd.join(format!("step_{step:05}.json")))?;
                f.write_all(
                    serde_json::to_string(&msgs).map_err(|e| std::io::Error::other(e.to_string()))?.as_bytes(),
                )?;
            }
        }
        Ok(())
    }
}

/// Read a metrics file written by [`RunOutput::write`].
pub fn read_metrics(path: &Path) -> Result<RunMetrics, SimError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let row = r.deserialize().next().ok_or_else(|| SimError::InvalidScenario("empty metrics file".into()))?;
    row.map_err(csv_err)
}
