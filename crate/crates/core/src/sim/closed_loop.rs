use std::collections::BTreeMap;
use std::time::Instant;

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::scenario::TICKS_PER_PERIOD;
use super::{load_flow, Accumulator, RunOutput, Scenario, SimError, Timing, TraceRow, UnitFlows};
use crate::assets::soc_step;
use crate::central::{relaxation_gap, solve_central, voltage_mismatch, CentralError, CentralOptions};
use crate::period::{PeriodProblem, PeriodRegionStore, TICK_S};
use crate::planning::{build_planning_lp, solve_value_function, ValueFunctionPWA};
use crate::realtime::{disaggregate, fallback_chart, ChartProjector, ChartSource, FlexChart2D, Measurements, RtError};

/// Offline stores by archetype name.
#[derive(Clone, Debug, Default)]
pub struct StoreSet {
    stores: BTreeMap<String, PeriodRegionStore>,
}

impl StoreSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, archetype: &str, store: PeriodRegionStore) {
        self.stores.insert(archetype.to_string(), store);
    }

    pub fn get(&self, archetype: &str) -> Option<&PeriodRegionStore> {
        self.stores.get(archetype)
    }

    pub fn names(&self) -> Vec<String> {
        self.stores.keys().cloned().collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct CentralRunOptions {
    /// Keep every step's charts in the output.
    pub keep_charts: bool,
    /// Keep the value functions of every period in the output.
    pub keep_value_functions: bool,
}

/// Value functions of all units for the end of `period`, from forecasts
/// drawn with `rng`. An empty remaining horizon gives flat functions.
pub fn period_value_functions(
    sc: &Scenario,
    period: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ValueFunctionPWA>, SimError> {
    let t_end = (period + 1) * TICKS_PER_PERIOD;
    let mut vfs = Vec::with_capacity(sc.units.len());
    for (k, u) in sc.units.iter().enumerate() {
        let h = sc.planning_horizon(k, t_end, rng);
        let bat = &u.battery;
        let vf = if h.is_empty() {
            ValueFunctionPWA::flat(bat.soc_min, bat.soc_max, sc.n_s)
        } else {
            solve_value_function(&build_planning_lp(&h, bat)?, bat, sc.n_s)?
        };
        vfs.push(vf);
    }
    Ok(vfs)
}

/// Value functions for every period of the day, drawn the same way the
/// central run draws them.
pub fn value_function_schedule(sc: &Scenario) -> Result<Vec<Vec<ValueFunctionPWA>>, SimError> {
    let mut rng = planner_rng(sc);
    (0..sc.num_periods()).map(|p| period_value_functions(sc, p, &mut rng)).collect()
}

fn planner_rng(sc: &Scenario) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sc.seed ^ 0x91a2)
}

struct UnitCtx<'a> {
    store: &'a PeriodRegionStore,
    problem: PeriodProblem,
    projector: ChartProjector<'a>,
}

/// Closed-loop day: the planner refreshes value functions every market
/// period, and every tick each unit projects its chart, the central
/// controller picks nodal setpoints and the units disaggregate them.
pub fn run_central(sc: &Scenario, stores: &StoreSet, opts: &CentralRunOptions) -> Result<RunOutput, SimError> {
    sc.validate()?;
    let started = Instant::now();
    let mut units = Vec::new();
    for u in &sc.units {
        let store = stores.get(&u.archetype).ok_or_else(|| SimError::MissingStore(u.archetype.clone()))?;
        let cfg = &store.config;
        let tariff_differs = cfg.tariff.pi_bat != sc.tariff.pi_bat || cfg.tariff.pi_q != sc.tariff.pi_q;
        if cfg.battery != u.battery || cfg.pv != u.pv || cfg.n_s != sc.n_s || tariff_differs {
            return Err(SimError::StoreMismatch(u.archetype.clone()));
        }
        units.push(UnitCtx { store, problem: store.problem()?, projector: ChartProjector::new(store) });
    }
    let n_units = units.len();
    let feeder = &sc.feeder;
    let dt = TICK_S / 3600.0;
    let copts = CentralOptions { pi_loss: sc.tariff.pi_loss, dt_h: dt, ..Default::default() };
    let mut acc = Accumulator::new("central", sc.seed);
    let mut out = RunOutput::default();
    let mut soc: Vec<f64> = sc.units.iter().map(|u| u.soc0).collect();
    let mut prev: Option<Vec<(f64, f64)>> = None;
    let mut rng = planner_rng(sc);
    let mut step_ms = Vec::with_capacity(sc.num_ticks());
    let mut planning_ms = 0.0;

    for period in 0..sc.num_periods() {
        let t_start = period * TICKS_PER_PERIOD;
        let t_end = t_start + TICKS_PER_PERIOD;
        let (pi_imp, pi_exp) = sc.period_prices(period);
        let t_plan = Instant::now();
        let vfs = period_value_functions(sc, period, &mut rng)?;
        planning_ms += t_plan.elapsed().as_secs_f64() * 1e3;

        for i in 0..TICKS_PER_PERIOD {
            let tick = t_start + i;
            let t_step = Instant::now();
            let meas: Vec<Measurements> = (0..n_units)
                .map(|k| {
                    let bat = &sc.units[k].battery;
                    let e_pv: f64 = (tick + 1..t_end).map(|t| sc.pv_available_kw(k, t)).sum::<f64>() * dt;
                    let e_load: f64 = sc.load_p_kw[k][tick + 1..t_end].iter().sum::<f64>() * dt;
                    Measurements {
                        soc: soc[k].clamp(bat.soc_min, bat.soc_max),
                        p_load_kw: sc.load_p_kw[k][tick],
                        q_load_kvar: sc.load_q_kvar[k][tick],
                        p_max_pv_kw: sc.pv_available_kw(k, tick),
                        e_pv_2_kwh: e_pv,
                        e_load_2_kwh: e_load,
                        pi_imp,
                        pi_exp,
                        dtau_r_s: (TICKS_PER_PERIOD - i - 1) as f64 * TICK_S,
                        value_function: vfs[k].clone(),
                    }
                })
                .collect();
            let projected: Vec<Result<(FlexChart2D, bool), RtError>> = units
                .par_iter_mut()
                .zip(meas.par_iter())
                .enumerate()
                .map(|(k, (u, m))| match u.projector.project(k + 1, m) {
                    Ok(c) => Ok((c, false)),
                    Err(RtError::NotCovered) => {
                        debug!("tick {tick} node {}: store does not cover, direct chart", k + 1);
                        fallback_chart(&u.problem, &u.store.envelope, k + 1, m).map(|c| (c, true))
                    }
                    Err(e) => Err(e),
                })
                .collect();
            let mut charts = vec![FlexChart2D::point(0, 0.0, 0.0, 0.0)];
            for r in projected {
                let (c, fell_back) = r?;
                acc.m.fallback_charts += usize::from(fell_back);
                charts.push(c);
            }

            let setpoints: Vec<(f64, f64)> = match solve_central(feeder, &charts, &copts) {
                Ok(sol) => {
                    let gap = relaxation_gap(feeder, &sol).into_iter().fold(0.0, f64::max);
                    acc.add_gap(gap);
                    acc.m.max_mismatch_pu = acc.m.max_mismatch_pu.max(voltage_mismatch(feeder, &sol)?);
                    let fresh: Vec<(f64, f64)> =
                        (1..=n_units).map(|j| sol.injection_kw(j, feeder.s_base_kva)).collect();
                    let held = prev.as_ref().filter(|p| {
                        !sol.gap_closed && p.iter().enumerate().all(|(k, &(a, b))| charts[k + 1].contains(a, b, 1e-7))
                    });
                    match held {
                        Some(p) => {
                            acc.m.held_ticks += 1;
                            warn!("tick {tick}: cone cuts did not converge, holding setpoints");
                            p.clone()
                        }
                        None => fresh,
                    }
                }
                Err(CentralError::Infeasible { node }) => {
                    acc.m.infeasible_ticks += 1;
                    warn!("tick {tick}: voltage limits unreachable (node {node}), local optima used");
                    charts[1..].iter().map(|c| c.min_cost().map(|(_, v)| (v[0], v[1])).unwrap_or((0.0, 0.0))).collect()
                }
                Err(e) => return Err(e.into()),
            };

            let mut p_inj = vec![0.0; n_units + 1];
            let mut q_inj = vec![0.0; n_units + 1];
            let mut flows = Vec::with_capacity(n_units);
            for (k, u) in units.iter().enumerate() {
                let chart = &charts[k + 1];
                let store = (chart.source == ChartSource::Store).then_some(u.store);
                let sp = disaggregate(&u.problem, store, &meas[k], chart, setpoints[k])?;
                let f = UnitFlows {
                    p_pv: sp.p_pv,
                    q_pv: sp.q_pv,
                    p_ch: sp.p_ch,
                    p_dis: sp.p_dis,
                    q_bat: sp.q_bat,
                    p_load: meas[k].p_load_kw,
                    q_load: meas[k].q_load_kvar,
                };
                let resid = (f.net_p() - setpoints[k].0).abs().max((f.net_q() - setpoints[k].1).abs());
                acc.m.max_balance_residual_kw = acc.m.max_balance_residual_kw.max(resid);
                p_inj[k + 1] = f.net_p();
                q_inj[k + 1] = f.net_q();
                flows.push(f);
            }
            step_ms.push(t_step.elapsed().as_secs_f64() * 1e3);

            let (v_pu, loss_kw) = load_flow(feeder, &p_inj, &q_inj)?;
            acc.add_voltages(feeder, &v_pu);
            acc.m.loss_kwh += loss_kw * dt;
            for (k, f) in flows.iter().enumerate() {
                let cost = acc.add_unit(f, pi_imp, pi_exp, &sc.tariff, dt);
                soc[k] = soc_step(soc[k], f.p_ch, f.p_dis, dt, &sc.units[k].battery);
                out.trace.push(TraceRow {
                    step: tick,
                    node: k + 1,
                    p_kw: p_inj[k + 1],
                    q_kvar: q_inj[k + 1],
                    soc: soc[k],
                    v_pu: v_pu[k + 1],
                    cost_eur: cost,
                });
            }
            if opts.keep_charts {
                out.charts.push((tick, charts[1..].to_vec()));
            }
            prev = Some(setpoints);
        }
        if opts.keep_value_functions {
            out.value_functions.push((period, vfs));
        }
    }
    out.metrics = acc.finish(sc.num_ticks());
    out.timing = Timing::from_samples(step_ms, planning_ms, started.elapsed().as_secs_f64() * 1e3);
    Ok(out)
}
