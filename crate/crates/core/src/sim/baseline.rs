use std::time::Instant;

use super::scenario::TICKS_PER_PERIOD;
use super::{load_flow, Accumulator, RunOutput, Scenario, SimError, Timing, TraceRow, UnitFlows};
use crate::assets::{soc_step, BatteryParams};

/// Self-consumption rule: charge the PV surplus and discharge to cover the
/// deficit, within power and SOC limits.
pub(crate) fn greedy_battery(surplus_kw: f64, soc: f64, dt_h: f64, bat: &BatteryParams) -> (f64, f64) {
    let lim = bat.p_limit();
    if surplus_kw > 0.0 {
        let room = ((bat.soc_max - soc) * bat.capacity_kwh / (bat.eta_ch * dt_h)).max(0.0);
        (surplus_kw.min(lim).min(room), 0.0)
    } else {
        let avail = ((soc - bat.soc_min) * bat.capacity_kwh * bat.eta_dis / dt_h).max(0.0);
        (0.0, (-surplus_kw).min(lim).min(avail))
    }
}

/// Uncontrolled operation: PV at its maximum power point without reactive
/// support, battery on the self-consumption rule, no network awareness.
pub fn run_baseline(sc: &Scenario) -> Result<RunOutput, SimError> {
    sc.validate()?;
    let started = Instant::now();
    let n = sc.units.len();
    let dt = sc.tick_h();
    let mut acc = Accumulator::new("baseline", sc.seed);
    let mut out = RunOutput::default();
    let mut soc: Vec<f64> = sc.units.iter().map(|u| u.soc0).collect();
    let mut step_ms = Vec::with_capacity(sc.num_ticks());
    for tick in 0..sc.num_ticks() {
        let t_step = Instant::now();
        let (pi_imp, pi_exp) = sc.period_prices(tick / TICKS_PER_PERIOD);
        let mut p_inj = vec![0.0; n + 1];
        let mut q_inj = vec![0.0; n + 1];
        let mut flows = Vec::with_capacity(n);
        for (k, u) in sc.units.iter().enumerate() {
            let p_pv = sc.pv_available_kw(k, tick);
            let p_load = sc.load_p_kw[k][tick];
            let (p_ch, p_dis) = greedy_battery(p_pv - p_load, soc[k], dt, &u.battery);
            let f = UnitFlows { p_pv, p_ch, p_dis, p_load, q_load: sc.load_q_kvar[k][tick], ..Default::default() };
            p_inj[k + 1] = f.net_p();
            q_inj[k + 1] = f.net_q();
            flows.push(f);
        }
        step_ms.push(t_step.elapsed().as_secs_f64() * 1e3);
        let (v_pu, loss_kw) = load_flow(&sc.feeder, &p_inj, &q_inj)?;
        acc.add_voltages(&sc.feeder, &v_pu);
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
    }
    out.metrics = acc.finish(sc.num_ticks());
    out.timing = Timing::from_samples(step_ms, 0.0, started.elapsed().as_secs_f64() * 1e3);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_respects_soc_limits() {
        let bat = BatteryParams::default();
        let dt = 10.0 / 3600.0;
        let (ch, dis) = greedy_battery(3.0, 0.5, dt, &bat);
        assert_eq!((ch, dis), (3.0, 0.0));
        let (ch, _) = greedy_battery(3.0, bat.soc_max, dt, &bat);
        assert_eq!(ch, 0.0);
        let (_, dis) = greedy_battery(-9.0, 0.5, dt, &bat);
        assert_eq!(dis, bat.p_limit());
        let near = bat.soc_min + 1e-6;
        let (_, dis) = greedy_battery(-2.0, near, dt, &bat);
        let after = soc_step(near, 0.0, dis, dt, &bat);
        assert!((after - bat.soc_min).abs() < 1e-12);
    }
}
