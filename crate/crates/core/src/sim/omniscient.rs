use std::time::Instant;

use log::debug;

use super::scenario::TICKS_PER_PERIOD;
use super::{load_flow, Accumulator, RunOutput, Scenario, SimError, Timing, TraceRow, UnitFlows};
use crate::assets::{battery_rows, pv_fixed_rows};
use crate::lp::{LpBuilder, LpSession, LpStatus};
use crate::period::PERIOD_S;

#[derive(Clone, Debug)]
pub struct OmniscientOptions {
    /// Tolerance on `P^2 + Q^2 - l v` for the cone cuts.
    pub cone_tol: f64,
    pub max_rounds: usize,
    /// Chords per quadrant of the inverter circles.
    pub n_arc: usize,
}

impl Default for OmniscientOptions {
    fn default() -> Self {
        OmniscientOptions { cone_tol: 1e-5, max_rounds: 300, n_arc: 4 }
    }
}

/// Linear expression `sum a_i x_i + c`.
#[derive(Clone, Debug, Default)]
struct Expr {
    terms: Vec<(usize, f64)>,
    c: f64,
}

impl Expr {
    fn add(&mut self, other: &Expr, s: f64) {
        self.terms.extend(other.terms.iter().map(|&(j, a)| (j, a * s)));
        self.c += other.c * s;
    }

    fn compact(&mut self) {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(j, a) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => out.push((j, a)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.c + self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }

    /// Row `self <= rhs` in solver form.
    fn le(&self, rhs: f64) -> Row {
        (self.terms.clone(), rhs - self.c)
    }
}

type Row = (Vec<(usize, f64)>, f64);

const P_IMP: usize = 0;
const P_EXP: usize = 1;
const P_PV: usize = 2;
const P_CH: usize = 3;
const P_DIS: usize = 4;
const QPV_POS: usize = 5;
const QPV_NEG: usize = 6;
const QB_POS: usize = 7;
const QB_NEG: usize = 8;
const UNIT_VARS: usize = 9;

struct Layout {
    units: usize,
    lines: usize,
}

impl Layout {
    fn stride(&self) -> usize {
        self.units * UNIT_VARS + self.lines
    }

    fn unit(&self, t: usize, k: usize, v: usize) -> usize {
        t * self.stride() + k * UNIT_VARS + v
    }

    fn l(&self, t: usize, k: usize) -> usize {
        t * self.stride() + self.units * UNIT_VARS + k
    }
}

/// Perfect-foresight benchmark: one LP over the whole day at market-period
/// resolution with the full network model (relaxed branch flow, tightened
/// by cone cuts) and every unit's devices.
pub fn run_omniscient(sc: &Scenario, opts: &OmniscientOptions) -> Result<RunOutput, SimError> {
    sc.validate()?;
    let started = Instant::now();
    let feeder = &sc.feeder;
    let n = sc.units.len();
    let nl = feeder.lines.len();
    let np = sc.num_periods();
    let sb = feeder.s_base_kva;
    let dt = PERIOD_S / 3600.0;
    let lay = Layout { units: n, lines: nl };
    let inf = f64::INFINITY;
    let tariff = &sc.tariff;

    let mut mean_pv = vec![vec![0.0; np]; n];
    let mut mean_load = vec![vec![0.0; np]; n];
    let mut mean_qload = vec![vec![0.0; np]; n];
    for k in 0..n {
        for t in 0..np {
            let (a, b) = (t * TICKS_PER_PERIOD, ((t + 1) * TICKS_PER_PERIOD).min(sc.num_ticks()));
            let (pv, load) = sc.mean_pv_load(k, a, b);
            mean_pv[k][t] = pv;
            mean_load[k][t] = load;
            mean_qload[k][t] = sc.load_q_kvar[k][a..b].iter().sum::<f64>() / (b - a) as f64;
        }
    }

    let mut b = LpBuilder::new();
    for t in 0..np {
        let (pi_imp, pi_exp) = sc.period_prices(t);
        for k in 0..n {
            let u = &sc.units[k];
            let plim = u.battery.p_limit();
            let spv = u.pv.s_nom_kva;
            let sbat = u.battery.s_nom_kva;
            b.var(pi_imp * dt, 0.0, inf);
            b.var(-pi_exp * dt, 0.0, inf);
            b.var(0.0, 0.0, mean_pv[k][t].min(spv));
            b.var(tariff.pi_bat * dt, 0.0, plim);
            b.var(tariff.pi_bat * dt, 0.0, plim);
            b.var(tariff.pi_q * dt, 0.0, spv);
            b.var(tariff.pi_q * dt, 0.0, spv);
            b.var(tariff.pi_q * dt, 0.0, sbat);
            b.var(tariff.pi_q * dt, 0.0, sbat);
        }
        for line in &feeder.lines {
            b.var(tariff.pi_loss * line.r_pu * sb * dt, 0.0, inf);
        }
        for k in 0..n {
            let v = |i| lay.unit(t, k, i);
            b.eq(
                &[(v(P_EXP), 1.0), (v(P_IMP), -1.0), (v(P_PV), -1.0), (v(P_DIS), -1.0), (v(P_CH), 1.0)],
                -mean_load[k][t],
            );
        }
    }

    // network expressions per period, in p.u.
    let order = feeder.order();
    let feeding = feeder.feeding_line();
    let mut p_flow = vec![vec![Expr::default(); nl]; np];
    let mut q_flow = vec![vec![Expr::default(); nl]; np];
    let mut volt = vec![vec![Expr::default(); feeder.num_nodes]; np];
    for t in 0..np {
        for &j in order.iter().rev() {
            let Some(k) = feeding[j] else { continue };
            let line = &feeder.lines[k];
            let mut p = Expr::default();
            let mut q = Expr::default();
            if j >= 1 && j <= n {
                let v = |i| lay.unit(t, j - 1, i);
                p.terms.extend([(v(P_IMP), 1.0 / sb), (v(P_EXP), -1.0 / sb)]);
                q.terms.extend([
                    (v(QPV_POS), -1.0 / sb),
                    (v(QPV_NEG), 1.0 / sb),
                    (v(QB_POS), -1.0 / sb),
                    (v(QB_NEG), 1.0 / sb),
                ]);
                q.c = mean_qload[j - 1][t] / sb;
            }
            p.terms.push((lay.l(t, k), line.r_pu));
            q.terms.push((lay.l(t, k), line.x_pu));
            for c in feeder.child_lines(j) {
                let (pc, qc) = (p_flow[t][c].clone(), q_flow[t][c].clone());
                p.add(&pc, 1.0);
                q.add(&qc, 1.0);
            }
            p.compact();
            q.compact();
            p_flow[t][k] = p;
            q_flow[t][k] = q;
        }
        volt[t][0].c = feeder.v0_sq;
        for &j in order.iter().skip(1) {
            let k = feeding[j].unwrap();
            let line = &feeder.lines[k];
            let z2 = line.r_pu * line.r_pu + line.x_pu * line.x_pu;
            let mut v = volt[t][line.from].clone();
            v.add(&p_flow[t][k], -2.0 * line.r_pu);
            v.add(&q_flow[t][k], -2.0 * line.x_pu);
            v.terms.push((lay.l(t, k), z2));
            v.compact();
            volt[t][j] = v;
        }
    }

    let mut candidates: Vec<Row> = Vec::new();
    for k in 0..n {
        let u = &sc.units[k];
        let pv_rows = pv_fixed_rows(&u.pv, opts.n_arc);
        let bat_rows = battery_rows(&u.battery, opts.n_arc);
        let kc = dt / u.battery.capacity_kwh;
        let mut soc = Expr { terms: Vec::new(), c: u.soc0 };
        for t in 0..np {
            let v = |i| lay.unit(t, k, i);
            for (a, r) in &pv_rows {
                candidates.push((vec![(v(P_PV), a[0]), (v(QPV_POS), a[1]), (v(QPV_NEG), -a[1])], *r));
            }
            for (a, r) in &bat_rows {
                candidates.push((vec![(v(P_DIS), a[0]), (v(P_CH), -a[0]), (v(QB_POS), a[1]), (v(QB_NEG), -a[1])], *r));
            }
            soc.terms.extend([(v(P_CH), u.battery.eta_ch * kc), (v(P_DIS), -kc / u.battery.eta_dis)]);
            candidates.push(soc.le(u.battery.soc_max));
            let mut neg = Expr::default();
            neg.add(&soc, -1.0);
            candidates.push(neg.le(-u.battery.soc_min));
        }
    }
    for t in 0..np {
        for j in 1..feeder.num_nodes {
            candidates.push(volt[t][j].le(feeder.v_max_sq));
            let mut neg = Expr::default();
            neg.add(&volt[t][j], -1.0);
            candidates.push(neg.le(-feeder.v_min_sq));
        }
    }

    let mut added = vec![false; candidates.len()];
    let mut session = LpSession::new(b.build())?;
    let mut rounds = 0;
    let x = loop {
        let sol = session.solve()?;
        match sol.status {
            LpStatus::Optimal => {}
            _ => return Err(SimError::Infeasible),
        }
        let x = sol.x;
        let mut rows: Vec<Row> = Vec::new();
        for (i, (terms, rhs)) in candidates.iter().enumerate() {
            if added[i] {
                continue;
            }
            let lhs: f64 = terms.iter().map(|&(j, a)| a * x[j]).sum();
            if lhs > rhs + 1e-9 * (1.0 + rhs.abs()) {
                added[i] = true;
                rows.push((terms.clone(), *rhs));
            }
        }
        let mut cuts = 0;
        for t in 0..np {
            for (k, line) in feeder.lines.iter().enumerate() {
                let (pe, qe, ve) = (&p_flow[t][k], &q_flow[t][k], &volt[t][line.from]);
                let (p, q, v, l) = (pe.eval(&x), qe.eval(&x), ve.eval(&x), x[lay.l(t, k)]);
                if p * p + q * q - l * v > opts.cone_tol && v > 0.0 {
                    let s2 = (p * p + q * q) / (v * v);
                    let mut cut = Expr::default();
                    cut.add(pe, 2.0 * p / v);
                    cut.add(qe, 2.0 * q / v);
                    cut.add(ve, -s2);
                    cut.terms.push((lay.l(t, k), -1.0));
                    cut.compact();
                    rows.push(cut.le(0.0));
                    cuts += 1;
                }
            }
        }
        if rows.is_empty() {
            break x;
        }
        if cuts > 0 {
            rounds += 1;
            if rounds > opts.max_rounds {
                debug!("omniscient cone cuts stopped after {rounds} rounds");
                break x;
            }
        }
        session.add_le_rows(&rows);
    };

    let mut acc = Accumulator::new("omniscient", sc.seed);
    let mut out = RunOutput::default();
    let mut soc: Vec<f64> = sc.units.iter().map(|u| u.soc0).collect();
    for t in 0..np {
        let (pi_imp, pi_exp) = sc.period_prices(t);
        let mut p_inj = vec![0.0; n + 1];
        let mut q_inj = vec![0.0; n + 1];
        let mut flows = Vec::with_capacity(n);
        for k in 0..n {
            let v = |i| x[lay.unit(t, k, i)];
            let f = UnitFlows {
                p_pv: v(P_PV),
                q_pv: v(QPV_POS) - v(QPV_NEG),
                p_ch: v(P_CH),
                p_dis: v(P_DIS),
                q_bat: v(QB_POS) - v(QB_NEG),
                p_load: mean_load[k][t],
                q_load: mean_qload[k][t],
            };
            p_inj[k + 1] = f.net_p();
            q_inj[k + 1] = f.net_q();
            flows.push(f);
        }
        let (v_pu, loss_kw) = load_flow(feeder, &p_inj, &q_inj)?;
        acc.add_voltages(feeder, &v_pu);
        acc.m.loss_kwh += loss_kw * dt;
        let gap = feeder
            .lines
            .iter()
            .enumerate()
            .map(|(k, line)| {
                let (p, q) = (p_flow[t][k].eval(&x), q_flow[t][k].eval(&x));
                x[lay.l(t, k)] * volt[t][line.from].eval(&x) - p * p - q * q
            })
            .fold(0.0, f64::max);
        acc.add_gap(gap);
        for (k, f) in flows.iter().enumerate() {
            let cost = acc.add_unit(f, pi_imp, pi_exp, tariff, dt);
            let bat = &sc.units[k].battery;
            soc[k] += (bat.eta_ch * f.p_ch - f.p_dis / bat.eta_dis) * dt / bat.capacity_kwh;
            out.trace.push(TraceRow {
                step: t,
                node: k + 1,
                p_kw: p_inj[k + 1],
                q_kvar: q_inj[k + 1],
                soc: soc[k],
                v_pu: v_pu[k + 1],
                cost_eur: cost,
            });
        }
    }
    out.metrics = acc.finish(np);
    let total = started.elapsed().as_secs_f64() * 1e3;
    out.timing = Timing { total_ms: total, planning_ms: total, ..Default::default() };
    Ok(out)
}
