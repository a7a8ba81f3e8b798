//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
//!
//! The default offline store (about 10k regions) is built once and cached
//! under the cargo target tmp dir.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use gridflex::assets::{battery_polytope, pv_polytope, soc_step};
use gridflex::lp::{solve_lp, LpStatus};
use gridflex::period::{
    build_period_problem, solve_offline, Envelope, OfflineOptions, ParamLayout, PeriodConfig, PeriodProblem,
    PeriodRegionStore, REMAINDER_MAX_S, TICK_S,
};
use gridflex::planning::{build_planning_lp, exact_value_function, planning_cost, ValueFunctionPWA};
use gridflex::realtime::{disaggregate, fallback_chart, ChartProjector, FlexChart2D, Measurements};
use gridflex::sim::{
    generate, run_baseline, run_central, run_omniscient, CentralRunOptions, OmniscientOptions, RunOutput,
    ScenarioOptions, StoreSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and thresholds of the criteria.
const C1_REL_TOL: f64 = 1e-6;
const C1_SAMPLES: usize = 1000;
const C1_MAX_NOT_COVERED: f64 = 0.05;
const C1_BUDGET_S: f64 = 60.0;
const C2_DAYS: u64 = 3;
const C2_SWEEP: usize = 200;
const C2_EXACT_TOL: f64 = 1e-6;
const C2_SIMPLE_TOL: f64 = 1e-4;
const C2_BUDGET_S: f64 = 30.0;
const C3_SNAPSHOTS: usize = 50;
const C3_POINTS: usize = 500;
const C3_COST_TOL: f64 = 1e-6;
const C3_BUDGET_S: f64 = 120.0;
const C4_FEAS_TOL: f64 = 1e-7;
const C4_COST_TOL: f64 = 1e-6;
const C5_GAP_PU: f64 = 1e-5;
const C5_TIGHT_SHARE: f64 = 0.99;
const C5_MISMATCH_PU: f64 = 0.002;
const C6_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const C6_MAX_GAP: f64 = 0.05;
const C8_PV_SHARE: f64 = 0.99;
const C9_BUDGET_MS: f64 = 1000.0;

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(v: &Verdict) {
    println!("criterion {:>2} [{}] {}: {}", v.id, if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn default_config() -> PeriodConfig {
    PeriodConfig::default()
}

fn cache_path() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join("default_store.json")
}

/// Cached default store; rebuilt when missing or built for another configuration.
fn default_store() -> (PeriodRegionStore, f64) {
    let cfg = default_config();
    let env = Envelope::default_for(&cfg);
    let path = cache_path();
    if let Ok(s) = PeriodRegionStore::load(&path) {
        if s.config == cfg && s.envelope == env {
            return (s, 0.0);
        }
    }
    let t = Instant::now();
    let problem = build_period_problem(&cfg).expect("period problem");
    let store = solve_offline(&problem, &env, &OfflineOptions::default()).expect("offline solve");
    let secs = t.elapsed().as_secs_f64();
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    store.save(&path).expect("cache store");
    (store, secs)
}

/// Uniform point of the envelope respecting its ordering rows.
fn sample_envelope(env: &Envelope, n_s: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let theta = env.theta(n_s);
    let pl = ParamLayout { n_s };
    loop {
        let mut t: Vec<f64> = (0..env.lower.len()).map(|k| rng.random_range(env.lower[k]..=env.upper[k])).collect();
        let mut th: Vec<f64> = (0..n_s).map(|n| t[pl.theta(n)]).collect();
        th.sort_by(f64::total_cmp);
        let mut bp: Vec<f64> = (0..=n_s).map(|n| t[pl.breakpoint(n)]).collect();
        bp.sort_by(f64::total_cmp);
        for n in 0..n_s {
            t[pl.theta(n)] = th[n];
        }
        for n in 0..=n_s {
            t[pl.breakpoint(n)] = bp[n];
        }
        if theta.contains(&t, 0.0) {
            return t;
        }
    }
}

fn random_measurements(rng: &mut ChaCha8Rng, cfg: &PeriodConfig) -> Measurements {
    let bat = &cfg.battery;
    let n_s = cfg.n_s;
    let mut slopes: Vec<f64> = (0..n_s).map(|_| rng.random_range(-4.0..0.0)).collect();
    slopes.sort_by(f64::total_cmp);
    let mut inner: Vec<f64> = (0..n_s - 1).map(|_| rng.random_range(bat.soc_min..bat.soc_max)).collect();
    inner.sort_by(f64::total_cmp);
    let mut breakpoints = vec![bat.soc_min];
    breakpoints.extend(inner);
    breakpoints.push(bat.soc_max);
    let dtau_r_s = rng.random_range(0.0..REMAINDER_MAX_S);
    let pi_imp = rng.random_range(0.16..0.44);
    Measurements {
        soc: rng.random_range(bat.soc_min..bat.soc_max),
        p_load_kw: rng.random_range(0.0..4.0),
        q_load_kvar: rng.random_range(-1.0..1.0),
        p_max_pv_kw: rng.random_range(0.0..cfg.pv.s_nom_kva),
        e_pv_2_kwh: rng.random_range(0.0..cfg.pv.s_nom_kva) * dtau_r_s / 3600.0,
        e_load_2_kwh: rng.random_range(0.0..4.0) * dtau_r_s / 3600.0,
        pi_imp,
        pi_exp: 0.4 * pi_imp,
        dtau_r_s,
        value_function: ValueFunctionPWA { breakpoints, slopes, offset: 0.0 },
    }
}

fn criterion_1(store: &PeriodRegionStore, problem: &PeriodProblem, build_s: f64) -> Verdict {
    let t0 = Instant::now();
    let n_s = store.config.n_s;
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc1);
    let (mut feasible, mut not_covered, mut bad_cost, mut bad_policy, mut same_x) = (0, 0, 0, 0, 0);
    let mut worst = 0.0f64;
    while feasible < C1_SAMPLES {
        let t = sample_envelope(&store.envelope, n_s, &mut rng);
        let lp = problem.plp.instantiate(&t);
        let sol = solve_lp(&lp).expect("lp");
        if sol.status != LpStatus::Optimal {
            continue;
        }
        feasible += 1;
        let Ok(region) = store.store.locate(&t, 1e-9) else {
            not_covered += 1;
            continue;
        };
        let c = region.cost_at(&t);
        worst = worst.max((c - sol.objective).abs() / (1.0 + sol.objective.abs()));
        if !rel_close(c, sol.objective, C1_REL_TOL) {
            bad_cost += 1;
        }
        // the stored policy must be an optimal solution of the fresh LP
        let x = region.policy_at(&t);
        let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let obj: f64 = lp.cost.iter().zip(&x).map(|(a, b)| a * b).sum();
        if lp.max_violation(&x) > C1_REL_TOL * scale || !rel_close(obj, sol.objective, C1_REL_TOL) {
            bad_policy += 1;
        }
        if x.iter().zip(&sol.x).all(|(a, b)| (a - b).abs() <= C1_REL_TOL * scale) {
            same_x += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let nc_rate = not_covered as f64 / feasible as f64;
    let pass = bad_cost == 0 && bad_policy == 0 && nc_rate < C1_MAX_NOT_COVERED && secs < C1_BUDGET_S;
    let built = if build_s > 0.0 { format!("built in {build_s:.0} s") } else { "cached".to_string() };
    Verdict {
        id: 1,
        name: "mpLP oracle equivalence",
        pass,
        detail: format!(
            "{} regions ({built}); {feasible} feasible samples, not covered {:.2}% (< {:.0}%), cost mismatches {bad_cost}, \
             worst rel err {worst:.1e}, non-optimal policies {bad_policy}, identical primal {same_x}; {secs:.1} s (< {C1_BUDGET_S} s)",
            store.store.regions.len(),
            100.0 * nc_rate,
            100.0 * C1_MAX_NOT_COVERED
        ),
    }
}

fn criterion_2() -> Verdict {
    let t0 = Instant::now();
    let mut worst_exact = 0.0f64;
    let mut worst_simple = 0.0f64;
    let mut monotone = true;
    let mut segments = Vec::new();
    for seed in 1..=C2_DAYS {
        let sc = generate(&ScenarioOptions { seed, forecast_sigma: 0.1, ..Default::default() }).expect("scenario");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = sc.planning_horizon(0, 0, &mut rng);
        let bat = &sc.units[0].battery;
        let plp = build_planning_lp(&h, bat).expect("planning lp");
        let vf = exact_value_function(&plp, bat).expect("value function");
        let simple = vf.simplify(4).expect("simplify");
        segments.push(vf.num_segments());
        for f in [&vf, &simple] {
            monotone &= f.slopes.windows(2).all(|w| w[0] <= w[1] + 1e-12);
        }
        let sweep = |s: f64| planning_cost(&plp, s).expect("lp").expect("feasible");
        for k in 0..C2_SWEEP {
            let s = bat.soc_min + (bat.soc_max - bat.soc_min) * k as f64 / (C2_SWEEP - 1) as f64;
            worst_exact = worst_exact.max((vf.eval(s) - sweep(s)).abs());
        }
        for &b in vf.breakpoints.iter() {
            worst_exact = worst_exact.max((vf.eval(b) - sweep(b)).abs());
        }
        for &b in simple.breakpoints.iter() {
            worst_simple = worst_simple.max((simple.eval(b) - sweep(b)).abs());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst_exact <= C2_EXACT_TOL && worst_simple <= C2_SIMPLE_TOL && monotone && secs < C2_BUDGET_S;
    Verdict {
        id: 2,
        name: "value-function correctness",
        pass,
        detail: format!(
            "{C2_DAYS} forecast days ({segments:?} exact segments); exact vs {C2_SWEEP}-point sweep {worst_exact:.1e} (<= {C2_EXACT_TOL:.0e}), \
             4-segment function at its breakpoints {worst_simple:.1e} (<= {C2_SIMPLE_TOL:.0e}), slopes non-decreasing {monotone}; {secs:.1} s (< {C2_BUDGET_S} s)"
        ),
    }
}

fn sample_box(a: &FlexChart2D, b: &FlexChart2D, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let (la, ha) = a.bbox().unwrap();
    let (lb, hb) = b.bbox().unwrap();
    let lo = [la[0].min(lb[0]) - 0.5, la[1].min(lb[1]) - 0.5];
    let hi = [ha[0].max(hb[0]) + 0.5, ha[1].max(hb[1]) + 0.5];
    (rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1]))
}

struct Snapshot {
    m: Measurements,
    chart: FlexChart2D,
}

fn criterion_3(store: &PeriodRegionStore, problem: &PeriodProblem) -> (Verdict, Vec<Snapshot>) {
    let t0 = Instant::now();
    let cfg = &store.config;
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc3);
    let mut projector = ChartProjector::new(store);
    let (mut disagree, mut cost_bad, mut compared, mut not_covered, mut convex_bad) = (0, 0, 0, 0, 0);
    let mut worst = 0.0f64;
    let mut snaps = Vec::new();
    while snaps.len() < C3_SNAPSHOTS {
        let m = random_measurements(&mut rng, cfg);
        let fb = fallback_chart(problem, &store.envelope, 1, &m).expect("fallback chart");
        let chart = match projector.project(1, &m) {
            Ok(c) => c,
            Err(_) => {
                not_covered += 1;
                continue;
            }
        };
        for _ in 0..C3_POINTS {
            let (p, q) = sample_box(&chart, &fb, &mut rng);
            // points within 1e-7 of a boundary may fall either way
            let (a_in, a_out) = (chart.contains(p, q, -1e-7), !chart.contains(p, q, 1e-7));
            let (b_in, b_out) = (fb.contains(p, q, -1e-7), !fb.contains(p, q, 1e-7));
            if (a_in && b_out) || (b_in && a_out) {
                disagree += 1;
            }
            if let (Some(a), Some(b)) = (chart.cost_at(p, q, 1e-9), fb.cost_at(p, q, 1e-9)) {
                compared += 1;
                worst = worst.max((a - b).abs() / (1.0 + b.abs()));
                if !rel_close(a, b, C3_COST_TOL) {
                    cost_bad += 1;
                }
            }
        }
        let verts = chart.vertices();
        for _ in 0..100 {
            let a = verts[rng.random_range(0..verts.len())];
            let b = verts[rng.random_range(0..verts.len())];
            let w: f64 = rng.random_range(0.0..1.0);
            let mid = [w * a[0] + (1.0 - w) * b[0], w * a[1] + (1.0 - w) * b[1]];
            if !chart.contains(mid[0], mid[1], 1e-7) {
                convex_bad += 1;
            }
        }
        snaps.push(Snapshot { m, chart });
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = disagree == 0 && cost_bad == 0 && convex_bad == 0 && secs < C3_BUDGET_S;
    let v = Verdict {
        id: 3,
        name: "projection soundness",
        pass,
        detail: format!(
            "{C3_SNAPSHOTS} snapshots x {C3_POINTS} points; feasibility disagreements {disagree}, cost mismatches {cost_bad} \
             of {compared} (worst {worst:.1e}, tol {C3_COST_TOL:.0e}), midpoint convexity violations {convex_bad}, \
             snapshots outside store coverage {not_covered}; {secs:.1} s (< {C3_BUDGET_S} s)"
        ),
    };
    (v, snaps)
}

fn criterion_4(store: &PeriodRegionStore, problem: &PeriodProblem, snaps: &[Snapshot]) -> Verdict {
    let cfg = &store.config;
    let mut rng = ChaCha8Rng::seed_from_u64(0xacc4);
    let (mut checked, mut failures, mut direct) = (0, 0, 0);
    let mut worst_feas = 0.0f64;
    let mut worst_cost = 0.0f64;
    for s in snaps {
        let (m, chart) = (&s.m, &s.chart);
        let mut points: Vec<[f64; 2]> = chart.vertices();
        points.push(chart.min_cost().unwrap().1);
        for piece in &chart.pieces {
            if piece.vertices.len() >= 3 {
                // random convex combination of the piece's vertices
                let w: Vec<f64> = piece.vertices.iter().map(|_| rng.random_range(0.0..1.0)).collect();
                let tot: f64 = w.iter().sum();
                let p = piece.vertices.iter().zip(&w).map(|(v, w)| v[0] * w).sum::<f64>() / tot;
                let q = piece.vertices.iter().zip(&w).map(|(v, w)| v[1] * w).sum::<f64>() / tot;
                points.push([p, q]);
            }
        }
        let pv = pv_polytope(&cfg.pv, m.p_max_pv_kw, cfg.n_arc);
        let bat = battery_polytope(&cfg.battery, cfg.n_arc);
        for v in points {
            checked += 1;
            let Ok(sp) = disaggregate(problem, Some(store), m, chart, (v[0], v[1])) else {
                failures += 1;
                continue;
            };
            direct += usize::from(sp.direct_solve);
            let errs = [
                (sp.p_exp - sp.p_imp - (sp.p_pv + sp.p_dis - sp.p_ch - m.p_load_kw)).abs(),
                (sp.p_exp - sp.p_imp - v[0]).abs(),
                (sp.q_exp - sp.q_imp - (sp.q_pv + sp.q_bat - m.q_load_kvar)).abs(),
                (sp.q_exp - sp.q_imp - v[1]).abs(),
                (soc_step(m.soc, sp.p_ch, sp.p_dis, TICK_S / 3600.0, &cfg.battery) - sp.soc_1).abs(),
            ];
            let feas = errs.iter().fold(0.0f64, |a, b| a.max(*b));
            worst_feas = worst_feas.max(feas);
            let in_dev = pv.poly.contains(&[sp.p_pv, sp.q_pv], C4_FEAS_TOL)
                && bat.poly.contains(&[sp.p_dis - sp.p_ch, sp.q_bat], C4_FEAS_TOL)
                && sp.p_ch <= cfg.battery.p_max_kw + C4_FEAS_TOL
                && sp.p_dis <= cfg.battery.p_max_kw + C4_FEAS_TOL
                && sp.soc_1 >= cfg.battery.soc_min - C4_FEAS_TOL
                && sp.soc_1 <= cfg.battery.soc_max + C4_FEAS_TOL;
            let cc = chart.cost_at(v[0], v[1], 1e-7).unwrap_or(f64::NAN);
            let cost_err = (cc - sp.local_cost).abs() / (1.0 + cc.abs());
            worst_cost = worst_cost.max(cost_err);
            if feas > C4_FEAS_TOL || !in_dev || cost_err.is_nan() || cost_err > C4_COST_TOL {
                failures += 1;
            }
        }
    }
    Verdict {
        id: 4,
        name: "disaggregation consistency",
        pass: failures == 0 && checked > 0,
        detail: format!(
            "{checked} setpoints ({direct} by direct solve); failures {failures}, worst balance/SOC error {worst_feas:.1e} \
             (<= {C4_FEAS_TOL:.0e}), worst cost error {worst_cost:.1e} (<= {C4_COST_TOL:.0e})"
        ),
    }
}

struct DayRuns {
    central: RunOutput,
    omniscient: RunOutput,
    baseline: RunOutput,
}

fn day(opts: &ScenarioOptions, stores: &StoreSet) -> Result<DayRuns, String> {
    let sc = generate(opts).map_err(|e| e.to_string())?;
    let central = run_central(&sc, stores, &CentralRunOptions::default()).map_err(|e| format!("central: {e}"))?;
    let omniscient = run_omniscient(&sc, &OmniscientOptions::default()).map_err(|e| format!("omniscient: {e}"))?;
    let baseline = run_baseline(&sc).map_err(|e| format!("baseline: {e}"))?;
    let (c, o, b) = (&central.metrics, &omniscient.metrics, &baseline.metrics);
    println!(
        "  day seed {} {:?}: cost central {:.4} omniscient {:.4} baseline {:.4} EUR; PV {:.3}/{:.3}/{:.3} kWh; \
         Q {:.3}/{:.3}/{:.3} kvarh; violations {}/{}/{}; held {} fallback {} infeasible {}",
        opts.seed,
        opts.feeder,
        c.total_cost_eur,
        o.total_cost_eur,
        b.total_cost_eur,
        c.e_pv_kwh,
        o.e_pv_kwh,
        b.e_pv_kwh,
        c.q_prod_kvarh,
        o.q_prod_kvarh,
        b.q_prod_kvarh,
        c.voltage_violations,
        o.voltage_violations,
        b.voltage_violations,
        c.held_ticks,
        c.fallback_charts,
        c.infeasible_ticks
    );
    Ok(DayRuns { central, omniscient, baseline })
}

fn criterion_5(runs: &[DayRuns]) -> Verdict {
    let tight = runs.iter().map(|r| r.central.metrics.tight_fraction).fold(1.0, f64::min);
    let mismatch = runs.iter().map(|r| r.central.metrics.max_mismatch_pu).fold(0.0, f64::max);
    let max_gap = runs.iter().map(|r| r.central.metrics.max_gap_pu).fold(0.0, f64::max);
    Verdict {
        id: 5,
        name: "central relaxation tightness",
        pass: !runs.is_empty() && tight >= C5_TIGHT_SHARE && mismatch <= C5_MISMATCH_PU,
        detail: format!(
            "{} 5-bus day runs with loss price > 0; ticks with every edge gap <= {C5_GAP_PU:.0e} p.u.: worst day {:.2}% \
             (>= {:.0}%), largest gap {max_gap:.1e} p.u.; sweep voltage mismatch {mismatch:.1e} p.u. (<= {C5_MISMATCH_PU})",
            runs.len(),
            100.0 * tight,
            100.0 * C5_TIGHT_SHARE
        ),
    }
}

fn criterion_6(runs: &[DayRuns]) -> Verdict {
    let mut pass = runs.len() == C6_SEEDS.len();
    let mut parts = Vec::new();
    for r in runs {
        let (c, o, b) =
            (r.central.metrics.total_cost_eur, r.omniscient.metrics.total_cost_eur, r.baseline.metrics.total_cost_eur);
        let gap = (c - o) / o.abs();
        pass &= o <= c + 1e-9 && c <= b + 1e-9 && gap <= C6_MAX_GAP;
        parts.push(format!("seed {} {o:.3} <= {c:.3} <= {b:.3} gap {:.2}%", r.central.metrics.seed, 100.0 * gap));
    }
    Verdict {
        id: 6,
        name: "cost ordering and gap",
        pass,
        detail: format!("{} (gap <= {:.0}%)", parts.join("; "), 100.0 * C6_MAX_GAP),
    }
}

fn criterion_7(r: &DayRuns) -> Verdict {
    let (b, c) = (r.baseline.metrics.voltage_violations, r.central.metrics.voltage_violations);
    Verdict {
        id: 7,
        name: "voltage constraint satisfaction",
        pass: b >= 1 && c == 0,
        detail: format!(
            "weak feeder: baseline {b} violating tick-nodes (worst {:.4} p.u. over), central {c} (v max {:.4} p.u.)",
            r.baseline.metrics.worst_excursion_pu, r.central.metrics.v_max_pu
        ),
    }
}

fn criterion_8(r: &DayRuns) -> Verdict {
    let (c, o) = (&r.central.metrics, &r.omniscient.metrics);
    let share = c.e_pv_kwh / o.e_pv_kwh;
    Verdict {
        id: 8,
        name: "curtailment and reactive substitution",
        pass: share >= C8_PV_SHARE && c.q_prod_kvarh >= o.q_prod_kvarh,
        detail: format!(
            "weak feeder: PV central {:.3} vs omniscient {:.3} kWh ({:.3}%, >= {:.0}%), reactive central {:.3} vs omniscient {:.3} kvarh",
            c.e_pv_kwh,
            o.e_pv_kwh,
            100.0 * share,
            100.0 * C8_PV_SHARE,
            c.q_prod_kvarh,
            o.q_prod_kvarh
        ),
    }
}

fn criterion_9(runs: &[&DayRuns]) -> Verdict {
    let max = runs.iter().map(|r| r.central.timing.max_step_ms).fold(0.0, f64::max);
    let p99 = runs.iter().map(|r| r.central.timing.p99_step_ms).fold(0.0, f64::max);
    let mean = runs.iter().map(|r| r.central.timing.mean_step_ms).sum::<f64>() / runs.len().max(1) as f64;
    let ticks: usize = runs.iter().map(|r| r.central.timing.steps).sum();
    Verdict {
        id: 9,
        name: "real-time budget",
        pass: !runs.is_empty() && max < C9_BUDGET_MS,
        detail: format!(
            "{ticks} ticks of projection + central solve + disaggregation for 5 nodes: mean {mean:.2} ms, p99 {p99:.2} ms, \
             max {max:.2} ms (< {C9_BUDGET_MS} ms)"
        ),
    }
}

fn criterion_10(stores: &StoreSet) -> Verdict {
    let opts = ScenarioOptions { seed: 9, start_hour: 10, hours: 3, forecast_sigma: 0.1, ..Default::default() };
    let base = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let mut files = Vec::new();
    for run in ["det_a", "det_b"] {
        let dir = base.join(run);
        let _ = fs::remove_dir_all(&dir);
        let out = generate(&opts)
            .and_then(|sc| run_central(&sc, stores, &CentralRunOptions::default()))
            .and_then(|o| o.write(&dir));
        if let Err(e) = out {
            return Verdict { id: 10, name: "determinism", pass: false, detail: e.to_string() };
        }
        files.push([fs::read(dir.join("metrics.csv")).unwrap(), fs::read(dir.join("trace.csv")).unwrap()]);
    }
    let same = files[0] == files[1];
    Verdict {
        id: 10,
        name: "determinism",
        pass: same,
        detail: format!(
            "two central runs (seed 9, 3 h, noisy forecasts): metrics.csv and trace.csv byte-identical {same} ({} trace bytes)",
            files[0][1].len()
        ),
    }
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters from the workspace run must not start the full acceptance run
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let started = Instant::now();
    let (store, build_s) = default_store();
    let problem = store.problem().expect("period problem");
    let mut verdicts = vec![criterion_1(&store, &problem, build_s)];
    report(&verdicts[0]);
    verdicts.push(criterion_2());
    report(verdicts.last().unwrap());
    let (v3, snaps) = criterion_3(&store, &problem);
    report(&v3);
    verdicts.push(v3);
    verdicts.push(criterion_4(&store, &problem, &snaps));
    report(verdicts.last().unwrap());

    let mut stores = StoreSet::new();
    stores.insert("default", store);
    let mut nominal = Vec::new();
    let mut errors = Vec::new();
    for seed in C6_SEEDS {
        match day(&ScenarioOptions { seed, ..Default::default() }, &stores) {
            Ok(r) => nominal.push(r),
            Err(e) => errors.push(format!("seed {seed}: {e}")),
        }
    }
    let weak = day(&ScenarioOptions::high_pv(1), &stores);
    let with_errors = |mut v: Verdict| {
        if !errors.is_empty() {
            v.pass = false;
            v.detail = format!("{}; run errors: {}", v.detail, errors.join("; "));
        }
        v
    };
    verdicts.push(with_errors(criterion_5(&nominal)));
    report(verdicts.last().unwrap());
    verdicts.push(with_errors(criterion_6(&nominal)));
    report(verdicts.last().unwrap());
    match &weak {
        Ok(w) => {
            verdicts.push(criterion_7(w));
            report(verdicts.last().unwrap());
            verdicts.push(criterion_8(w));
            report(verdicts.last().unwrap());
        }
        Err(e) => {
            for (id, name) in [(7, "voltage constraint satisfaction"), (8, "curtailment and reactive substitution")] {
                verdicts.push(Verdict { id, name, pass: false, detail: format!("weak feeder run failed: {e}") });
                report(verdicts.last().unwrap());
            }
        }
    }
    let mut all: Vec<&DayRuns> = nominal.iter().collect();
    all.extend(weak.as_ref().ok());
    verdicts.push(criterion_9(&all));
    report(verdicts.last().unwrap());
    verdicts.push(criterion_10(&stores));
    report(verdicts.last().unwrap());

    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("acceptance: {passed}/{} criteria passed in {:.0} s", verdicts.len(), started.elapsed().as_secs_f64());
    if passed == verdicts.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
