use std::sync::OnceLock;

use gridflex::assets::Tariff;
use gridflex::period::{build_period_problem, solve_offline, Envelope, OfflineOptions, PeriodConfig};
use gridflex::planning::{build_planning_lp, planning_cost, PlanningHorizon};
use gridflex::sim::{
    chain_feeder, generate, run_baseline, run_central, run_omniscient, CentralRunOptions, OmniscientOptions, RunOutput,
    Scenario, ScenarioOptions, StoreSet, TICKS_PER_PERIOD,
};

fn small_stores() -> &'static StoreSet {
    static S: OnceLock<StoreSet> = OnceLock::new();
    S.get_or_init(|| {
        let cfg = PeriodConfig { n_s: 2, n_arc: 1, ..Default::default() };
        let problem = build_period_problem(&cfg).unwrap();
        let env = Envelope::default_for(&cfg);
        let store = solve_offline(&problem, &env, &OfflineOptions::default()).unwrap();
        let mut set = StoreSet::new();
        set.insert("default", store);
        set
    })
}

fn midday(seed: u64) -> Scenario {
    generate(&ScenarioOptions { seed, start_hour: 11, hours: 1, n_s: 2, ..Default::default() }).unwrap()
}

fn check_bookkeeping(sc: &Scenario, out: &RunOutput) {
    let m = &out.metrics;
    let trace_cost: f64 = out.trace.iter().map(|r| r.cost_eur).sum();
    assert!((trace_cost - m.total_cost_eur).abs() < 1e-9, "{trace_cost} vs {}", m.total_cost_eur);
    let parts = m.net_cost_eur + m.reactive_cost_eur + m.battery_cost_eur;
    assert!((parts - m.total_cost_eur).abs() < 1e-9);
    for r in &out.trace {
        let bat = &sc.units[r.node - 1].battery;
        assert!(r.soc >= bat.soc_min - 1e-9 && r.soc <= bat.soc_max + 1e-9, "soc {}", r.soc);
    }
}

#[test]
fn idle_day_costs_nothing() {
    let sc = generate(&ScenarioOptions { pv_scale: 0.0, load_scale: 0.0, ..Default::default() }).unwrap();
    let out = run_baseline(&sc).unwrap();
    assert_eq!(out.metrics.total_cost_eur, 0.0);
    assert_eq!(out.metrics.voltage_violations, 0);
    assert!(out.metrics.loss_kwh.abs() < 1e-12);
}

#[test]
fn baseline_bookkeeping_is_consistent() {
    let sc = generate(&ScenarioOptions::default()).unwrap();
    let out = run_baseline(&sc).unwrap();
    check_bookkeeping(&sc, &out);
    let m = &out.metrics;
    let dt = sc.tick_h();
    let net: f64 = out.trace.iter().map(|r| r.p_kw).sum::<f64>() * dt;
    assert!((m.e_export_kwh - m.e_import_kwh - net).abs() < 1e-6);
    assert_eq!(out.trace.len(), sc.num_ticks() * sc.units.len());
    // greedy control never pays for reactive power
    assert_eq!(m.reactive_cost_eur, 0.0);
}

#[test]
fn weak_feeder_baseline_overvoltages() {
    let sc = generate(&ScenarioOptions::high_pv(1)).unwrap();
    let out = run_baseline(&sc).unwrap();
    assert!(out.metrics.voltage_violations > 0);
    assert!(out.metrics.v_max_pu > 1.05);
}

#[test]
fn omniscient_without_network_matches_unit_plans() {
    let tariff = Tariff { pi_loss: 0.0, ..Default::default() };
    let mut sc = generate(&ScenarioOptions { seed: 3, hours: 6, start_hour: 9, tariff, ..Default::default() }).unwrap();
    sc.feeder = chain_feeder(sc.units.len(), 1e-6, 1e-6, 1.0);
    let out = run_omniscient(&sc, &OmniscientOptions::default()).unwrap();
    let np = sc.num_periods();
    let mut expected = 0.0;
    for (k, u) in sc.units.iter().enumerate() {
        let mut h = PlanningHorizon {
            dt_h: vec![0.25; np],
            pv_kw: vec![],
            load_kw: vec![],
            pi_imp: vec![],
            pi_exp: vec![],
            pi_bat: sc.tariff.pi_bat,
        };
        for t in 0..np {
            let (pv, load) = sc.mean_pv_load(k, t * TICKS_PER_PERIOD, (t + 1) * TICKS_PER_PERIOD);
            let (pi_imp, pi_exp) = sc.period_prices(t);
            h.pv_kw.push(pv);
            h.load_kw.push(load);
            h.pi_imp.push(pi_imp);
            h.pi_exp.push(pi_exp);
        }
        let plp = build_planning_lp(&h, &u.battery).unwrap();
        expected += planning_cost(&plp, u.soc0).unwrap().unwrap();
    }
    let got = out.metrics.total_cost_eur;
    assert!((got - expected).abs() < 1e-6 * (1.0 + expected.abs()), "{got} vs {expected}");
    assert_eq!(out.metrics.q_prod_kvarh, 0.0);
}

#[test]
fn central_midday_window() {
    let sc = midday(2);
    let stores = small_stores();
    let out = run_central(&sc, stores, &CentralRunOptions::default()).unwrap();
    let m = &out.metrics;
    check_bookkeeping(&sc, &out);
    assert_eq!(m.voltage_violations, 0);
    assert!(m.max_balance_residual_kw < 1e-6, "residual {}", m.max_balance_residual_kw);
    assert_eq!(out.trace.len(), sc.num_ticks() * sc.units.len());
    let omni = run_omniscient(&sc, &OmniscientOptions::default()).unwrap();
    assert!(omni.metrics.total_cost_eur <= m.total_cost_eur + 1e-6);
}

#[test]
fn central_refuses_mismatched_store() {
    let mut sc = midday(2);
    sc.units[0].battery.capacity_kwh = 12.0;
    assert!(run_central(&sc, small_stores(), &CentralRunOptions::default()).is_err());
    let sc = midday(2);
    assert!(run_central(&sc, &StoreSet::new(), &CentralRunOptions::default()).is_err());
}

#[test]
fn runs_are_deterministic() {
    let opts = ScenarioOptions { seed: 7, start_hour: 12, hours: 1, n_s: 2, forecast_sigma: 0.1, ..Default::default() };
    let a = generate(&opts).unwrap();
    let b = generate(&opts).unwrap();
    assert_eq!(a, b);
    let ra = run_central(&a, small_stores(), &CentralRunOptions::default()).unwrap();
    let rb = run_central(&b, small_stores(), &CentralRunOptions::default()).unwrap();
    assert_eq!(ra.metrics, rb.metrics);
    assert_eq!(ra.trace, rb.trace);
}

#[test]
fn outputs_round_trip_through_csv() {
    let sc = generate(&ScenarioOptions { hours: 1, ..Default::default() }).unwrap();
    let out = run_baseline(&sc).unwrap();
    let dir = std::env::temp_dir().join(format!("gridflex-sim-{}", std::process::id()));
    out.write(&dir).unwrap();
    let back = gridflex::sim::read_metrics(&dir.join("metrics.csv")).unwrap();
    assert_eq!(back.mode, "baseline");
    assert!((back.total_cost_eur - out.metrics.total_cost_eur).abs() < 1e-12);
    assert!(dir.join("trace.csv").exists() && dir.join("timing.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
}
