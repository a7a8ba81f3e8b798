//! Fixtures shared by the benches.

use gridflex::period::{build_period_problem, solve_offline, Envelope, OfflineOptions, PeriodProblem, TICK_S};
use gridflex::planning::{build_planning_lp, solve_value_function, PlanningHorizon};
use gridflex::sim::{chain_feeder, TICKS_PER_PERIOD};
use gridflex::{FeederModel, Measurements, PeriodConfig, PeriodRegionStore};

pub struct Fixture {
    pub problem: PeriodProblem,
    pub store: PeriodRegionStore,
    pub feeder: FeederModel,
    pub horizon: PlanningHorizon,
    pub measurements: Vec<Measurements>,
}

/// A midday horizon for one unit: surplus until mid-afternoon, evening deficit.
pub fn midday_horizon() -> PlanningHorizon {
    let n = 40;
    let pv_kw: Vec<f64> = (0..n).map(|k| (4.5 - 0.12 * k as f64).max(0.0)).collect();
    let load_kw: Vec<f64> = (0..n).map(|k| if k > 24 { 2.2 } else { 0.6 }).collect();
    let pi_imp: Vec<f64> = (0..n).map(|k| if k > 24 { 0.37 } else { 0.24 }).collect();
    PlanningHorizon {
        dt_h: vec![0.25; n],
        pi_exp: pi_imp.iter().map(|p| 0.4 * p).collect(),
        pv_kw,
        load_kw,
        pi_imp,
        pi_bat: 0.02,
    }
}

/// Small store (2 value-function segments, 1 chord per quadrant) and one
/// measurement snapshot per unit of a 4-unit chain.
pub fn fixture() -> Fixture {
    let cfg = PeriodConfig { n_s: 2, n_arc: 1, ..Default::default() };
    let problem = build_period_problem(&cfg).expect("period problem");
    let store = solve_offline(&problem, &Envelope::default_for(&cfg), &OfflineOptions::default()).expect("store");
    let horizon = midday_horizon();
    let vf = solve_value_function(&build_planning_lp(&horizon, &cfg.battery).expect("planning lp"), &cfg.battery, 2)
        .expect("value function");
    let remainder_h = (TICKS_PER_PERIOD - 1) as f64 * TICK_S / 3600.0;
    let measurements = (0..4)
        .map(|k| {
            let load = 0.5 + 0.3 * k as f64;
            Measurements {
                soc: 0.3 + 0.15 * k as f64,
                p_load_kw: load,
                q_load_kvar: 0.33 * load,
                p_max_pv_kw: 4.5,
                e_pv_2_kwh: 4.4 * remainder_h,
                e_load_2_kwh: load * remainder_h,
                pi_imp: 0.24,
                pi_exp: 0.096,
                dtau_r_s: remainder_h * 3600.0,
                value_function: vf.clone(),
            }
        })
        .collect();
    Fixture { problem, store, feeder: chain_feeder(4, 0.2, 0.07, 1.01), horizon, measurements }
}
