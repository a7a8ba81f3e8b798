//! Multiparametric problem of the ongoing 15-minute market period: a 10 s
//! instantaneous sub-interval followed by an energy-based remainder, with the
//! planning value function entering through slope and breakpoint parameters.

use std::path::Path;

use log::info;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::{battery_rows, pv_fixed_rows, AssetError, BatteryParams, PvParams, Tariff};
use crate::lp::{solve_lp, LpBuilder, LpStatus, Polyhedron};
use crate::mplp::enumerate::{bounding_box, sample_theta};
use crate::mplp::{enumerate_regions, EnumerateOptions, MplpError, ParametricLP, RegionStore};

/// Control tick (first sub-interval), seconds.
pub const TICK_S: f64 = 10.0;
/// Market period, seconds.
pub const PERIOD_S: f64 = 900.0;
/// Longest remainder of the period, seconds.
pub const REMAINDER_MAX_S: f64 = PERIOD_S - TICK_S;

/// Battery reactive power is priced slightly above PV reactive power so the
/// two sources are never exactly interchangeable in the LP.
const BATTERY_Q_WEIGHT: f64 = 1.001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PeriodError {
    #[error("value function has {got} segments, problem expects {expected}")]
    InconsistentSegments { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no feasible seed found in the envelope")]
    NoFeasibleSeed,
    #[error("store format: {0}")]
    Format(String),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Mplp(#[from] MplpError),
}

/// Device and price data of one residential-unit archetype.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodConfig {
    pub battery: BatteryParams,
    pub pv: PvParams,
    pub tariff: Tariff,
    pub n_s: usize,
    pub n_arc: usize,
}

impl Default for PeriodConfig {
    fn default() -> Self {
        PeriodConfig {
            battery: BatteryParams::default(),
            pv: PvParams::default(),
            tariff: Tariff::default(),
            n_s: 4,
            n_arc: 4,
        }
    }
}

impl PeriodConfig {
    pub fn validate(&self) -> Result<(), PeriodError> {
        self.battery.validate()?;
        self.pv.validate()?;
        self.tariff.validate()?;
        if self.n_s == 0 || self.n_arc == 0 {
            return Err(PeriodError::InvalidConfig("n_s and n_arc must be at least 1".into()));
        }
        Ok(())
    }
}

/// Positions of the named parameters in the parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub n_s: usize,
}

impl ParamLayout {
    pub fn theta(&self, n: usize) -> usize {
        n
    }
    pub fn breakpoint(&self, n: usize) -> usize {
        self.n_s + n
    }
    pub fn p_load(&self) -> usize {
        2 * self.n_s + 1
    }
    pub fn q_load(&self) -> usize {
        self.p_load() + 1
    }
    pub fn soc(&self) -> usize {
        self.p_load() + 2
    }
    pub fn p_max_pv(&self) -> usize {
        self.p_load() + 3
    }
    pub fn e_pv(&self) -> usize {
        self.p_load() + 4
    }
    pub fn e_load(&self) -> usize {
        self.p_load() + 5
    }
    pub fn pi_exp(&self) -> usize {
        self.p_load() + 6
    }
    pub fn pi_imp(&self) -> usize {
        self.p_load() + 7
    }
    pub fn dtau_r(&self) -> usize {
        self.p_load() + 8
    }
    pub fn p_grid(&self) -> usize {
        self.p_load() + 9
    }
    pub fn q_grid(&self) -> usize {
        self.p_load() + 10
    }
    pub fn len(&self) -> usize {
        self.p_load() + 11
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.n_s).map(|n| format!("theta_{n}")).collect();
        v.extend((1..=self.n_s + 1).map(|n| format!("s_{n}")));
        for s in [
            "p_load", "q_load", "soc", "p_max_pv", "e_pv_2", "e_load_2", "pi_exp", "pi_imp", "dtau_r", "p_grid",
            "q_grid",
        ] {
            v.push(s.to_string());
        }
        v
    }
}

/// Positions of the decision variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarLayout {
    pub n_s: usize,
}

impl VarLayout {
    pub const P_IMP: usize = 0;
    pub const P_EXP: usize = 1;
    pub const P_CH: usize = 2;
    pub const P_DIS: usize = 3;
    pub const P_PV: usize = 4;
    pub const Q_PV_POS: usize = 5;
    pub const Q_PV_NEG: usize = 6;
    pub const Q_BAT_POS: usize = 7;
    pub const Q_BAT_NEG: usize = 8;
    pub const Q_IMP: usize = 9;
    pub const Q_EXP: usize = 10;
    pub const E_IMP: usize = 11;
    pub const E_EXP: usize = 12;
    pub const E_CH: usize = 13;
    pub const E_DIS: usize = 14;
    pub const SOC_1: usize = 15;
    pub const SOC_2: usize = 16;

    pub fn delta_s(&self, n: usize) -> usize {
        17 + n
    }
    pub fn len(&self) -> usize {
        17 + self.n_s
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = [
            "p_imp_1",
            "p_exp_1",
            "p_ch_1",
            "p_dis_1",
            "p_pv",
            "q_pv_pos",
            "q_pv_neg",
            "q_bat_pos",
            "q_bat_neg",
            "q_imp_1",
            "q_exp_1",
            "e_imp_2",
            "e_exp_2",
            "e_ch_2",
            "e_dis_2",
            "soc_1",
            "soc_2",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        v.extend((1..=self.n_s).map(|n| format!("delta_s_{n}")));
        v
    }
}

#[derive(Clone, Debug)]
pub struct PeriodProblem {
    pub config: PeriodConfig,
    pub plp: ParametricLP,
    pub params: ParamLayout,
    pub vars: VarLayout,
    pub var_names: Vec<String>,
    /// Equality rows: active balance, reactive balance, energy balance,
    /// active coupler, reactive coupler, SOC_1, SOC_2, SOC link.
    pub num_eq: usize,
}

/// Sub-interval 1 length in hours.
pub fn tick_hours() -> f64 {
    TICK_S / 3600.0
}

/// Build the parametric LP over the default (envelope) parameter set.
pub fn build_period_problem(config: &PeriodConfig) -> Result<PeriodProblem, PeriodError> {
    config.validate()?;
    let env = Envelope::default_for(config);
    build_period_problem_with(config, &env.theta(config.n_s))
}

pub fn build_period_problem_with(config: &PeriodConfig, theta: &Polyhedron) -> Result<PeriodProblem, PeriodError> {
    config.validate()?;
    let n_s = config.n_s;
    let pl = ParamLayout { n_s };
    let vl = VarLayout { n_s };
    let bat = &config.battery;
    let tar = &config.tariff;
    let dt1 = tick_hours();
    let c = bat.capacity_kwh;
    let pm = bat.p_max_kw;

    let mut b = LpBuilder::new();
    let inf = f64::INFINITY;
    b.var(0.0, 0.0, inf); // p_imp_1 (cost is parametric)
    b.var(0.0, 0.0, inf); // p_exp_1
    b.var(tar.pi_bat * dt1, 0.0, pm);
    b.var(tar.pi_bat * dt1, 0.0, pm);
    b.var(0.0, 0.0, inf); // p_pv
    b.var(tar.pi_q * dt1, 0.0, inf);
    b.var(tar.pi_q * dt1, 0.0, inf);
    b.var(BATTERY_Q_WEIGHT * tar.pi_q * dt1, 0.0, inf);
    b.var(BATTERY_Q_WEIGHT * tar.pi_q * dt1, 0.0, inf);
    b.var(0.0, 0.0, inf); // q_imp_1
    b.var(0.0, 0.0, inf); // q_exp_1
    b.var(0.0, 0.0, inf); // e_imp_2
    b.var(0.0, 0.0, inf); // e_exp_2
    b.var(tar.pi_bat, 0.0, inf);
    b.var(tar.pi_bat, 0.0, inf);
    b.var(0.0, bat.soc_min, bat.soc_max);
    b.var(0.0, bat.soc_min, bat.soc_max);
    for _ in 0..n_s {
        b.var(0.0, 0.0, inf);
    }
    type V = VarLayout;

    let p = pl.len();
    let mut rhs: Vec<Vec<(usize, f64)>> = Vec::new();
    // equality rows
    b.eq(&[(V::P_EXP, 1.0), (V::P_IMP, -1.0), (V::P_PV, -1.0), (V::P_DIS, -1.0), (V::P_CH, 1.0)], 0.0);
    rhs.push(vec![(pl.p_load(), -1.0)]);
    b.eq(
        &[
            (V::Q_EXP, 1.0),
            (V::Q_IMP, -1.0),
            (V::Q_PV_POS, -1.0),
            (V::Q_PV_NEG, 1.0),
            (V::Q_BAT_POS, -1.0),
            (V::Q_BAT_NEG, 1.0),
        ],
        0.0,
    );
    rhs.push(vec![(pl.q_load(), -1.0)]);
    b.eq(&[(V::E_EXP, 1.0), (V::E_IMP, -1.0), (V::E_DIS, -1.0), (V::E_CH, 1.0)], 0.0);
    rhs.push(vec![(pl.e_pv(), 1.0), (pl.e_load(), -1.0)]);
    b.eq(&[(V::P_EXP, 1.0), (V::P_IMP, -1.0)], 0.0);
    rhs.push(vec![(pl.p_grid(), 1.0)]);
    b.eq(&[(V::Q_EXP, 1.0), (V::Q_IMP, -1.0)], 0.0);
    rhs.push(vec![(pl.q_grid(), 1.0)]);
    b.eq(&[(V::SOC_1, 1.0), (V::P_CH, -bat.eta_ch * dt1 / c), (V::P_DIS, dt1 / (bat.eta_dis * c))], 0.0);
    rhs.push(vec![(pl.soc(), 1.0)]);
    b.eq(&[(V::SOC_2, 1.0), (V::SOC_1, -1.0), (V::E_CH, -bat.eta_ch / c), (V::E_DIS, 1.0 / (bat.eta_dis * c))], 0.0);
    rhs.push(Vec::new());
    let mut link = vec![(V::SOC_2, 1.0)];
    link.extend((0..n_s).map(|n| (vl.delta_s(n), -1.0)));
    b.eq(&link, 0.0);
    rhs.push(vec![(pl.breakpoint(0), 1.0)]);
    let num_eq = rhs.len();

    // inequality rows
    for (a, r) in battery_rows(bat, config.n_arc) {
        b.le(&[(V::P_DIS, a[0]), (V::P_CH, -a[0]), (V::Q_BAT_POS, a[1]), (V::Q_BAT_NEG, -a[1])], r);
        rhs.push(Vec::new());
    }
    for (a, r) in pv_fixed_rows(&config.pv, config.n_arc) {
        b.le(&[(V::P_PV, a[0]), (V::Q_PV_POS, a[1]), (V::Q_PV_NEG, -a[1])], r);
        rhs.push(Vec::new());
    }
    b.le(&[(V::P_PV, 1.0)], 0.0);
    rhs.push(vec![(pl.p_max_pv(), 1.0)]);
    // energy limits scale with the remaining time (hours)
    b.le(&[(V::E_DIS, 1.0)], 0.0);
    rhs.push(vec![(pl.dtau_r(), pm)]);
    b.le(&[(V::E_CH, 1.0)], 0.0);
    rhs.push(vec![(pl.dtau_r(), pm)]);
    for n in 0..n_s {
        b.le(&[(vl.delta_s(n), 1.0)], 0.0);
        rhs.push(vec![(pl.breakpoint(n + 1), 1.0), (pl.breakpoint(n), -1.0)]);
    }

    let base = b.build();
    let mut rhs_sens = DMatrix::zeros(rhs.len(), p);
    for (i, terms) in rhs.iter().enumerate() {
        for &(k, v) in terms {
            rhs_sens[(i, k)] += v;
        }
    }
    let mut cost_sens = DMatrix::zeros(base.num_vars(), p);
    cost_sens[(V::P_IMP, pl.pi_imp())] = dt1;
    cost_sens[(V::P_EXP, pl.pi_exp())] = -dt1;
    cost_sens[(V::E_IMP, pl.pi_imp())] = 1.0;
    cost_sens[(V::E_EXP, pl.pi_exp())] = -1.0;
    for n in 0..n_s {
        cost_sens[(vl.delta_s(n), pl.theta(n))] = 1.0;
    }
    if theta.dim() != p {
        return Err(PeriodError::InvalidConfig(format!("parameter set has dimension {}, expected {p}", theta.dim())));
    }
    let plp = ParametricLP { base, rhs_sens, cost_sens, theta: theta.clone(), param_names: pl.names() };
    plp.validate()?;
    Ok(PeriodProblem { config: config.clone(), plp, params: pl, vars: vl, var_names: vl.names(), num_eq })
}

/// Sampling box for the offline solve plus ordering restrictions on the
/// slopes, the breakpoints and the two prices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Envelope {
    pub fn default_for(config: &PeriodConfig) -> Envelope {
        let n_s = config.n_s;
        let pl = ParamLayout { n_s };
        let bat = &config.battery;
        let pv = &config.pv;
        let tar = &config.tariff;
        let mut lo = vec![0.0; pl.len()];
        let mut hi = vec![0.0; pl.len()];
        let mut set = |k: usize, a: f64, b: f64| {
            lo[k] = a;
            hi[k] = b;
        };
        let pi_imp_hi = 1.5 * tar.pi_imp;
        for n in 0..n_s {
            set(pl.theta(n), -bat.capacity_kwh * pi_imp_hi, 0.0);
        }
        for n in 0..=n_s {
            let (a, b) = if n == 0 {
                (bat.soc_min - 0.05, bat.soc_min)
            } else if n == n_s {
                (bat.soc_max, bat.soc_max + 0.05)
            } else {
                (bat.soc_min, bat.soc_max)
            };
            set(pl.breakpoint(n), a, b);
        }
        let p_load_max = 10.0;
        let q_load_max = 3.0;
        let rem_h = REMAINDER_MAX_S / 3600.0;
        set(pl.p_load(), 0.0, p_load_max);
        set(pl.q_load(), -q_load_max, q_load_max);
        set(pl.soc(), bat.soc_min, bat.soc_max);
        set(pl.p_max_pv(), 0.0, pv.s_nom_kva);
        set(pl.e_pv(), 0.0, pv.s_nom_kva * rem_h);
        set(pl.e_load(), 0.0, p_load_max * rem_h);
        set(pl.pi_exp(), 0.5 * tar.pi_exp, 1.5 * tar.pi_exp);
        set(pl.pi_imp(), 0.5 * tar.pi_imp, pi_imp_hi);
        set(pl.dtau_r(), 0.0, rem_h);
        let p_bat = bat.p_limit();
        let q_pv = pv.s_nom_kva * pv.q_slope.atan().sin();
        set(pl.p_grid(), -(p_load_max + p_bat), pv.s_nom_kva + p_bat);
        let q_span = q_load_max + q_pv + bat.s_nom_kva;
        set(pl.q_grid(), -q_span, q_span);
        Envelope { lower: lo, upper: hi }
    }

    pub fn theta(&self, n_s: usize) -> Polyhedron {
        let pl = ParamLayout { n_s };
        let p = pl.len();
        let mut poly = Polyhedron::from_box(&self.lower, &self.upper);
        let mut order = |a: usize, b: usize| {
            let mut row = vec![0.0; p];
            row[a] = 1.0;
            row[b] = -1.0;
            poly.push_row(&row, 0.0);
        };
        for n in 0..n_s.saturating_sub(1) {
            order(pl.theta(n), pl.theta(n + 1));
        }
        for n in 0..n_s {
            order(pl.breakpoint(n), pl.breakpoint(n + 1));
        }
        order(pl.pi_exp(), pl.pi_imp());
        poly
    }

    /// Clamp a parameter point into the box (ordering rows are not enforced).
    pub fn clamp(&self, t: &mut [f64]) {
        for (k, v) in t.iter_mut().enumerate() {
            *v = v.clamp(self.lower[k], self.upper[k]);
        }
    }
}

/// Offline solution of one archetype.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodRegionStore {
    pub config: PeriodConfig,
    pub envelope: Envelope,
    pub store: RegionStore,
}

#[derive(Serialize, Deserialize)]
struct PeriodStoreDoc {
    config: PeriodConfig,
    envelope: Envelope,
    store: serde_json::Value,
}

impl PeriodRegionStore {
    pub fn to_json(&self) -> Result<String, PeriodError> {
        let store: serde_json::Value =
            serde_json::from_str(&self.store.to_json()?).map_err(|e| PeriodError::Format(e.to_string()))?;
        let doc = PeriodStoreDoc { config: self.config.clone(), envelope: self.envelope.clone(), store };
        serde_json::to_string(&doc).map_err(|e| PeriodError::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, PeriodError> {
        let doc: PeriodStoreDoc = serde_json::from_str(s).map_err(|e| PeriodError::Format(e.to_string()))?;
        let store = RegionStore::from_json(&doc.store.to_string())?;
        Ok(PeriodRegionStore { config: doc.config, envelope: doc.envelope, store })
    }

    pub fn save(&self, path: &Path) -> Result<(), PeriodError> {
        std::fs::write(path, self.to_json()?).map_err(|e| PeriodError::Format(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, PeriodError> {
        let s = std::fs::read_to_string(path).map_err(|e| PeriodError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    /// Rebuild the parametric problem the store was computed from.
    pub fn problem(&self) -> Result<PeriodProblem, PeriodError> {
        build_period_problem_with(&self.config, &self.envelope.theta(self.config.n_s))
    }
}

#[derive(Clone, Debug)]
pub struct OfflineOptions {
    /// LP-feasible seed points drawn from the envelope.
    pub seeds: usize,
    pub enumerate: EnumerateOptions,
}

impl Default for OfflineOptions {
    fn default() -> Self {
        OfflineOptions {
            seeds: 20,
            enumerate: EnumerateOptions {
                refill_samples: 400,
                refill_rounds: 30,
                coverage_samples: 1000,
                ..Default::default()
            },
        }
    }
}

/// Enumerate the critical regions of the period problem over `envelope`.
pub fn solve_offline(
    problem: &PeriodProblem,
    envelope: &Envelope,
    opts: &OfflineOptions,
) -> Result<PeriodRegionStore, PeriodError> {
    let theta = envelope.theta(problem.config.n_s);
    let mut plp = problem.plp.clone();
    plp.theta = theta.clone();
    let bbox = bounding_box(&theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.enumerate.rng_seed ^ 0x5eed);
    let mut seeds = Vec::new();
    let mut attempts = 0;
    while seeds.len() < opts.seeds && attempts < 1000 * opts.seeds.max(1) {
        attempts += 1;
        let t = sample_theta(&theta, &bbox, &mut rng);
        if solve_lp(&plp.instantiate(&t)).map_err(MplpError::from)?.status == LpStatus::Optimal {
            seeds.push(t);
        }
    }
    if seeds.is_empty() {
        return Err(PeriodError::NoFeasibleSeed);
    }
    let store = enumerate_regions(&plp, &seeds, &opts.enumerate)?;
    info!("period store: {} regions, coverage {:.4}", store.regions.len(), store.coverage.fraction);
    Ok(PeriodRegionStore { config: problem.config.clone(), envelope: envelope.clone(), store })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_are_consistent() {
        let pl = ParamLayout { n_s: 4 };
        assert_eq!(pl.len(), 20);
        assert_eq!(pl.names().len(), 20);
        assert_eq!(pl.names()[pl.dtau_r()], "dtau_r");
        assert_eq!(pl.names()[pl.q_grid()], "q_grid");
        let vl = VarLayout { n_s: 4 };
        assert_eq!(vl.names().len(), vl.len());
        assert_eq!(vl.names()[VarLayout::SOC_2], "soc_2");
    }

    #[test]
    fn envelope_theta_is_nonempty() {
        let cfg = PeriodConfig::default();
        let env = Envelope::default_for(&cfg);
        let th = env.theta(cfg.n_s);
        assert!(!th.is_empty().unwrap());
    }
}
