mod config;
mod inputs;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gridflex::period::{build_period_problem, solve_offline, Envelope, OfflineOptions};
use gridflex::sim::{
    read_metrics, run_baseline, run_central, run_omniscient, value_function_rows, value_function_schedule, write_csv,
    CentralRunOptions, OmniscientOptions, RunOutput, StoreSet,
};
use gridflex::{ChartMessage, PeriodConfig, PeriodRegionStore, RunMetrics, Scenario};

use config::{Config, Mode, RawConfig};

/// Error carrying a specific process exit code.
#[derive(Debug)]
struct Exit {
    code: u8,
    msg: String,
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl std::error::Error for Exit {}

const EXIT_COVERAGE: u8 = 2;
const EXIT_MISSING_STORE: u8 = 3;

#[derive(Parser)]
#[command(name = "gridflex", version, about = "Flexibility-chart control of low-voltage feeders")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file (key = value lines, `include <file>` allowed).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output location (directory; store directory for offline-solve).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Enumerate the period policy regions for every archetype and write the stores.
    OfflineSolve(Common),
    /// Write the value functions of every market period.
    Plan {
        #[command(flatten)]
        common: Common,
        /// Only this market period.
        #[arg(long)]
        period: Option<usize>,
    },
    /// Simulate one day.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Write every tick's charts under chart_dump/ (central mode).
        #[arg(long)]
        dump_charts: bool,
        /// Write value_function.csv with the breakpoints and slopes per period.
        #[arg(long)]
        emit_value_function: bool,
    },
    /// Side-by-side table of two runs (run directories or metrics.csv files).
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Flatten one dumped step into a polygon CSV for plotting.
    ExportChart {
        /// Run directory containing chart_dump/.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        step: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(c: &Common) -> Result<Config> {
    let mut raw = match &c.config {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::default(),
    };
    if let Some(s) = c.seed {
        raw.set("seed", &s.to_string());
    }
    let mut cfg = Config::from_raw(raw)?;
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn archetypes(sc: &Scenario) -> BTreeMap<String, PeriodConfig> {
    let mut out = BTreeMap::new();
    for u in &sc.units {
        out.entry(u.archetype.clone()).or_insert_with(|| PeriodConfig {
            battery: u.battery.clone(),
            pv: u.pv.clone(),
            tariff: sc.tariff.clone(),
            n_s: sc.n_s,
            n_arc: 4,
        });
    }
    out
}

fn store_path(dir: &Path, archetype: &str) -> PathBuf {
    dir.join(format!("{archetype}.json"))
}

fn offline_solve(c: &Common) -> Result<()> {
    let mut cfg = load_config(c)?;
    if let Some(o) = &c.out {
        cfg.store_dir = o.clone();
    }
    let sc = inputs::build_scenario(&cfg)?;
    std::fs::create_dir_all(&cfg.store_dir).with_context(|| format!("cannot create {}", cfg.store_dir.display()))?;
    let mut low = Vec::new();
    for (name, mut pc) in archetypes(&sc) {
        pc.n_arc = cfg.n_arc;
        let problem = build_period_problem(&pc)?;
        let env = Envelope::default_for(&pc);
        let mut opts = OfflineOptions { seeds: cfg.offline_seeds, ..Default::default() };
        opts.enumerate.refill_rounds = cfg.refill_rounds;
        opts.enumerate.coverage_samples = cfg.coverage_samples;
        opts.enumerate.rng_seed = cfg.seed;
        opts.enumerate.budget = cfg.region_budget;
        let store = solve_offline(&problem, &env, &opts)?;
        let path = store_path(&cfg.store_dir, &name);
        store.save(&path)?;
        let cov = &store.store.coverage;
        println!(
            "archetype {name}: {} regions, coverage {:.4} ({}/{}) -> {}",
            store.store.regions.len(),
            cov.fraction,
            cov.covered_samples,
            cov.feasible_samples,
            path.display()
        );
        if cov.fraction < cfg.coverage_min {
            low.push(format!("{name} {:.4}", cov.fraction));
        }
    }
    if !low.is_empty() {
        return Err(Exit {
            code: EXIT_COVERAGE,
            msg: format!("coverage below {} for archetype(s): {}", cfg.coverage_min, low.join(", ")),
        }
        .into());
    }
    Ok(())
}

fn plan(c: &Common, period: Option<usize>) -> Result<()> {
    let cfg = load_config(c)?;
    let sc = inputs::build_scenario(&cfg)?;
    if let Some(p) = period {
        if p >= sc.num_periods() {
            bail!("period {p} outside the day (0..{})", sc.num_periods());
        }
    }
    let schedule: Vec<_> =
        value_function_schedule(&sc)?.into_iter().enumerate().filter(|(p, _)| period.is_none_or(|q| q == *p)).collect();
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("value_function.csv");
    write_csv(&path, &value_function_rows(&schedule))?;
    println!("{} period(s) x {} unit(s) -> {}", schedule.len(), sc.units.len(), path.display());
    Ok(())
}

fn load_stores(cfg: &Config, sc: &Scenario) -> Result<StoreSet> {
    let mut set = StoreSet::new();
    for name in archetypes(sc).keys() {
        let path = store_path(&cfg.store_dir, name);
        if !path.is_file() {
            return Err(Exit {
                code: EXIT_MISSING_STORE,
                msg: format!(
                    "missing store {} for archetype {name}; run `gridflex offline-solve` first",
                    path.display()
                ),
            }
            .into());
        }
        set.insert(name, PeriodRegionStore::load(&path)?);
    }
    Ok(set)
}

fn run(c: &Common, mode: Option<Mode>, dump_charts: bool, emit_vf: bool) -> Result<()> {
    let cfg = load_config(c)?;
    let mode = mode.unwrap_or(cfg.mode);
    if dump_charts && mode != Mode::Central {
        bail!("--dump-charts needs --mode central");
    }
    let sc = inputs::build_scenario(&cfg)?;
    let mut out: RunOutput = match mode {
        Mode::Central => {
            let stores = load_stores(&cfg, &sc)?;
            let opts = CentralRunOptions { keep_charts: dump_charts, keep_value_functions: emit_vf };
            run_central(&sc, &stores, &opts)?
        }
        Mode::Omniscient => run_omniscient(&sc, &OmniscientOptions { cone_tol: cfg.cone_tol, ..Default::default() })?,
        Mode::Baseline => run_baseline(&sc)?,
    };
    if emit_vf && out.value_functions.is_empty() {
        out.value_functions = value_function_schedule(&sc)?.into_iter().enumerate().collect();
    }
    out.write(&cfg.out)?;
    let m = &out.metrics;
    println!(
        "{}: cost {:.4} EUR, PV {:.3} kWh, Q {:.3} kvarh, violations {}, mean step {:.2} ms -> {}",
        m.mode,
        m.total_cost_eur,
        m.e_pv_kwh,
        m.q_prod_kvarh,
        m.voltage_violations,
        out.timing.mean_step_ms,
        cfg.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct CompareRow {
    metric: &'static str,
    a: f64,
    b: f64,
    gap_pct: Option<f64>,
}

fn metrics_file(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("metrics.csv")
    } else {
        p.to_path_buf()
    }
}

type Pick = (&'static str, fn(&RunMetrics) -> f64);

fn compare_rows(a: &RunMetrics, b: &RunMetrics) -> Vec<CompareRow> {
    let pick: [Pick; 8] = [
        ("total_cost_eur", |m| m.total_cost_eur),
        ("e_pv_kwh", |m| m.e_pv_kwh),
        ("e_ch_kwh", |m| m.e_ch_kwh),
        ("e_dis_kwh", |m| m.e_dis_kwh),
        ("q_prod_kvarh", |m| m.q_prod_kvarh),
        ("loss_kwh", |m| m.loss_kwh),
        ("voltage_violations", |m| m.voltage_violations as f64),
        ("worst_excursion_pu", |m| m.worst_excursion_pu),
    ];
    pick.iter()
        .map(|(name, f)| {
            let (x, y) = (f(a), f(b));
            let gap_pct = if x == y {
                Some(0.0)
            } else if x != 0.0 {
                Some((y - x) / x.abs() * 100.0)
            } else {
                None
            };
            CompareRow { metric: name, a: x, b: y, gap_pct }
        })
        .collect()
}

fn compare(a: &Path, b: &Path, out: Option<&Path>) -> Result<()> {
    let ma = read_metrics(&metrics_file(a)).with_context(|| format!("metrics {}", a.display()))?;
    let mb = read_metrics(&metrics_file(b)).with_context(|| format!("metrics {}", b.display()))?;
    let rows = compare_rows(&ma, &mb);
    println!("{:<20} {:>14} {:>14} {:>9}", "metric", ma.mode, mb.mode, "gap %");
    for r in &rows {
        let gap = r.gap_pct.map_or("n/a".to_string(), |g| format!("{g:.2}"));
        println!("{:<20} {:>14.4} {:>14.4} {:>9}", r.metric, r.a, r.b, gap);
    }
    if let Some(p) = out {
        write_csv(p, &rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ChartRow {
    node: usize,
    piece: usize,
    vertex: usize,
    p_kw: f64,
    q_kvar: f64,
    cost_eur: f64,
}

fn export_chart(run: &Path, step: usize, out: Option<&Path>) -> Result<()> {
    let path = run.join("chart_dump").join(format!("step_{step:05}.json"));
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let msgs: Vec<ChartMessage> =
        serde_json::from_str(&text).with_context(|| format!("chart file {}", path.display()))?;
    let mut rows = Vec::new();
    for msg in &msgs {
        let chart = msg.to_chart();
        for (k, piece) in chart.pieces.iter().enumerate() {
            for (v, &[p, q]) in piece.vertices.iter().enumerate() {
                rows.push(ChartRow {
                    node: msg.node,
                    piece: k,
                    vertex: v,
                    p_kw: p,
                    q_kvar: q,
                    cost_eur: piece.cost.at(p, q),
                });
            }
        }
    }
    let dest = out.map(Path::to_path_buf).unwrap_or_else(|| run.join(format!("chart_{step:05}.csv")));
    write_csv(&dest, &rows)?;
    println!("{} vertices of {} chart(s) -> {}", rows.len(), msgs.len(), dest.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::OfflineSolve(c) => offline_solve(c),
        Cmd::Plan { common, period } => plan(common, *period),
        Cmd::Run { common, mode, dump_charts, emit_value_function } => {
            run(common, *mode, *dump_charts, *emit_value_function)
        }
        Cmd::Compare { a, b, out } => compare(a, b, out.as_deref()),
        Cmd::ExportChart { run, step, out } => export_chart(run, *step, out.as_deref()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<Exit>().map_or(1, |x| x.code);
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(code)
        }
    }
}
