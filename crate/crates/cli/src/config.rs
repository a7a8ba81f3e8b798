use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

/// Flat `key = value` settings. `include <path>` pulls in another file
/// (relative to the including file); later keys override earlier ones.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    values: BTreeMap<String, (String, PathBuf)>,
}

impl RawConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut raw = RawConfig::default();
        raw.read(path, 0)?;
        Ok(raw)
    }

    #[cfg(test)]
    pub fn parse_str(text: &str, base: &Path) -> Result<Self> {
        let mut raw = RawConfig::default();
        raw.parse_into(text, base, "<inline>", 0)?;
        Ok(raw)
    }

    fn read(&mut self, path: &Path, depth: usize) -> Result<()> {
        if depth > 16 {
            bail!("include depth exceeded at {}", path.display());
        }
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        self.parse_into(&text, &base, &path.display().to_string(), depth)
    }

    fn parse_into(&mut self, text: &str, base: &Path, name: &str, depth: usize) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("include ") {
                self.read(&base.join(rest.trim()), depth + 1)?;
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("{name}:{}: expected key = value", no + 1))?;
            let k = k.trim();
            if k.is_empty() {
                bail!("{name}:{}: empty key", no + 1);
            }
            self.values.insert(k.to_string(), (v.trim().to_string(), base.to_path_buf()));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.values.insert(key.to_string(), (value.to_string(), PathBuf::from(".")));
    }

    fn take(&mut self, key: &str) -> Option<(String, PathBuf)> {
        self.values.remove(key)
    }

    fn num<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.take(key) {
            None => Ok(default),
            Some((v, _)) => v.parse().map_err(|_| anyhow!("config key {key}: cannot parse {v:?}")),
        }
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        self.take(key).map(|(v, base)| base.join(v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Central,
    Omniscient,
    Baseline,
}

#[derive(Clone, Debug)]
pub struct Config {
    pub feeder: Option<PathBuf>,
    /// `nominal` or `weak`, used when no feeder file is given.
    pub preset: String,
    pub loads: Option<PathBuf>,
    pub irradiance: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub store_dir: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub n_units: usize,
    pub start_hour: usize,
    pub hours: usize,
    pub n_s: usize,
    pub n_arc: usize,
    pub forecast_sigma: f64,
    pub pv_scale: f64,
    pub load_scale: f64,
    pub offline_seeds: usize,
    pub refill_rounds: usize,
    pub coverage_samples: usize,
    /// Maximum stored regions per archetype.
    pub region_budget: usize,
    pub coverage_min: f64,
    pub cone_tol: f64,
    pub mode: Mode,
}

impl Config {
    pub fn from_raw(mut raw: RawConfig) -> Result<Self> {
        let mode = match raw.take("mode").map(|v| v.0) {
            None => Mode::Central,
            Some(m) => {
                <Mode as clap::ValueEnum>::from_str(&m, true).map_err(|_| anyhow!("config key mode: unknown {m:?}"))?
            }
        };
        let cfg = Config {
            feeder: raw.path("feeder"),
            preset: raw.take("preset").map(|v| v.0).unwrap_or_else(|| "nominal".into()),
            loads: raw.path("loads"),
            irradiance: raw.path("irradiance"),
            prices: raw.path("prices"),
            store_dir: raw.path("store_dir").unwrap_or_else(|| PathBuf::from("stores")),
            out: raw.path("out").unwrap_or_else(|| PathBuf::from("out")),
            seed: raw.num("seed", 1)?,
            n_units: raw.num("n_units", 4)?,
            start_hour: raw.num("start_hour", 0)?,
            hours: raw.num("hours", 24)?,
            n_s: raw.num("n_s", 4)?,
            n_arc: raw.num("n_arc", 4)?,
            forecast_sigma: raw.num("forecast_sigma", 0.0)?,
            pv_scale: raw.num("pv_scale", 1.0)?,
            load_scale: raw.num("load_scale", 1.0)?,
            offline_seeds: raw.num("offline_seeds", 20)?,
            refill_rounds: raw.num("refill_rounds", 30)?,
            coverage_samples: raw.num("coverage_samples", 1000)?,
            region_budget: raw.num("region_budget", 100_000)?,
            coverage_min: raw.num("coverage_min", 0.95)?,
            cone_tol: raw.num("cone_tol", 1e-5)?,
            mode,
        };
        if let Some(k) = raw.values.keys().next() {
            bail!("unknown config key {k}");
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        for p in [&self.feeder, &self.loads, &self.irradiance, &self.prices].into_iter().flatten() {
            if !p.is_file() {
                bail!("referenced file {} does not exist", p.display());
            }
        }
        if !matches!(self.preset.as_str(), "nominal" | "weak") {
            bail!("preset must be nominal or weak, got {:?}", self.preset);
        }
        let checks = [
            (self.n_units >= 1 && self.n_units <= 64, "n_units must be in 1..=64"),
            (self.start_hour < 24, "start_hour must be below 24"),
            (self.hours >= 1 && self.start_hour + self.hours <= 24, "start_hour + hours must be in 1..=24"),
            ((1..=8).contains(&self.n_s), "n_s must be in 1..=8"),
            ((1..=16).contains(&self.n_arc), "n_arc must be in 1..=16"),
            ((0.0..=1.0).contains(&self.forecast_sigma), "forecast_sigma must be in [0, 1]"),
            (self.pv_scale >= 0.0 && self.load_scale >= 0.0, "pv_scale and load_scale must be non-negative"),
            (self.region_budget >= 1, "region_budget must be positive"),
            (self.offline_seeds >= 1, "offline_seeds must be positive"),
            ((0.0..=1.0).contains(&self.coverage_min), "coverage_min must be in [0, 1]"),
            (self.cone_tol > 0.0 && self.cone_tol < 1e-2, "cone_tol must be in (0, 0.01)"),
        ];
        for (ok, msg) in checks {
            if !ok {
                bail!("{msg}");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_values_and_comments() {
        let raw = RawConfig::parse_str("seed = 7 # run seed\n\nn_s=2\npreset = weak\n", Path::new(".")).unwrap();
        let cfg = Config::from_raw(raw).unwrap();
        assert_eq!((cfg.seed, cfg.n_s, cfg.preset.as_str()), (7, 2, "weak"));
        assert_eq!(cfg.mode, Mode::Central);
    }

    #[test]
    fn rejects_unknown_and_out_of_range() {
        let raw = RawConfig::parse_str("colour = red\n", Path::new(".")).unwrap();
        assert!(Config::from_raw(raw).unwrap_err().to_string().contains("colour"));
        let raw = RawConfig::parse_str("n_s = 0\n", Path::new(".")).unwrap();
        assert!(Config::from_raw(raw).is_err());
        assert!(RawConfig::parse_str("just words\n", Path::new(".")).is_err());
    }

    #[test]
    fn include_is_relative_and_overridable() {
        let dir = std::env::temp_dir().join(format!("gridflex-cfg-{}", std::process::id()));
        fs::create_dir_all(dir.join("sub")).unwrap();
        fs::write(dir.join("sub/base.conf"), "seed = 3\nn_s = 3\nstore_dir = st\n").unwrap();
        fs::write(dir.join("main.conf"), "include sub/base.conf\nseed = 5\n").unwrap();
        let cfg = Config::from_raw(RawConfig::load(&dir.join("main.conf")).unwrap()).unwrap();
        assert_eq!((cfg.seed, cfg.n_s), (5, 3));
        assert_eq!(cfg.store_dir, dir.join("sub").join("st"));
        fs::remove_dir_all(&dir).ok();
    }
}
