//! Experiment configuration: a flat `key = value` file with `[section]` headers,
//! overridden by command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sevtrade_core::margin::{RhoOverrides, DEFAULT_RHO_QUANTILE};
use sevtrade_core::model::ModelParams;
use sevtrade_core::tradeoff::{log_grid, DEFAULT_GRID_COUNT, DEFAULT_GRID_HI, DEFAULT_GRID_LO};
use sevtrade_core::ExtendedMu;

use crate::error::{CliError, CliResult};

pub const DEFAULT_SAMPLES: usize = 20_000;
pub const DEFAULT_OUT_DIR: &str = "out";

/// Log-spaced `lo:hi:count`; `0` and `∞` are always added.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lo: DEFAULT_GRID_LO,
            hi: DEFAULT_GRID_HI,
            count: DEFAULT_GRID_COUNT,
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> CliResult<Vec<ExtendedMu>> {
        log_grid(self.lo, self.hi, self.count).map_err(|e| CliError::Config(e.to_string()))
    }
}

impl FromStr for GridSpec {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let bad = || CliError::Config(format!("mu grid must look like lo:hi:count, got '{s}'"));
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let [lo, hi, count] = parts.as_slice() else {
            return Err(bad());
        };
        let spec = GridSpec {
            lo: lo.parse().map_err(|_| bad())?,
            hi: hi.parse().map_err(|_| bad())?,
            count: count.parse().map_err(|_| bad())?,
        };
        spec.points()?;
        Ok(spec)
    }
}

/// A model parameter swept over explicit values: `name=lo:hi:count` (linear) or
/// `name=v1,v2,...`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<f64>,
}

impl FromStr for SweepSpec {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let bad = |why: &str| CliError::Config(format!("bad sweep '{s}': {why}"));
        let (param, body) = s
            .split_once('=')
            .ok_or_else(|| bad("expected name=lo:hi:count or name=v1,v2,..."))?;
        let param = param.trim();
        if param.is_empty() {
            return Err(bad("empty parameter name"));
        }
        let num = |t: &str| -> CliResult<f64> {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(&format!("'{t}' is not a finite number")))
        };
        let values = if body.contains(':') {
            let parts: Vec<&str> = body.split(':').collect();
            let [lo, hi, count] = parts.as_slice() else {
                return Err(bad("range must be lo:hi:count"));
            };
            let (lo, hi) = (num(lo)?, num(hi)?);
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| bad("count must be an integer"))?;
            match count {
                0 => return Err(bad("count must be at least 1")),
                1 => vec![lo],
                _ => (0..count)
                    .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                    .collect(),
            }
        } else {
            body.split(',').map(num).collect::<CliResult<Vec<f64>>>()?
        };
        Ok(SweepSpec {
            param: param.to_string(),
            values,
        })
    }
}

/// Everything that determines the numbers a run produces. Output location and
/// thread count are kept outside, since they do not change results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub model: String,
    pub params: BTreeMap<String, String>,
    pub samples: usize,
    pub seed: u64,
    pub mu_grid: GridSpec,
    pub rho_min: Option<f64>,
    pub rho_max: Option<f64>,
    pub rho_quantile: f64,
    pub sweep: Option<SweepSpec>,
    pub probes: Vec<String>,
    pub gnuplot: bool,
}

impl ExperimentConfig {
    pub fn model_params(&self) -> ModelParams {
        let mut p = ModelParams::default();
        for (k, v) in &self.params {
            p.set(k, v);
        }
        p
    }

    pub fn rho_overrides(&self) -> RhoOverrides {
        RhoOverrides {
            rho_min: self.rho_min,
            rho_max: self.rho_max,
        }
    }
}

/// Values set on the command line; `None` leaves the file or default value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub model: Option<String>,
    pub params: Vec<String>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub mu_grid: Option<String>,
    pub rho_min: Option<f64>,
    pub rho_max: Option<f64>,
    pub rho_quantile: Option<f64>,
    pub out: Option<PathBuf>,
    pub gnuplot: bool,
    pub threads: Option<usize>,
    pub sweep: Option<String>,
    pub probes: Vec<String>,
}

/// A validated configuration plus the run settings that do not affect results.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("run", &["samples", "seed", "threads", "out", "gnuplot"]),
    ("model", &["name"]),
    ("grid", &["mu_grid"]),
    ("bounds", &["rho_min", "rho_max", "rho_quantile"]),
    ("sweep", &["sweep"]),
    ("verify", &["probes"]),
];

/// Parsed config file, keyed by `(section, key)`. The `params` section accepts any
/// key; the model decides which ones it understands.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub values: BTreeMap<(String, String), String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut section: Option<String> = None;
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let at = |msg: String| CliError::Config(format!("config line {}: {msg}", lineno + 1));
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| at(format!("malformed section header '{line}'")))?
                    .trim();
                if name != "params" && !SECTIONS.iter().any(|(s, _)| *s == name) {
                    return Err(at(format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section
                .clone()
                .ok_or_else(|| at(format!("key '{key}' appears before any [section]")))?;
            if sec != "params" {
                let known = SECTIONS
                    .iter()
                    .find(|(s, _)| *s == sec)
                    .map_or(&[][..], |(_, k)| *k);
                if !known.contains(&key) {
                    return Err(at(format!("unknown key '{key}' in [{sec}]")));
                }
            }
            if values
                .insert((sec.clone(), key.to_string()), value.to_string())
                .is_some()
            {
                return Err(at(format!("duplicate key '{key}' in [{sec}]")));
            }
        }
        Ok(ConfigFile { values })
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.values
            .get(&(section.to_string(), key.to_string()))
            .map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, section: &str, key: &str) -> CliResult<Option<T>> {
        self.get(section, key)
            .map(|v| {
                v.parse().map_err(|_| {
                    CliError::Config(format!("cannot parse [{section}] {key} = '{v}'"))
                })
            })
            .transpose()
    }

    fn params(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values
            .iter()
            .filter(|((s, _), _)| s == "params")
            .map(|((_, k), v)| (k.as_str(), v.as_str()))
    }
}

fn positive(name: &str, v: Option<f64>) -> CliResult<Option<f64>> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::Config(format!(
            "{name} must be positive and finite, got {x}"
        ))),
        _ => Ok(v),
    }
}

/// Merges defaults, the optional config file and flags, then validates.
pub fn resolve(flags: &Overrides) -> CliResult<ResolvedRun> {
    let file = match &flags.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };

    let model = flags
        .model
        .clone()
        .or_else(|| file.get("model", "name").map(str::to_string))
        .ok_or_else(|| CliError::Config("no model given (use --model or [model] name)".into()))?;

    let mut params: BTreeMap<String, String> = file
        .params()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    for kv in &flags.params {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--param expects key=value, got '{kv}'")))?;
        params.insert(k.trim().to_string(), v.trim().to_string());
    }

    let samples = match flags.samples {
        Some(n) => n,
        None => file.parsed("run", "samples")?.unwrap_or(DEFAULT_SAMPLES),
    };
    if samples == 0 {
        return Err(CliError::Config("samples must be at least 1".into()));
    }
    let seed = match flags.seed {
        Some(s) => s,
        None => file.parsed("run", "seed")?.unwrap_or(0),
    };
    let threads = match flags.threads {
        Some(t) => Some(t),
        None => file.parsed("run", "threads")?,
    };
    if threads == Some(0) {
        return Err(CliError::Config("threads must be at least 1".into()));
    }
    let out_dir = flags
        .out
        .clone()
        .or_else(|| file.get("run", "out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let gnuplot = flags.gnuplot || file.parsed("run", "gnuplot")?.unwrap_or(false);

    let mu_grid = match flags
        .mu_grid
        .as_deref()
        .or_else(|| file.get("grid", "mu_grid"))
    {
        Some(s) => s.parse()?,
        None => GridSpec::default(),
    };

    let rho_min = match flags.rho_min {
        Some(v) => Some(v),
        None => file.parsed("bounds", "rho_min")?,
    };
    let rho_max = match flags.rho_max {
        Some(v) => Some(v),
        None => file.parsed("bounds", "rho_max")?,
    };
    let rho_min = positive("rho_min", rho_min)?;
    let rho_max = positive("rho_max", rho_max)?;
    if let (Some(lo), Some(hi)) = (rho_min, rho_max) {
        if lo > hi {
            return Err(CliError::Config(format!(
                "rho_min {lo} exceeds rho_max {hi}"
            )));
        }
    }
    let rho_quantile = match flags.rho_quantile {
        Some(q) => q,
        None => file
            .parsed("bounds", "rho_quantile")?
            .unwrap_or(DEFAULT_RHO_QUANTILE),
    };
    if !(rho_quantile > 0.0 && rho_quantile <= 0.05) {
        return Err(CliError::Config(format!(
            "rho_quantile must lie in (0, 0.05], got {rho_quantile}"
        )));
    }

    let sweep = match flags
        .sweep
        .as_deref()
        .or_else(|| file.get("sweep", "sweep"))
    {
        Some(s) => Some(s.parse()?),
        None => None,
    };

    let probes: Vec<String> = if flags.probes.is_empty() {
        file.get("verify", "probes")
            .map(|s| {
                s.split(';')
                    .map(str::trim)
                    .filter(|p| !p.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    } else {
        flags.probes.clone()
    };

    Ok(ResolvedRun {
        config: ExperimentConfig {
            model,
            params,
            samples,
            seed,
            mu_grid,
            rho_min,
            rho_max,
            rho_quantile,
            sweep,
            probes,
            gnuplot,
        },
        out_dir,
        threads,
    })
}
