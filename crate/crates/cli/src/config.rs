//! `key = value` configuration files.
//!
//! Lines are `key = value`; `#` starts a comment. Each command accepts a
//! fixed key set and rejects anything else. Lists accept comma-separated
//! items and inclusive `start:stop:step` ranges, e.g. `N = 25:60:5, 64`.

use std::collections::BTreeMap;
use std::path::Path;

use rls_core::bench::{SolverKind, SweepConfig};
use rls_core::instance::Ensemble;
use rls_core::solvers::{RlsParams, VoteMode};

use crate::CliError;

pub const BENCH_KEYS: &[&str] = &[
    "name",
    "ensemble",
    "rho",
    "D",
    "N",
    "k",
    "sigma",
    "solvers",
    "trials",
    "seed",
    "m",
    "frac_lo",
    "frac_hi",
    "votes",
    "vote_mode",
    "rawls_m",
    "rls_fixed_n0_frac",
    "rls_fixed_m",
    "fixed_design",
    "timing",
    "plot_x",
];

pub const THEORY_KEYS: &[&str] = &["name", "D", "N", "trials", "seed", "lambdas"];

/// Environment variable consulted when no seed is given anywhere else.
pub const SEED_ENV: &str = "RLS_SEED";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CliConfig {
    values: BTreeMap<String, String>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl CliConfig {
    pub fn parse(text: &str, allowed: &[&str]) -> Result<Self, CliError> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected 'key = value'", i + 1)))?;
            let key = key.trim();
            if !allowed.contains(&key) {
                return Err(usage(format!("config line {}: unknown key '{key}'", i + 1)));
            }
            if config.values.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(usage(format!("config line {}: duplicate key '{key}'", i + 1)));
            }
        }
        Ok(config)
    }

    pub fn load(path: &Path, allowed: &[&str]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, allowed)
    }

    /// Command-line override; replaces any file value.
    pub fn set(&mut self, key: &str, value: &str, allowed: &[&str]) -> Result<(), CliError> {
        if !allowed.contains(&key) {
            return Err(usage(format!("unknown key '{key}'")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| usage(format!("bad value for '{key}': '{v}'"))))
            .transpose()
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.parsed(key)?.ok_or_else(|| usage(format!("missing required key '{key}'")))
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(usage(format!("bad boolean for '{key}': '{v}'"))),
        }
    }
}

/// Splits on commas that are not inside `[...]`.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let (mut depth, mut start) = (0usize, 0usize);
    for (i, c) in s.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(s[start..].trim());
    parts.retain(|p| !p.is_empty());
    parts
}

/// Parses `a, b, start:stop:step, ...` into integers (ranges inclusive).
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || usage(format!("bad integer list '{s}'"));
    let mut out = Vec::new();
    for item in split_top_level(s) {
        let fields: Vec<&str> = item.split(':').map(str::trim).collect();
        match fields.as_slice() {
            [v] => out.push(v.parse().map_err(|_| bad())?),
            [a, b] | [a, b, _] => {
                let start: usize = a.parse().map_err(|_| bad())?;
                let stop: usize = b.parse().map_err(|_| bad())?;
                let step: usize = match fields.get(2) {
                    Some(st) => st.parse().map_err(|_| bad())?,
                    None => 1,
                };
                if step == 0 || stop < start {
                    return Err(bad());
                }
                out.extend((start..=stop).step_by(step));
            }
            _ => return Err(bad()),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// Like [`parse_usize_list`] for reals; ranges stop at `stop` up to a
/// relative 1e-9 slack and values are rounded to 12 decimals.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || usage(format!("bad number list '{s}'"));
    let tidy = |v: f64| (v * 1e12).round() / 1e12;
    let mut out = Vec::new();
    for item in split_top_level(s) {
        let fields: Vec<f64> = item
            .split(':')
            .map(|f| f.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        match fields.as_slice() {
            [v] => out.push(*v),
            [start, stop, step] => {
                if step.is_nan() || *step <= 0.0 || stop < start {
                    return Err(bad());
                }
                let count = ((stop - start) / step * (1.0 + 1e-9)).floor() as usize;
                out.extend((0..=count).map(|i| tidy(start + step * i as f64)));
            }
            _ => return Err(bad()),
        }
    }
    if out.is_empty() || out.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(out)
}

/// What the x column of a plot-data file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotAxis {
    N,
    K,
    /// `n0 / N` of fixed-size RLS runs, one curve per `m`.
    N0Frac,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub name: String,
    /// One sweep per noise level, in config order.
    pub sweeps: Vec<SweepConfig>,
    pub timing: bool,
    pub plot_x: PlotAxis,
}

fn parse_ensemble(config: &CliConfig) -> Result<Ensemble, CliError> {
    let name = config.get("ensemble").unwrap_or("gaussian");
    let rho: Option<f64> = config.parsed("rho")?;
    let ensemble = match (name, rho) {
        ("toeplitz", Some(rho)) => Ensemble::Toeplitz { rho },
        (_, Some(_)) => return Err(usage("'rho' only applies to the toeplitz ensemble")),
        (name, None) => name.parse().map_err(|e: rls_core::Error| usage(e.to_string()))?,
    };
    ensemble.validate().map_err(|e| usage(e.to_string()))?;
    Ok(ensemble)
}

fn seed_or_env(config: &CliConfig) -> Result<u64, CliError> {
    if let Some(seed) = config.parsed("seed")? {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| usage(format!("bad {SEED_ENV} value '{v}'"))),
        Err(_) => Ok(0),
    }
}

impl BenchPlan {
    pub fn from_config(config: &CliConfig, default_name: &str) -> Result<Self, CliError> {
        let name = config.get("name").unwrap_or(default_name).to_string();
        let ensemble = parse_ensemble(config)?;
        let d: usize = config.required("D")?;
        let n_values = parse_usize_list(config.get("N").ok_or_else(|| usage("missing required key 'N'"))?)?;
        let k_values = parse_usize_list(config.get("k").ok_or_else(|| usage("missing required key 'k'"))?)?;
        let sigmas = parse_f64_list(config.get("sigma").unwrap_or("0.5"))?;

        let mut solvers = match config.get("solvers") {
            Some(list) => split_top_level(list)
                .into_iter()
                .map(|s| s.parse::<SolverKind>().map_err(|e| usage(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?,
            None => Vec::new(),
        };
        if let Some(fracs) = config.get("rls_fixed_n0_frac") {
            let fracs = parse_f64_list(fracs)?;
            let ms = parse_usize_list(config.get("rls_fixed_m").unwrap_or("100"))?;
            let [n] = n_values.as_slice() else {
                return Err(usage("rls_fixed_n0_frac needs exactly one N value"));
            };
            for &m in &ms {
                for &f in &fracs {
                    if !(f > 0.0 && f <= 1.0) {
                        return Err(usage(format!("rls_fixed_n0_frac {f} outside (0, 1]")));
                    }
                    let n0 = ((f * *n as f64).round() as usize).max(1);
                    solvers.push(SolverKind::RlsFixed { n0, m });
                }
            }
        } else if config.get("rls_fixed_m").is_some() {
            return Err(usage("rls_fixed_m needs rls_fixed_n0_frac"));
        }

        let defaults = RlsParams::default();
        let vote_mode = match config.get("vote_mode") {
            None | Some("per_step") => VoteMode::PerStep,
            Some("full_peel") => VoteMode::FullPeel,
            Some(v) => return Err(usage(format!("bad vote_mode '{v}' (per_step | full_peel)"))),
        };
        let rls_params = RlsParams {
            m: config.parsed("m")?.unwrap_or(defaults.m),
            frac_lo: config.parsed("frac_lo")?.unwrap_or(defaults.frac_lo),
            frac_hi: config.parsed("frac_hi")?.unwrap_or(defaults.frac_hi),
            votes: config.parsed("votes")?.unwrap_or(defaults.votes),
            seed: 0,
            vote_mode,
        };
        let base = SweepConfig {
            ensemble,
            d,
            n_values,
            k_values,
            sigma: 0.0,
            solvers,
            trials: config.parsed("trials")?.unwrap_or(200),
            base_seed: seed_or_env(config)?,
            rawls_m: config.parsed("rawls_m")?.unwrap_or(rls_params.m),
            rls_params,
            fixed_design: config.bool_or("fixed_design", false)?,
        };
        let sweeps: Vec<SweepConfig> = sigmas.iter().map(|&sigma| SweepConfig { sigma, ..base.clone() }).collect();
        for sweep in &sweeps {
            sweep.validate().map_err(|e| usage(e.to_string()))?;
        }

        let plot_x = match config.get("plot_x") {
            Some("N") => PlotAxis::N,
            Some("k") => PlotAxis::K,
            Some("n0_frac") => PlotAxis::N0Frac,
            Some(v) => return Err(usage(format!("bad plot_x '{v}' (N | k | n0_frac)"))),
            None if base.n_values.len() > 1 => PlotAxis::N,
            None if base.k_values.len() > 1 => PlotAxis::K,
            None if base.solvers.iter().any(|s| matches!(s, SolverKind::RlsFixed { .. })) => PlotAxis::N0Frac,
            None => PlotAxis::N,
        };

        Ok(Self { name, sweeps, timing: config.bool_or("timing", false)?, plot_x })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryPlan {
    pub name: String,
    pub d: usize,
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub lambdas: Vec<f64>,
}

impl TheoryPlan {
    pub fn from_config(config: &CliConfig, default_name: &str) -> Result<Self, CliError> {
        let d: usize = config.required("D")?;
        let n_values = parse_usize_list(config.get("N").ok_or_else(|| usage("missing required key 'N'"))?)?;
        if let Some(n) = n_values.iter().find(|&&n| n == 0 || n >= d) {
            return Err(usage(format!("every N must satisfy 0 < N < D={d}, got {n}")));
        }
        let trials: usize = config.parsed("trials")?.unwrap_or(100);
        if trials < 2 {
            return Err(usage("theory needs at least 2 trials"));
        }
        let lambdas = parse_f64_list(config.get("lambdas").unwrap_or("0.1, 0.3, 0.5, 0.7, 0.9"))?;
        if let Some(l) = lambdas.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
            return Err(usage(format!("lambda {l} outside (0, 1)")));
        }
        Ok(Self {
            name: config.get("name").unwrap_or(default_name).to_string(),
            d,
            n_values,
            trials,
            seed: seed_or_env(config)?,
            lambdas,
        })
    }
}
