//! Simulation configuration, named presets and the flat `key=value` format.
//!
//! A configuration is built from an ordered list of `(key, value)` pairs.
//! `preset` and `algo` pick the starting values (last occurrence wins); every
//! other key then overrides in order. [`SimConfig::to_text`] writes every key,
//! so an echoed file reproduces the run on its own.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fields::{load_grid, synthetic_terrain, FieldModel};

pub const PRESETS: [&str; 3] = ["multi-gauss", "altitude", "time-varying"];

pub const FULL_SCALE_TRIALS: usize = 200;
pub const FULL_SCALE_ITERATIONS: usize = 15_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Dchypass,
    Dmklms,
    FatcKlms,
    RffDklms,
    Central,
    Local,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Self::Dchypass,
        Self::Dmklms,
        Self::FatcKlms,
        Self::RffDklms,
        Self::Central,
        Self::Local,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Dchypass => "dchypass",
            Self::Dmklms => "dmklms",
            Self::FatcKlms => "fatc-klms",
            Self::RffDklms => "rff-dklms",
            Self::Central => "central",
            Self::Local => "local",
        }
    }

    /// Uses hyperslab projections (and hence `ε`).
    pub fn is_projection_based(self) -> bool {
        matches!(self, Self::Dchypass | Self::Central | Self::Local)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config {
                key: "algo".into(),
                message: format!(
                    "unknown algorithm `{s}` (expected dchypass, dmklms, fatc-klms, rff-dklms, central or local)"
                ),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSpec {
    MultiGauss,
    TimeVarying,
    /// Gridded data from `grid`, or the synthetic terrain when unset.
    Grid,
}

impl FieldSpec {
    pub fn name(self) -> &'static str {
        match self {
            Self::MultiGauss => "multi-gauss",
            Self::TimeVarying => "time-varying",
            Self::Grid => "grid",
        }
    }
}

impl FromStr for FieldSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi-gauss" => Ok(Self::MultiGauss),
            "time-varying" => Ok(Self::TimeVarying),
            "grid" => Ok(Self::Grid),
            _ => Err(Error::Config {
                key: "field".into(),
                message: format!(
                    "unknown field `{s}` (expected multi-gauss, time-varying or grid)"
                ),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixingKind {
    MetropolisHastings,
    /// `G = I`: nodes never exchange anything.
    Identity,
}

impl MixingKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::MetropolisHastings => "metropolis-hastings",
            Self::Identity => "identity",
        }
    }
}

impl FromStr for MixingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "metropolis-hastings" => Ok(Self::MetropolisHastings),
            "identity" => Ok(Self::Identity),
            _ => Err(Error::Config {
                key: "mixing".into(),
                message: format!("unknown mixing `{s}` (expected metropolis-hastings or identity)"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub preset: String,
    pub algorithm: Algorithm,
    pub nodes: usize,
    pub radius: f64,
    pub field: FieldSpec,
    pub grid: Option<PathBuf>,
    pub noise_var: f64,
    pub bandwidths: Vec<f64>,
    pub tau: f64,
    pub gamma: f64,
    pub mu: f64,
    /// Step size used by the threshold sweep whenever `ε > 0`.
    pub mu_slab: Option<f64>,
    pub epsilon: f64,
    pub iterations: usize,
    pub trials: usize,
    pub seed: u64,
    pub nmse_grid: usize,
    pub nmse_every: usize,
    pub rff_features: usize,
    pub select: Option<usize>,
    pub mixing: MixingKind,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::preset("multi-gauss", Algorithm::Dchypass).expect("built-in preset")
    }
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        message: message.into(),
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| config_err(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    if value.is_empty() || value == "none" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn show_optional<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".into(), |v| v.to_string())
}

impl SimConfig {
    /// Parameter table values for a named experiment and algorithm.
    pub fn preset(name: &str, algorithm: Algorithm) -> Result<Self> {
        use Algorithm::*;
        let mut c = Self {
            preset: name.to_string(),
            algorithm,
            nodes: 60,
            radius: 0.3,
            field: FieldSpec::MultiGauss,
            grid: None,
            noise_var: 0.3,
            bandwidths: vec![0.1, 0.3],
            tau: 0.95,
            gamma: 0.0,
            mu: 0.2,
            mu_slab: None,
            epsilon: 0.0,
            iterations: 2000,
            trials: 20,
            seed: 1,
            nmse_grid: 50,
            nmse_every: 1,
            rff_features: 100,
            select: None,
            mixing: MixingKind::MetropolisHastings,
        };
        match name {
            "multi-gauss" => match algorithm {
                Dchypass | Local => c.mu_slab = Some(0.5),
                Dmklms => c.mu = 0.1,
                Central => c.mu = 3.3e-3,
                FatcKlms => {
                    c.mu = 0.07;
                    c.tau = 0.9;
                    c.bandwidths = vec![0.2];
                }
                RffDklms => {
                    c.mu = 0.1;
                    c.bandwidths = vec![0.2];
                }
            },
            "altitude" => {
                c.nodes = 200;
                c.radius = 0.2;
                c.field = FieldSpec::Grid;
                c.tau = 0.85;
                c.bandwidths = vec![0.06, 0.1];
                match algorithm {
                    Dchypass | Local => c.mu = 0.5,
                    Dmklms => c.mu = 0.05,
                    Central => c.mu = 0.2 / c.nodes as f64,
                    FatcKlms => {
                        c.mu = 0.05;
                        c.tau = 0.78;
                        c.bandwidths = vec![0.08];
                    }
                    RffDklms => {
                        c.mu = 0.2;
                        c.rff_features = 200;
                        c.bandwidths = vec![0.08];
                    }
                }
            }
            "time-varying" => {
                c.nodes = 80;
                c.field = FieldSpec::TimeVarying;
                match algorithm {
                    Dchypass | Local => c.mu = 0.5,
                    Dmklms => c.mu = 0.1,
                    Central => c.mu = 0.2 / c.nodes as f64,
                    FatcKlms => {
                        c.mu = 0.07;
                        c.tau = 0.9;
                        c.bandwidths = vec![0.2];
                    }
                    RffDklms => {
                        c.mu = 0.1;
                        c.bandwidths = vec![0.2];
                    }
                }
            }
            other => return Err(Error::UnknownPreset(other.to_string())),
        }
        Ok(c)
    }

    /// Builds from ordered pairs; see the module docs.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self> {
        let mut preset = "multi-gauss".to_string();
        let mut algo = Algorithm::Dchypass;
        for (k, v) in pairs {
            match k.as_ref() {
                "preset" => preset = v.as_ref().to_string(),
                "algo" => algo = v.as_ref().parse()?,
                _ => {}
            }
        }
        let mut c = Self::preset(&preset, algo)?;
        for (k, v) in pairs {
            c.set(k.as_ref(), v.as_ref())?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(line, format!("line {}: expected key=value", i + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(pairs)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_pairs(&Self::parse_pairs(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Applies one override. `preset` and `algo` are recorded but do not
    /// re-expand the table; use [`SimConfig::from_pairs`] for that.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "preset" => {
                if !PRESETS.contains(&value) {
                    return Err(Error::UnknownPreset(value.to_string()));
                }
                self.preset = value.to_string();
            }
            "algo" => self.algorithm = value.parse()?,
            "nodes" => self.nodes = parse_num(key, value)?,
            "radius" => self.radius = parse_num(key, value)?,
            "field" => self.field = value.parse()?,
            "grid" => self.grid = parse_optional::<PathBuf>(key, value)?,
            "noise_var" => self.noise_var = parse_num(key, value)?,
            "bandwidths" => {
                self.bandwidths = value
                    .split(',')
                    .map(|t| parse_num(key, t.trim()))
                    .collect::<Result<_>>()?
            }
            "tau" => self.tau = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "mu" => self.mu = parse_num(key, value)?,
            "mu_slab" => self.mu_slab = parse_optional(key, value)?,
            "epsilon" => self.epsilon = parse_num(key, value)?,
            "iterations" => self.iterations = parse_num(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "nmse_grid" => self.nmse_grid = parse_num(key, value)?,
            "nmse_every" => self.nmse_every = parse_num(key, value)?,
            "rff_features" => self.rff_features = parse_num(key, value)?,
            "select" => self.select = parse_optional(key, value)?,
            "mixing" => self.mixing = value.parse()?,
            _ => return Err(config_err(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(config_err(key, msg))
            }
        };
        check(self.nodes >= 2, "nodes", "need at least 2 nodes")?;
        check(
            self.radius > 0.0 && self.radius <= std::f64::consts::SQRT_2,
            "radius",
            "must lie in (0, √2]",
        )?;
        check(self.noise_var >= 0.0, "noise_var", "must be nonnegative")?;
        check(
            !self.bandwidths.is_empty() && self.bandwidths.iter().all(|&b| b > 0.0),
            "bandwidths",
            "need at least one positive bandwidth",
        )?;
        check(
            self.tau > 0.0 && self.tau <= 1.0,
            "tau",
            "must lie in (0, 1]",
        )?;
        check(self.gamma >= 0.0, "gamma", "must be nonnegative")?;
        check(self.epsilon >= 0.0, "epsilon", "must be nonnegative")?;
        check(self.mu > 0.0, "mu", "must be positive")?;
        if matches!(self.algorithm, Algorithm::Dchypass | Algorithm::Local) {
            check(self.mu < 2.0, "mu", "APSM step size must lie in (0, 2)")?;
            if let Some(m) = self.mu_slab {
                check(
                    m > 0.0 && m < 2.0,
                    "mu_slab",
                    "APSM step size must lie in (0, 2)",
                )?;
            }
        }
        if self.algorithm == Algorithm::FatcKlms {
            check(
                self.bandwidths.len() == 1,
                "bandwidths",
                "fatc-klms uses a single kernel",
            )?;
        }
        check(self.iterations >= 1, "iterations", "must be at least 1")?;
        check(self.trials >= 1, "trials", "must be at least 1")?;
        check(self.nmse_grid >= 2, "nmse_grid", "must be at least 2")?;
        check(self.nmse_every >= 1, "nmse_every", "must be at least 1")?;
        check(self.rff_features >= 1, "rff_features", "must be at least 1")?;
        check(self.select != Some(0), "select", "must be at least 1")?;
        Ok(())
    }

    pub fn full_scale(&mut self) {
        self.trials = FULL_SCALE_TRIALS;
        self.iterations = FULL_SCALE_ITERATIONS;
    }

    pub fn build_field(&self) -> Result<FieldModel> {
        Ok(match self.field {
            FieldSpec::MultiGauss => FieldModel::multi_gauss_default(),
            FieldSpec::TimeVarying => FieldModel::TimeVarying,
            FieldSpec::Grid => match &self.grid {
                Some(path) => load_grid(path)?,
                None => FieldModel::Grid(synthetic_terrain(31, 31)?),
            },
        })
    }

    pub fn to_text(&self) -> String {
        let bw: Vec<String> = self.bandwidths.iter().map(|b| b.to_string()).collect();
        let grid = self
            .grid
            .as_ref()
            .map_or_else(|| "none".into(), |p| p.display().to_string());
        format!(
            "preset={}\nalgo={}\nnodes={}\nradius={}\nfield={}\ngrid={}\nnoise_var={}\n\
             bandwidths={}\ntau={}\ngamma={}\nmu={}\nmu_slab={}\nepsilon={}\niterations={}\n\
             trials={}\nseed={}\nnmse_grid={}\nnmse_every={}\nrff_features={}\nselect={}\nmixing={}\n",
            self.preset,
            self.algorithm,
            self.nodes,
            self.radius,
            self.field.name(),
            grid,
            self.noise_var,
            bw.join(","),
            self.tau,
            self.gamma,
            self.mu,
            show_optional(&self.mu_slab),
            self.epsilon,
            self.iterations,
            self.trials,
            self.seed,
            self.nmse_grid,
            self.nmse_every,
            self.rff_features,
            show_optional(&self.select),
            self.mixing.name(),
        )
    }
}
