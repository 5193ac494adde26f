//! Resolved run configuration, built from `key=value` layers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use parapde::select::{SweepOptions, LOSS_FLOOR};
use parapde::{Axis, DiffMethod, Method};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Generate,
    Discover,
    Compare,
}

impl Command {
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Command::Generate => GENERATE_KEYS,
            Command::Discover => DISCOVER_KEYS,
            Command::Compare => COMPARE_KEYS,
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Generate => "generate",
            Command::Discover => "discover",
            Command::Compare => "compare",
        })
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "generate" => Ok(Command::Generate),
            "discover" => Ok(Command::Discover),
            "compare" => Ok(Command::Compare),
            other => Err(format!("unknown command `{other}`")),
        }
    }
}

const GENERATE_KEYS: &[&str] = &["command", "model", "out", "noise", "seed"];

const DISCOVER_KEYS: &[&str] = &[
    "command",
    "data",
    "out",
    "seed",
    "axis",
    "method",
    "space_method",
    "time_method",
    "max_power",
    "max_derivative",
    "include_constant",
    "count",
    "ridge",
    "validation_fraction",
    "lambda_ratio",
    "loss_floor",
    "sample_points",
    "sample_every",
    "sample_seed",
];

const COMPARE_KEYS: &[&str] = &[
    "command",
    "data",
    "out",
    "seed",
    "axis",
    "space_method",
    "time_method",
    "max_power",
    "max_derivative",
    "include_constant",
    "count",
    "ridge",
    "validation_fraction",
    "lambda_ratio",
    "loss_floor",
    "sample_points",
    "sample_every",
    "sample_seed",
];

/// Everything a run needs. `seed` is the noise seed for `generate` and the
/// validation-split seed otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub model: String,
    pub data: PathBuf,
    pub out: PathBuf,
    pub noise: f64,
    pub seed: u64,
    pub axis: Axis,
    pub method: Method,
    /// `None` picks spectral on periodic grids and central differences otherwise.
    pub space_method: Option<DiffMethod>,
    pub time_method: DiffMethod,
    pub max_power: u32,
    pub max_derivative: u8,
    pub include_constant: bool,
    pub count: usize,
    pub ridge: f64,
    pub validation_fraction: f64,
    pub lambda_ratio: f64,
    pub loss_floor: f64,
    pub sample_points: usize,
    pub sample_every: usize,
    pub sample_seed: u64,
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        let sweep = SweepOptions::default();
        Self {
            command,
            model: String::new(),
            data: PathBuf::new(),
            out: PathBuf::new(),
            noise: 0.0,
            seed: 0,
            axis: Axis::Time,
            method: Method::Sgtr,
            space_method: None,
            time_method: DiffMethod::CentralFd,
            max_power: 3,
            max_derivative: 4,
            include_constant: true,
            count: sweep.count,
            ridge: sweep.ridge,
            validation_fraction: sweep.validation_fraction,
            lambda_ratio: sweep.lambda_ratio,
            loss_floor: LOSS_FLOOR,
            sample_points: 1000,
            sample_every: 10,
            sample_seed: 0,
        }
    }

    /// Applies `layers` in order over the defaults; later layers win.
    pub fn resolve(
        command: Command,
        layers: &[BTreeMap<String, String>],
    ) -> Result<Self, CliError> {
        let mut merged = BTreeMap::new();
        for layer in layers {
            for (k, v) in layer {
                merged.insert(k.clone(), v.clone());
            }
        }
        let allowed = command.keys();
        let unknown: Vec<&String> = merged
            .keys()
            .filter(|k| !allowed.contains(&k.as_str()))
            .collect();
        if !unknown.is_empty() {
            let names: Vec<&str> = unknown.iter().map(|k| k.as_str()).collect();
            return Err(CliError::usage(format!(
                "unknown key(s) for `{command}`: {}",
                names.join(", ")
            )));
        }
        let mut cfg = Self::defaults(command);
        for (k, v) in &merged {
            cfg.set(k, v)
                .map_err(|e| CliError::usage(format!("`{k}={v}`: {e}")))?;
        }
        if cfg.command != command {
            return Err(CliError::usage(format!(
                "configuration is for `{}`, not `{command}`",
                cfg.command
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse `{v}`"))
        }
        match key {
            "command" => self.command = value.parse()?,
            "model" => self.model = value.to_string(),
            "data" => self.data = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "noise" => self.noise = num(value)?,
            "seed" => self.seed = num(value)?,
            "axis" => self.axis = value.parse().map_err(|e: parapde::Error| e.to_string())?,
            "method" => self.method = value.parse().map_err(|e: parapde::Error| e.to_string())?,
            "space_method" => {
                self.space_method = match value {
                    "auto" => None,
                    v => Some(v.parse().map_err(|e: parapde::Error| e.to_string())?),
                }
            }
            "time_method" => {
                self.time_method = value.parse().map_err(|e: parapde::Error| e.to_string())?
            }
            "max_power" => self.max_power = num(value)?,
            "max_derivative" => self.max_derivative = num(value)?,
            "include_constant" => self.include_constant = num(value)?,
            "count" => self.count = num(value)?,
            "ridge" => self.ridge = num(value)?,
            "validation_fraction" => self.validation_fraction = num(value)?,
            "lambda_ratio" => self.lambda_ratio = num(value)?,
            "loss_floor" => self.loss_floor = num(value)?,
            "sample_points" => self.sample_points = num(value)?,
            "sample_every" => self.sample_every = num(value)?,
            "sample_seed" => self.sample_seed = num(value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "command" => self.command.to_string(),
            "model" => self.model.clone(),
            "data" => self.data.display().to_string(),
            "out" => self.out.display().to_string(),
            "noise" => format!("{:?}", self.noise),
            "seed" => self.seed.to_string(),
            "axis" => self.axis.to_string(),
            "method" => self.method.to_string(),
            "space_method" => self
                .space_method
                .map_or_else(|| "auto".to_string(), |m| m.name()),
            "time_method" => self.time_method.name(),
            "max_power" => self.max_power.to_string(),
            "max_derivative" => self.max_derivative.to_string(),
            "include_constant" => self.include_constant.to_string(),
            "count" => self.count.to_string(),
            "ridge" => format!("{:?}", self.ridge),
            "validation_fraction" => format!("{:?}", self.validation_fraction),
            "lambda_ratio" => format!("{:?}", self.lambda_ratio),
            "loss_floor" => format!("{:?}", self.loss_floor),
            "sample_points" => self.sample_points.to_string(),
            "sample_every" => self.sample_every.to_string(),
            "sample_seed" => self.sample_seed.to_string(),
            _ => unreachable!("key list and getters disagree on `{key}`"),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::usage(m));
        if self.out.as_os_str().is_empty() {
            return bad("`out` is required".into());
        }
        match self.command {
            Command::Generate => {
                if self.model.is_empty() {
                    return bad("`model` is required".into());
                }
                if !(self.noise >= 0.0 && self.noise.is_finite()) {
                    return bad(format!(
                        "noise must be a finite level >= 0, got {}",
                        self.noise
                    ));
                }
            }
            Command::Discover | Command::Compare => {
                if self.data.as_os_str().is_empty() {
                    return bad("`data` is required".into());
                }
                if self.count < 2 {
                    return bad(format!("count must be at least 2, got {}", self.count));
                }
                if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
                    return bad(format!(
                        "validation_fraction must lie in (0, 1), got {}",
                        self.validation_fraction
                    ));
                }
                if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
                    return bad(format!("ridge must be finite and >= 0, got {}", self.ridge));
                }
                if !(self.lambda_ratio > 0.0 && self.lambda_ratio < 1.0) {
                    return bad(format!(
                        "lambda_ratio must lie in (0, 1), got {}",
                        self.lambda_ratio
                    ));
                }
                if !(self.loss_floor >= 0.0 && self.loss_floor.is_finite()) {
                    return bad(format!(
                        "loss_floor must be finite and >= 0, got {}",
                        self.loss_floor
                    ));
                }
                if self.max_power < 1 || self.max_derivative < 1 {
                    return bad("max_power and max_derivative must be >= 1".into());
                }
                if self.sample_points == 0 || self.sample_every == 0 {
                    return bad("sample_points and sample_every must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            count: self.count,
            seed: self.seed,
            validation_fraction: self.validation_fraction,
            ridge: self.ridge,
            lambda_ratio: self.lambda_ratio,
            floor: self.loss_floor,
        }
    }

    /// `key=value` lines for every key of the command, in a fixed order.
    pub fn to_meta(&self) -> String {
        let mut s = String::new();
        for key in self.command.keys() {
            s.push_str(key);
            s.push('=');
            s.push_str(&self.get(key));
            s.push('\n');
        }
        s
    }
}
