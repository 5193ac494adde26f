//! The `parapde` pipeline: generate benchmark data, run discovery sweeps and
//! write the results.
//!
//! Exit codes: 0 success, 2 usage, 3 simulation failure, 4 discovery failure.

use std::fmt;
use std::path::{Path, PathBuf};

use parapde::features::{build_blocks, build_blocks_2d};
use parapde::fields::{
    add_noise, load_dataset, save_dataset, subsample_points, write_atomic, Dataset,
};
use parapde::select::sweep;
use parapde::simulate::{simulate, SimConfig};
use parapde::{
    Axis, BlockSystem, DiffMethod, Error, LibrarySpec, Method, NoiseSpec, Region, SweepResult,
};

pub mod config;
pub mod report;

pub use config::{Command, RunConfig};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SIMULATION: i32 = 3;
pub const EXIT_DISCOVERY: i32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn simulation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_SIMULATION,
            message: message.into(),
        }
    }

    pub fn discovery(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DISCOVERY,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Caps the global rayon pool at `PARAPDE_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("PARAPDE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::usage(format!(
            "PARAPDE_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot size the thread pool: {e}")))
}

pub fn execute(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command {
        Command::Generate => generate(cfg),
        Command::Discover => discover(cfg).map(|_| ()),
        Command::Compare => compare(cfg).map(|_| ()),
    }
}

fn write(path: &Path, text: &str, code: fn(String) -> CliError) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes())
        .map_err(|e| code(format!("cannot write {}: {e}", path.display())))
}

fn sim_err(e: String) -> CliError {
    CliError::simulation(e)
}

fn disc_err(e: String) -> CliError {
    CliError::discovery(e)
}

/// Writes `<out>.meta`, `<out>.f64` and `<out>.run.meta`.
pub fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let sim = SimConfig::by_name(&cfg.model).ok_or_else(|| {
        CliError::usage(format!(
            "unknown model `{}` (burgers, advection_diffusion, ks, ns2d)",
            cfg.model
        ))
    })?;
    let mut data = simulate(&sim).map_err(|e| CliError::simulation(e.to_string()))?;
    if cfg.noise > 0.0 {
        let spec =
            NoiseSpec::new(cfg.noise, cfg.seed).map_err(|e| CliError::usage(e.to_string()))?;
        data = match &data {
            Dataset::One(f) => add_noise(f, &spec).map(Dataset::One),
            Dataset::Two(f) => add_noise(f, &spec).map(Dataset::Two),
        }
        .map_err(|e| CliError::simulation(e.to_string()))?;
    }
    save_dataset(&data, &cfg.out).map_err(|e| CliError::simulation(e.to_string()))?;
    let mut meta = cfg.out.as_os_str().to_owned();
    meta.push(".run.meta");
    write(&PathBuf::from(meta), &cfg.to_meta(), sim_err)
}

fn library_spec(cfg: &RunConfig, periodic: bool) -> LibrarySpec {
    let auto = if periodic {
        DiffMethod::Spectral
    } else {
        DiffMethod::CentralFd
    };
    LibrarySpec {
        max_power: cfg.max_power,
        max_derivative: cfg.max_derivative,
        include_constant: cfg.include_constant,
        space_method: cfg.space_method.unwrap_or(auto),
        time_method: cfg.time_method,
        axis: cfg.axis,
        terms_2d: None,
    }
}

fn build_error(e: Error) -> CliError {
    match e {
        Error::Parameter(_) | Error::Grid(_) => CliError::usage(e.to_string()),
        other => CliError::discovery(other.to_string()),
    }
}

/// Loads the dataset named by `cfg.data` and assembles its block system.
pub fn load_system(cfg: &RunConfig) -> Result<BlockSystem, CliError> {
    let data = load_dataset(&cfg.data)
        .map_err(|e| CliError::usage(format!("cannot read dataset {}: {e}", cfg.data.display())))?;
    match data {
        Dataset::One(f) => {
            build_blocks(&f, &library_spec(cfg, f.grid.periodic)).map_err(build_error)
        }
        Dataset::Two(f) => {
            if cfg.axis != Axis::Time {
                return Err(CliError::usage("2D datasets are grouped by time only"));
            }
            let spec = library_spec(cfg, f.grid.periodic[0] && f.grid.periodic[1]);
            let sample = subsample_points(
                &f,
                cfg.sample_points,
                cfg.sample_every,
                &Region::whole(&f.grid),
                cfg.sample_seed,
            )
            .map_err(build_error)?;
            build_blocks_2d(&f, &sample, &spec).map_err(build_error)
        }
    }
}

fn run_sweep(
    system: &BlockSystem,
    method: Method,
    cfg: &RunConfig,
) -> Result<SweepResult, CliError> {
    sweep(system, method, &cfg.sweep_options()).map_err(|e| match e {
        Error::Parameter(_) => CliError::usage(e.to_string()),
        other => CliError::discovery(other.to_string()),
    })
}

fn write_result(dir: &Path, result: &SweepResult, axis: Axis) -> Result<(), CliError> {
    write(
        &dir.join("model.json"),
        &report::model_json(result, axis),
        disc_err,
    )?;
    write(
        &dir.join("coeffs.csv"),
        &report::coeffs_csv(&result.model),
        disc_err,
    )?;
    write(&dir.join("sweep.csv"), &report::sweep_csv(result), disc_err)
}

/// Writes `model.json`, `coeffs.csv`, `sweep.csv` and `run.meta` into `cfg.out`.
pub fn discover(cfg: &RunConfig) -> Result<SweepResult, CliError> {
    let system = load_system(cfg)?;
    let result = run_sweep(&system, cfg.method, cfg)?;
    write_result(&cfg.out, &result, cfg.axis)?;
    write(&cfg.out.join("run.meta"), &cfg.to_meta(), disc_err)?;
    Ok(result)
}

/// Both methods on one split: per-method subdirectories plus `summary.csv`.
pub fn compare(cfg: &RunConfig) -> Result<Vec<SweepResult>, CliError> {
    let system = load_system(cfg)?;
    let mut results = Vec::new();
    for method in [Method::Sgtr, Method::Glasso] {
        let r = run_sweep(&system, method, cfg)?;
        write_result(&cfg.out.join(method.to_string()), &r, cfg.axis)?;
        results.push(r);
    }
    write(
        &cfg.out.join("summary.csv"),
        &report::summary_csv(&results),
        disc_err,
    )?;
    write(&cfg.out.join("run.meta"), &cfg.to_meta(), disc_err)?;
    Ok(results)
}
