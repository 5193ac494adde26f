use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use parapde::fields::parse_key_values;
use parapde_cli::{configure_threads, execute, CliError, Command, RunConfig};

#[derive(Parser)]
#[command(
    name = "parapde",
    version,
    about = "Discover parametric PDEs from gridded data"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a benchmark model and store the dataset.
    Generate(GenerateArgs),
    /// Sweep one method and write the selected model.
    Discover(DiscoverArgs),
    /// Run SGTR and GLASSO on the same split and summarize both.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// key=value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// burgers, advection_diffusion, ks or ns2d.
    #[arg(long)]
    model: Option<String>,
    /// Dataset base path; `.meta` and `.f64` are appended.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise level as a fraction of the field RMS.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset base path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Validation split seed.
    #[arg(long)]
    seed: Option<String>,
    /// time or space.
    #[arg(long)]
    axis: Option<String>,
    /// auto, spectral, central_fd or poly_smooth[:DEG:HALF].
    #[arg(long)]
    space_method: Option<String>,
    #[arg(long)]
    time_method: Option<String>,
    #[arg(long)]
    max_power: Option<String>,
    #[arg(long)]
    max_derivative: Option<String>,
    #[arg(long)]
    include_constant: Option<String>,
    /// Number of sweep points.
    #[arg(long)]
    count: Option<String>,
    /// Ridge penalty inside SGTR.
    #[arg(long)]
    ridge: Option<String>,
    #[arg(long)]
    validation_fraction: Option<String>,
    #[arg(long)]
    lambda_ratio: Option<String>,
    #[arg(long)]
    loss_floor: Option<String>,
    #[arg(long)]
    sample_points: Option<String>,
    #[arg(long)]
    sample_every: Option<String>,
    #[arg(long)]
    sample_seed: Option<String>,
}

#[derive(Args)]
struct DiscoverArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// sgtr or glasso.
    #[arg(long)]
    method: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
}

fn put(map: &mut BTreeMap<String, String>, key: &str, value: Option<String>) {
    if let Some(v) = value {
        map.insert(key.to_string(), v);
    }
}

fn path(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

fn common_flags(c: CommonArgs, map: &mut BTreeMap<String, String>) -> Option<PathBuf> {
    put(map, "data", path(c.data));
    put(map, "out", path(c.out));
    put(map, "seed", c.seed);
    put(map, "axis", c.axis);
    put(map, "space_method", c.space_method);
    put(map, "time_method", c.time_method);
    put(map, "max_power", c.max_power);
    put(map, "max_derivative", c.max_derivative);
    put(map, "include_constant", c.include_constant);
    put(map, "count", c.count);
    put(map, "ridge", c.ridge);
    put(map, "validation_fraction", c.validation_fraction);
    put(map, "lambda_ratio", c.lambda_ratio);
    put(map, "loss_floor", c.loss_floor);
    put(map, "sample_points", c.sample_points);
    put(map, "sample_every", c.sample_every);
    put(map, "sample_seed", c.sample_seed);
    c.config
}

fn resolve(cli: Cli) -> Result<RunConfig, CliError> {
    let mut flags = BTreeMap::new();
    let (command, config) = match cli.command {
        Cmd::Generate(g) => {
            put(&mut flags, "model", g.model);
            put(&mut flags, "out", path(g.out));
            put(&mut flags, "noise", g.noise);
            put(&mut flags, "seed", g.seed);
            (Command::Generate, g.config)
        }
        Cmd::Discover(d) => {
            put(&mut flags, "method", d.method);
            (Command::Discover, common_flags(d.common, &mut flags))
        }
        Cmd::Compare(c) => (Command::Compare, common_flags(c.common, &mut flags)),
    };
    let mut layers = Vec::new();
    if let Some(p) = config {
        let text = std::fs::read_to_string(&p)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
        layers.push(
            parse_key_values(&text)
                .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?,
        );
    }
    layers.push(flags);
    RunConfig::resolve(command, &layers)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = resolve(cli).and_then(|cfg| {
        configure_threads()?;
        execute(&cfg)
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("parapde: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
