mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;
use wgphase::ErrorKind;

/// Photonic CPHASE gates from emitter arrays in a waveguide.
#[derive(Parser)]
#[command(name = "wgphase", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config, or a previous run's JSON manifest.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Transmission and reflection spectra of one array.
    SinglePhoton(SinglePhotonArgs),
    /// One gate-fidelity evaluation.
    TwoPhoton(TwoPhotonArgs),
    /// Non-interacting design over pair counts and Γ/σ_ω.
    SweepNi(SweepNiArgs),
    /// Interacting design over Γ/σ_ω and σ_ω z/c.
    SweepInt(SweepIntArgs),
    /// Hierarchical spacing optimizer.
    OptimizeSpacing(SpacingArgs),
    /// Monte Carlo position errors.
    Perturb(PerturbArgs),
    /// Power-law fit to two CSV columns.
    Fit(FitArgs),
    /// Invariant suite.
    Validate(ValidateArgs),
    /// Pulse-averaged reflection of optimized, π-spaced and equally spaced arrays.
    Reflection(ReflectionArgs),
}

#[derive(Args, Serialize)]
struct SinglePhotonArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    design: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_pairs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    phi_d: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    phi_a: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    propagation: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_z_over_c: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_over_sigma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    omega_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    omega_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    points: Option<usize>,
}

#[derive(Args, Serialize)]
struct TwoPhotonArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    design: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_pairs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    phi_d: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    phi_a: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_over_sigma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pulse_shape: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_z_over_c: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    certify: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    write_spectrum: Option<bool>,
}

#[derive(Args, Serialize)]
struct SweepNiArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_pairs: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_over_sigma: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pulse_shape: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    optimize: Option<bool>,
}

#[derive(Args, Serialize)]
struct SweepIntArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_pairs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_over_sigma: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_z_over_c: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pulse_shape: Option<String>,
}

#[derive(Args, Serialize)]
struct SpacingArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    level: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
}

#[derive(Args, Serialize)]
struct PerturbArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_pairs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_over_sigma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    distribution: Option<String>,
}

#[derive(Args, Serialize)]
struct FitArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    x_column: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    y_column: Option<String>,
}

#[derive(Args, Serialize)]
struct ValidateArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ReflectionArgs {
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_pairs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_over_sigma: Option<Vec<f64>>,
}

fn overrides<A: Serialize>(args: &A) -> anyhow::Result<toml::Table> {
    Ok(toml::Table::try_from(args)?)
}

fn configure_threads() -> Result<(), wgphase::Error> {
    let Ok(v) = std::env::var("WGPHASE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| wgphase::Error::Config(format!("WGPHASE_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| wgphase::Error::Config(e.to_string()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::SinglePhoton(a) => commands::single_photon(config::load(a.common.config.as_deref(), overrides(&a)?)?),
        Command::TwoPhoton(a) => commands::two_photon(config::load(a.common.config.as_deref(), overrides(&a)?)?),
        Command::SweepNi(a) => commands::sweep_ni(config::load(a.common.config.as_deref(), overrides(&a)?)?),
        Command::SweepInt(a) => commands::sweep_int(config::load(a.common.config.as_deref(), overrides(&a)?)?),
        Command::OptimizeSpacing(a) => {
            commands::optimize_spacing(config::load(a.common.config.as_deref(), overrides(&a)?)?)
        }
        Command::Perturb(a) => commands::perturb(config::load(a.common.config.as_deref(), overrides(&a)?)?),
        Command::Fit(a) => commands::fit(config::load(a.common.config.as_deref(), overrides(&a)?)?),
        Command::Validate(a) => commands::validate(config::load(a.common.config.as_deref(), overrides(&a)?)?),
        Command::Reflection(a) => commands::reflection(config::load(a.common.config.as_deref(), overrides(&a)?)?),
    }
}

/// Exit codes: 2 configuration, 3 convergence, 4 numerical domain, 1 anything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<wgphase::Error>().map(|e| e.kind()) {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Convergence) => 3,
        Some(ErrorKind::Domain) => 4,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
