#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use spinrelax_core::hopping::SurvivalForm;
use spinrelax_core::noise::{FieldComponent, LayerKind};
use spinrelax_core::sequence::SequenceKind;

use crate::config::{
    resolve, CollapseConfig, ConfigFile, DensityConfig, DepthConfig, FitConfig, HoppingConfig,
    Observable, PredictConfig, SimulateConfig, SynthConfig, T1rhoConfig, DEFAULT_OUT, OUT_ENV,
};
use crate::error::{CliError, CliResult};
use crate::output::OutDir;

/// Surface-spin relaxation toolkit: decay predictions, cluster simulation,
/// hopping-model scaling and parameter fits.
#[derive(Debug, Parser)]
#[command(name = "spinrelax", version, about)]
struct Cli {
    /// TOML config file with `[command]` tables; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $SPINRELAX_OUT or ./spinrelax-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also emit SVG line plots next to the CSV files.
    #[arg(long, global = true)]
    svg: bool,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form and filter-function decay curves for one sequence.
    Predict(PredictArgs),
    /// Disorder-averaged cluster simulation.
    Simulate(SimulateArgs),
    /// Survival curves, T_z prediction and W-tau scans.
    Hopping(HoppingArgs),
    /// Joint four-sequence fit or stretched-exponential fit.
    Fit(FitArgs),
    /// Rescale survival curves by tau_e W_e.
    Collapse(CollapseArgs),
    /// Mean spin separation from an XY-4 curve by chi^2 grid search.
    Density(DensityArgs),
    /// NV depth from the proton field rms.
    Depth(DepthArgs),
    /// Spin-lock relaxation rate versus drive strength.
    T1rho(T1rhoArgs),
    /// Synthetic four-sequence dataset from the closed forms.
    Synth(SynthArgs),
    /// Replay a run from its manifest.
    Rerun(RerunArgs),
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

#[derive(Debug, Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct PredictArgs {
    /// ramsey, echo, xy4 or mrev8_in_echo.
    #[arg(long)]
    seq: Option<SequenceKind>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    omega_l: Option<f64>,
    #[arg(long)]
    t2: Option<f64>,
    #[arg(long)]
    detuning: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    numeric: Option<bool>,
}

#[derive(Debug, Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct SimulateArgs {
    /// sz, spin_lock, ramsey, echo, xy4 or mrev8.
    #[arg(long)]
    observable: Option<Observable>,
    #[arg(long)]
    n_spins: Option<usize>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    min_radius: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    omega_l: Option<f64>,
    #[arg(long)]
    drive: Option<f64>,
    #[arg(long)]
    detuning: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    ising_only: Option<bool>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct HoppingArgs {
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    j1: Option<f64>,
    #[arg(long)]
    j: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    r0: Option<f64>,
    /// shifted or long_time.
    #[arg(long, value_parser = parse_enum::<SurvivalForm>)]
    form: Option<SurvivalForm>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// Emit a T_z table over a grid of W and tau.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    scan_wtau: Option<bool>,
    #[arg(long, value_delimiter = ',')]
    scan_w: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    scan_tau: Option<Vec<f64>>,
}

#[derive(Debug, Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct FitArgs {
    /// Joint Ramsey/echo/XY-4/MREV-8 fit.
    #[arg(long, conflicts_with = "stretched")]
    #[serde(skip)]
    joint: bool,
    /// Stretched-exponential fit of one curve.
    #[arg(long)]
    #[serde(skip)]
    stretched: bool,
    /// Use the packaged synthetic dataset.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    fixture: Option<bool>,
    #[arg(long)]
    ramsey: Option<PathBuf>,
    #[arg(long)]
    echo: Option<PathBuf>,
    #[arg(long)]
    xy4: Option<PathBuf>,
    #[arg(long)]
    mrev8: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Fixed stretch power; free when omitted.
    #[arg(long)]
    power: Option<f64>,
    #[arg(long)]
    j1: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    omega_l: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(skip)]
    mode: Option<String>,
}

#[derive(Debug, Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct CollapseArgs {
    #[arg(long = "input")]
    inputs: Option<Vec<PathBuf>>,
    #[arg(long, value_delimiter = ',')]
    w: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    j1: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    tz: Option<Vec<f64>>,
    #[arg(long)]
    j: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct DensityArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    omega_l: Option<f64>,
    #[arg(long)]
    sep_min: Option<f64>,
    #[arg(long)]
    sep_max: Option<f64>,
    #[arg(long)]
    sep_step: Option<f64>,
    #[arg(long)]
    neighbors: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct DepthArgs {
    /// Field rms, G.
    #[arg(long)]
    brms: Option<f64>,
    /// Noise width, rad/us (used when --brms is absent).
    #[arg(long)]
    w: Option<f64>,
    /// two_d_layer or half_space.
    #[arg(long, value_parser = parse_enum::<LayerKind>)]
    layer: Option<LayerKind>,
    #[arg(long)]
    proton_density: Option<f64>,
    /// longitudinal or transverse.
    #[arg(long, value_parser = parse_enum::<FieldComponent>)]
    component: Option<FieldComponent>,
    #[arg(long)]
    spin_quantum: Option<f64>,
    #[arg(long)]
    max_depth: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct T1rhoArgs {
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    omega_l: Option<f64>,
    #[arg(long)]
    omega_min: Option<f64>,
    #[arg(long)]
    omega_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    log: Option<bool>,
    #[arg(long)]
    prefactor: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
#[command(allow_negative_numbers = true)]
struct SynthArgs {
    #[arg(long)]
    j1: Option<f64>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    omega_l: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct RerunArgs {
    /// A manifest_<command>.json written by an earlier run.
    manifest: PathBuf,
}

#[derive(Debug, Deserialize)]
struct Manifest {
    command: String,
    config: Value,
}

fn resolved<T, O>(file: &ConfigFile, section: &str, flags: &O) -> CliResult<Value>
where
    T: Default + Serialize + DeserializeOwned,
    O: Serialize,
{
    let cfg: T = resolve(file, section, flags)?;
    serde_json::to_value(cfg).map_err(|e| CliError::config(e.to_string()))
}

fn plan(command: Command, file: &ConfigFile) -> CliResult<(String, Value)> {
    let (name, value) = match command {
        Command::Predict(a) => (
            "predict",
            resolved::<PredictConfig, _>(file, "predict", &a)?,
        ),
        Command::Simulate(a) => (
            "simulate",
            resolved::<SimulateConfig, _>(file, "simulate", &a)?,
        ),
        Command::Hopping(a) => (
            "hopping",
            resolved::<HoppingConfig, _>(file, "hopping", &a)?,
        ),
        Command::Fit(mut a) => {
            if a.joint {
                a.mode = Some("joint".into());
            } else if a.stretched {
                a.mode = Some("stretched".into());
            }
            ("fit", resolved::<FitConfig, _>(file, "fit", &a)?)
        }
        Command::Collapse(a) => (
            "collapse",
            resolved::<CollapseConfig, _>(file, "collapse", &a)?,
        ),
        Command::Density(a) => (
            "density",
            resolved::<DensityConfig, _>(file, "density", &a)?,
        ),
        Command::Depth(a) => ("depth", resolved::<DepthConfig, _>(file, "depth", &a)?),
        Command::T1rho(a) => ("t1rho", resolved::<T1rhoConfig, _>(file, "t1rho", &a)?),
        Command::Synth(a) => ("synth", resolved::<SynthConfig, _>(file, "synth", &a)?),
        Command::Rerun(a) => {
            let text = std::fs::read_to_string(&a.manifest)
                .map_err(|e| CliError::config(format!("{}: {e}", a.manifest.display())))?;
            let m: Manifest = serde_json::from_str(&text)
                .map_err(|e| CliError::data(format!("{}: {e}", a.manifest.display())))?;
            return Ok((m.command, m.config));
        }
    };
    Ok((name.to_string(), value))
}

fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(n) = cli.threads.or(file.threads()) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| file.out_dir())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let (command, config) = plan(cli.command, &file)?;
    let mut out = OutDir::create(&out_dir, cli.svg)?;
    let outcome = commands::execute(&command, config, &mut out)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "{command}: wrote {} file(s) to {}",
        out.written().len(),
        out.root().display()
    );
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
