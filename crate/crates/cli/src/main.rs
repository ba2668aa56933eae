use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gradsim::SimError;

mod commands;
mod io;

/// Differentiable simulation and rendering driver.
///
/// Outputs are written relative to `--out`. `GRADSIM_THREADS` caps the
/// number of worker threads. Exit status is 0 on success, 1 when the
/// simulation diverges and 2 for usage or configuration errors.
#[derive(Debug, Parser)]
#[command(name = "gradsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Roll a scene forward, writing frames and states.csv.
    Simulate(SimulateArgs),
    /// Render the initial state, or every row of a states.csv.
    Render(RenderArgs),
    /// Recover physical parameters from a target video.
    Estimate(EstimateArgs),
    /// Evaluate the loss on a grid of one parameter.
    Sweep(SweepArgs),
    /// Optimize a controller or an initial velocity toward a target image.
    Control(ControlArgs),
    /// Measure forward, render and backward throughput.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct RenderArgs {
    config: PathBuf,
    /// states.csv written by `simulate`.
    #[arg(long)]
    states: Option<PathBuf>,
    /// Also write PNG copies of the frames.
    #[arg(long)]
    png: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LossArg {
    AllFrames,
    FirstLast,
    LastFrame,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ChannelArg {
    Rgb,
    Silhouette,
}

#[derive(Debug, Args)]
struct TargetArgs {
    /// Directory with frame_%04d.ppm (and silhouette_%04d.pgm) targets.
    #[arg(long, conflicts_with = "self_target")]
    target: Option<PathBuf>,
    /// JSON object of true parameter values, e.g. {"mass:0": 1.0}. The
    /// target is rendered from the config with these values applied.
    #[arg(long)]
    self_target: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all-frames")]
    loss: LossArg,
    #[arg(long, value_enum, default_value = "rgb")]
    channel: ChannelArg,
}

#[derive(Debug, Args)]
#[group(multiple = false)]
struct MismatchArgs {
    /// Estimate with friction removed from the model.
    #[arg(long)]
    no_friction: bool,
    /// Estimate with contact damping removed from the model.
    #[arg(long)]
    perfect_elastic: bool,
    /// Model rigid bodies as stiff deformables.
    #[arg(long)]
    rigid_as_deformable: bool,
    /// Model deformable solids as rigid bodies.
    #[arg(long)]
    deformable_as_rigid: bool,
}

#[derive(Debug, Args)]
struct OptimArgs {
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    /// Learning rate; per-parameter defaults when absent.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    lr_decay: f64,
    #[arg(long)]
    sgd: bool,
    /// Reject steps that raise the loss.
    #[arg(long)]
    monotone: bool,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    config: PathBuf,
    /// Parameter to estimate (mass:0, mu, lambda, ke, kd, kf, mu_c,
    /// velocity:0:x, ...). Repeat for joint estimation.
    #[arg(long = "param", required = true)]
    params: Vec<String>,
    /// Initial values, one per --param.
    #[arg(long, value_delimiter = ',', conflicts_with = "init_range")]
    init: Vec<f64>,
    /// Draw initial values uniformly from lo:hi using the seed.
    #[arg(long)]
    init_range: Option<String>,
    #[command(flatten)]
    target: TargetArgs,
    #[command(flatten)]
    mismatch: MismatchArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SweepArgs {
    config: PathBuf,
    #[arg(long)]
    param: String,
    /// lo:hi:n with n ≥ 2.
    #[arg(long)]
    grid: String,
    #[command(flatten)]
    target: TargetArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ControlMode {
    Policy,
    Velocity,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ActuationArg {
    Volume,
    Bending,
}

#[derive(Debug, Args)]
struct ControlArgs {
    config: PathBuf,
    /// Target image (PPM or PNG) matching the camera resolution.
    #[arg(long)]
    target: PathBuf,
    #[arg(long, value_enum, default_value = "policy")]
    mode: ControlMode,
    /// Entity whose velocity is optimized; the first entity by default.
    #[arg(long)]
    entity: Option<String>,
    /// One velocity per particle instead of a shared one.
    #[arg(long)]
    per_particle: bool,
    #[arg(long, default_value_t = 8)]
    signals: usize,
    #[arg(long, value_enum, default_value = "volume")]
    actuation: ActuationArg,
    /// Standard deviation of the initial controller weights.
    #[arg(long, default_value_t = 0.01)]
    weight_std: f64,
    #[command(flatten)]
    optim: OptimArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Tet counts to measure.
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000")]
    tets: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Also write bench.csv into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("GRADSIM_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| SimError::config(format!("GRADSIM_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<SimError>() {
        Some(e) if e.is_divergence() => 1,
        Some(SimError::MissingAdjoint { .. } | SimError::NonFiniteDifference(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Render(a) => commands::render(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Control(a) => commands::control(a),
        Command::Bench(a) => commands::bench(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
