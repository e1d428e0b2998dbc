//! The `wflow` command line: `run`, `eval`, `synth`, `degrade` and
//! `flow-debug`.
//!
//! Exit codes are 0 on success, 1 for bad input (unreadable or malformed
//! files, invalid parameters, usage errors) and 2 for internal failures.
//! Log verbosity follows the `WFLOW_LOG` environment variable
//! (`error`, `warn`, `info`, `debug`, or any `tracing` filter directive).

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_degrade, cmd_eval, cmd_flow_debug, cmd_run, cmd_synth, DegradeOptions, DepthSource, EvalOptions,
    FlowDebugReport, RunOutcome,
};
pub use config::{discover_sequence, FrameSelection, RunConfig, Sequence, TIMESTAMPS_FILE};
pub use report::{
    axis_plot_svg, evaluate_named, format_csv, format_table, xy_plot_svg, EvalRow, MIN_ASSOCIATION,
};

use crate::error::{Error, Result};
use crate::geometry::PoseBackendMode;
use crate::imaging::NormalizationParams;
use crate::trajectory::DEFAULT_RTE_DELTA;

/// Environment variable holding the log filter.
pub const LOG_ENV: &str = "WFLOW_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "wflow",
    version,
    about = "Transmission-weighted optical flow visual odometry"
)]
pub struct Cli {
    /// Worker threads for frame-pair and per-pixel parallelism (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a trajectory from an image sequence.
    Run(RunArgs),
    /// Score trajectories against a reference (ATE, RTE, length, pose count).
    Eval(EvalArgs),
    /// Generate a synthetic underwater dataset.
    Synth(SynthArgs),
    /// Apply the haze model to a clean image sequence.
    Degrade(DegradeArgs),
    /// Write the flow, weight map and visualizations for one frame pair.
    FlowDebug(FlowDebugArgs),
}

/// Overrides shared by the commands that run the pipeline.
#[derive(Debug, Args)]
pub struct PipelineOverrides {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RANSAC seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight spread (normalization.alpha).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight bias (normalization.beta_bias).
    #[arg(long = "beta-bias")]
    pub beta_bias: Option<f64>,
    /// How weights reach the pose solver.
    #[arg(long, value_parser = ["scaled", "confidence"])]
    pub mode: Option<String>,
}

impl PipelineOverrides {
    /// Loads the config file (or defaults) and applies the overrides.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.ransac.seed = seed;
        }
        if self.alpha.is_some() || self.beta_bias.is_some() {
            config.normalization = NormalizationParams::new(
                self.alpha.unwrap_or(config.normalization.alpha()),
                self.beta_bias.unwrap_or(config.normalization.beta_bias()),
            )?;
        }
        if let Some(mode) = &self.mode {
            config.mode = mode.parse::<PoseBackendMode>()?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Sequence directory (images, or a dataset with a `frames/` folder).
    pub sequence: PathBuf,
    /// Output trajectory (TUM format).
    #[arg(short, long)]
    pub output: PathBuf,
    /// Per-pair CSV log (inlier ratio, sigma, weight range).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Ignore the weights entirely (unweighted baseline).
    #[arg(long)]
    pub baseline: bool,
    #[command(flatten)]
    pub pipeline: PipelineOverrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Reference trajectory (TUM).
    pub reference: PathBuf,
    /// Estimated trajectories (TUM).
    #[arg(required = true)]
    pub estimates: Vec<PathBuf>,
    /// RTE window length in frames.
    #[arg(long = "delta-frames", default_value_t = DEFAULT_RTE_DELTA)]
    pub delta_frames: usize,
    /// Write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write x-y and per-axis SVG plots into this directory.
    #[arg(long = "plot-dir")]
    pub plot_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output dataset directory.
    pub output: PathBuf,
    /// Bundled preset name.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Dataset configuration in manifest TOML form.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Texture, boulder and noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of frames (overrides the preset).
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    /// Directory of clean frames.
    pub input: PathBuf,
    /// Output directory for the degraded frames.
    pub output: PathBuf,
    /// Attenuation per channel `r,g,b` (1/m).
    #[arg(long, value_parser = parse_rgb)]
    pub attenuation: [f64; 3],
    /// Ambient light per channel `r,g,b`.
    #[arg(long, value_parser = parse_rgb)]
    pub ambient: [f64; 3],
    /// Directory of PFM depth maps, one per frame in sorted order.
    #[arg(long = "depth-dir", conflicts_with = "depth")]
    pub depth_dir: Option<PathBuf>,
    /// Constant depth (m) for every pixel.
    #[arg(long)]
    pub depth: Option<f64>,
}

fn parse_rgb(text: &str) -> std::result::Result<[f64; 3], String> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    <[f64; 3]>::try_from(values).map_err(|v| format!("expected three values r,g,b, got {}", v.len()))
}

#[derive(Debug, Args)]
pub struct FlowDebugArgs {
    pub frame_a: PathBuf,
    pub frame_b: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Ground-truth `.flo` to report the endpoint error against.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineOverrides,
}

/// Parses the arguments, runs the command and maps the outcome to an exit
/// code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    init_logging();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_bad_input() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env(LOG_ENV)
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_target(false)
        .try_init();
}

pub fn execute(cli: Cli) -> Result<()> {
    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.workers {
            if n == 0 {
                return Err(Error::param("--workers must be >= 1"));
            }
            builder = builder.num_threads(n);
        }
        builder
            .build()
            .map_err(|e| Error::io("<thread pool>", std::io::Error::other(e)))?
    };
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(a) => {
            let config = a.pipeline.resolve()?;
            let outcome = cmd_run(&config, &a.sequence, &a.output, a.log.as_deref(), a.baseline)?;
            eprintln!(
                "{} frame pairs, {} failed (identity motion used); trajectory written to {}",
                outcome.pairs,
                outcome.failures,
                a.output.display()
            );
            Ok(())
        }
        Command::Eval(a) => {
            let rows = cmd_eval(&EvalOptions {
                reference: a.reference,
                estimates: a.estimates,
                delta_frames: a.delta_frames,
                csv: a.csv,
                plot_dir: a.plot_dir,
            })?;
            print!("{}", format_table(&rows));
            Ok(())
        }
        Command::Synth(a) => {
            let config = match (&a.preset, &a.config) {
                (Some(name), None) => crate::synth::preset(name)?,
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                    toml::from_str(&text).map_err(|e| Error::Format {
                        format: "synth config",
                        path: Some(path.clone()),
                        message: e.to_string(),
                    })?
                }
                _ => {
                    return Err(Error::param(format!(
                        "give --preset (one of: {}) or --config",
                        crate::synth::PRESETS.join(", ")
                    )))
                }
            };
            let mut config = match a.seed {
                Some(seed) => config.with_seed(seed),
                None => config,
            };
            if let Some(n) = a.frames {
                config.frames = n;
            }
            cmd_synth(&config, &a.output)?;
            eprintln!("{} frames written to {}", config.frames, a.output.display());
            Ok(())
        }
        Command::Degrade(a) => {
            let depth = match (a.depth_dir, a.depth) {
                (Some(dir), None) => DepthSource::Directory(dir),
                (None, Some(d)) => DepthSource::Constant(d),
                _ => return Err(Error::param("degrading needs --depth-dir or --depth")),
            };
            let n = cmd_degrade(&DegradeOptions {
                input: a.input,
                output: a.output,
                attenuation: a.attenuation,
                ambient: a.ambient,
                depth,
            })?;
            eprintln!("{n} frames degraded");
            Ok(())
        }
        Command::FlowDebug(a) => {
            let config = a.pipeline.resolve()?;
            let report = cmd_flow_debug(&a.frame_a, &a.frame_b, &config, &a.output, a.truth.as_deref())?;
            println!(
                "sigma {} weights [{}, {}] mean |F| {:.4} px",
                report.sigma, report.weight_range.0, report.weight_range.1, report.mean_magnitude
            );
            if let Some(epe) = report.epe {
                println!("EPE {epe:.4} px");
            }
            Ok(())
        }
    }
}
