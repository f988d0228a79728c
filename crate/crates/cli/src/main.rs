//! `wbo`: batch front-end for wideband outage exponents.

mod output;
mod runs;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use wideband_outage::mimo::CorrelationDescriptor;
use wideband_outage::models::{parse_json, ModelDescriptor};
use wideband_outage::montecarlo::{RateMode, SamplerKind, SimConfigDescriptor};
use wideband_outage::Error;

use output::{manifest_path, write_json, RunManifest};
use runs::{EtaGrid, ExponentRun, FeedbackRun, Run, ShapeRun, SimulateRun};

#[derive(Parser, Debug)]
#[command(name = "wbo", version, about = "Wideband outage exponents, feedback protocols and Monte Carlo checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exponent curve E(eta) of a fading model, as CSV.
    Exponent(ExponentArgs),
    /// Threshold-feedback exponent curves, on-off envelope and optional conjecture scan.
    Feedback(FeedbackArgs),
    /// Monte Carlo outage estimates and empirical exponent fit.
    Simulate(SimulateArgs),
    /// Optimize the MIMO input covariance for a spatial correlation.
    Shape(ShapeArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long)]
    eta_min: Option<f64>,
    #[arg(long)]
    eta_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// Linear spacing (default logarithmic).
    #[arg(long)]
    linear: bool,
}

impl GridArgs {
    fn resolve(&self, min: f64, max: f64, points: usize) -> EtaGrid {
        EtaGrid {
            eta_min: self.eta_min.unwrap_or(min),
            eta_max: self.eta_max.unwrap_or(max),
            points: self.points.unwrap_or(points),
            linear: self.linear,
        }
    }
}

#[derive(Args, Debug)]
struct ExponentArgs {
    /// JSON model descriptor, e.g. {"kind": "rician", "kappa": 0.9}.
    #[arg(long)]
    model: PathBuf,
    /// Grid defaults to [eta_bar, 100 eta_bar] with 50 points.
    #[command(flatten)]
    grid: GridArgs,
    /// Add an `eta_bit_db` column (energy per bit, dB).
    #[arg(long)]
    per_bit: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FeedbackArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,2")]
    tau: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    g0: Vec<f64>,
    /// Grid defaults to [0.1, 10] with 81 points.
    #[command(flatten)]
    grid: GridArgs,
    /// Write conjecture.json with a (tau, g0) scan at each `--conjecture-eta`.
    #[arg(long)]
    conjecture: bool,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    conjecture_eta: Vec<f64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Exact,
    Linearized,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SamplerArg {
    Plain,
    Tilted,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// JSON simulation config; the flags below override its fields.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    sampler: Option<SamplerArg>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ShapeArgs {
    /// JSON with `n_t`, `n_r` and `psi` (a mimo_correlated model file also works).
    #[arg(long)]
    psi: PathBuf,
    #[arg(long)]
    eta: f64,
    #[arg(long, default_value_t = 16)]
    starts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Include the full per-start trace.
    #[arg(long)]
    verbose: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Write to this path instead of the recorded one.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Reads a descriptor from a file, or takes the argument itself as inline JSON.
fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let arg = path.to_string_lossy();
    if arg.trim_start().starts_with('{') {
        return parse_json(&arg).context("parsing inline JSON");
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn resolve(command: Command) -> Result<(Run, PathBuf)> {
    Ok(match command {
        Command::Exponent(a) => {
            let model: ModelDescriptor = read_json(&a.model)?;
            let eta_bar = model.build()?.eta_bar();
            let grid = a.grid.resolve(eta_bar, 100.0 * eta_bar, 50);
            let run = ExponentRun {
                model,
                grid,
                per_bit: a.per_bit,
            };
            (Run::Exponent(run), a.out)
        }
        Command::Feedback(a) => {
            let run = FeedbackRun {
                tau: a.tau,
                g0: a.g0,
                grid: a.grid.resolve(0.1, 10.0, 81),
                conjecture_eta: if a.conjecture { a.conjecture_eta } else { Vec::new() },
            };
            (Run::Feedback(run), a.out)
        }
        Command::Simulate(a) => {
            let mut config: SimConfigDescriptor = read_json(&a.config)?;
            if let Some(m) = a.mode {
                config.mode = match m {
                    ModeArg::Exact => RateMode::Exact,
                    ModeArg::Linearized => RateMode::Linearized,
                };
            }
            if let Some(s) = a.sampler {
                config.sampler = match s {
                    SamplerArg::Plain => SamplerKind::Plain,
                    SamplerArg::Tilted => SamplerKind::Tilted,
                };
            }
            if let Some(t) = a.trials {
                config.trials = t;
            }
            if let Some(k) = a.k_grid {
                config.k_grid = k;
            }
            if let Some(s) = a.seed {
                config.seed = s;
            }
            (Run::Simulate(SimulateRun { config }), a.out)
        }
        Command::Shape(a) => {
            let correlation: CorrelationDescriptor = read_json(&a.psi)?;
            let run = ShapeRun {
                correlation,
                eta: a.eta,
                starts: a.starts,
                seed: a.seed,
                verbose: a.verbose,
            };
            (Run::Shape(run), a.out)
        }
        Command::Replay(a) => {
            let manifest = RunManifest::read(&a.manifest)?;
            let out = a.out.unwrap_or(manifest.out);
            (manifest.config, out)
        }
    })
}

fn run(cli: Cli) -> Result<()> {
    let (run, out) = resolve(cli.command)?;
    let start = Instant::now();
    let outcome = run.execute(&out)?;
    let is_dir = run.writes_directory();
    let manifest = RunManifest::new(run, out.clone(), outcome.outputs, start.elapsed());
    write_json(&manifest_path(&out, is_dir), &manifest)?;
    match outcome.deferred {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// 2 for usage and parse errors, 3 for domain errors, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            if e.is_domain() {
                return 3;
            }
            if matches!(e, Error::InvalidParameter(_) | Error::Descriptor { .. } | Error::Matrix(_)) {
                return 2;
            }
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    1
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
