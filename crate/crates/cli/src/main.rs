//! Multi-object tracking over sets: command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settrack::models::ModelParams;
use settrack::sim::InitialPopulation;
use settrack_cli::{CliError, commands, config};

/// Multi-object tracking and identification over set-valued particle
/// filters, with a simulator, CLEAR MOT evaluation and a pruning benchmark.
///
/// Parameter defaults follow the PETS2009 evaluation configuration; a
/// config file (`key = value` lines) and repeated `--set key=value` flags
/// override them.
#[derive(Parser)]
#[command(name = "settrack", version, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ParamArgs {
    /// Configuration file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one parameter, e.g. `--set n_particles=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ParamArgs {
    fn resolve(&self, base: ModelParams) -> Result<ModelParams, CliError> {
        let mut params = match &self.config {
            Some(path) => config::load_config(path, base)?,
            None => base,
        };
        config::apply_overrides(&mut params, &self.sets)?;
        Ok(params)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Track objects through a detection file and write identity rows.
    Track {
        #[command(flatten)]
        params: ParamArgs,
        /// Input detections: `frame,x,y,confidence[,bbox_area]`.
        #[arg(long)]
        detections: PathBuf,
        /// Output tracks: `frame,rho,x,y,vx,vy,confidence`.
        #[arg(long)]
        out: PathBuf,
        /// RNG seed; identical seeds reproduce identical outputs.
        #[arg(long)]
        seed: u64,
        /// Repeat over seeds seed..seed+RUNS-1, one output file each.
        #[arg(long, default_value_t = 1)]
        runs: u32,
    },
    /// Generate a synthetic scenario: ground truth plus noisy detections.
    Simulate {
        #[command(flatten)]
        params: ParamArgs,
        /// Number of frames to generate.
        #[arg(long, default_value_t = 200)]
        frames: usize,
        /// RNG seed.
        #[arg(long)]
        seed: u64,
        /// Seed this many objects at frame zero.
        #[arg(long)]
        objects: Option<usize>,
        /// Draw the initial object count from the birth-death stationary
        /// distribution instead of starting empty.
        #[arg(long, conflicts_with = "objects")]
        stationary: bool,
        /// Reflect objects at the arena walls.
        #[arg(long)]
        confine: bool,
        /// Output ground-truth file: `frame,gt_id,x,y`.
        #[arg(long)]
        out_truth: PathBuf,
        /// Output detections file.
        #[arg(long)]
        out_detections: PathBuf,
    },
    /// Score tracker output against ground truth (CLEAR MOT + MT/FM).
    Evaluate {
        /// Ground-truth file: `frame,gt_id,x,y`.
        #[arg(long)]
        ground_truth: PathBuf,
        /// Tracker output file.
        #[arg(long)]
        tracks: PathBuf,
        /// Match distance threshold in meters.
        #[arg(long, default_value_t = 1.0)]
        threshold: f64,
        /// Also write the machine-readable row here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure pruning rates and relative errors over threshold sweeps on
    /// the synthetic birth-death scenario.
    PruneBench {
        #[command(flatten)]
        params: ParamArgs,
        /// Scenario length in cycles.
        #[arg(long, default_value_t = 1000)]
        frames: usize,
        /// First scenario seed.
        #[arg(long)]
        seed: u64,
        /// Number of seeds (seed..seed+RUNS-1); results report mean ± std.
        #[arg(long, default_value_t = 3)]
        runs: u32,
        /// Write per-threshold rows to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run() -> Result<(), CliError> {
    let cli = Cli::try_parse().map_err(|e| {
        // clap prints help/version through the error; keep its formatting.
        let _ = e.print();
        CliError::Usage(String::new())
    })?;
    match cli.command {
        Command::Track {
            params,
            detections,
            out,
            seed,
            runs,
        } => {
            let params = params.resolve(ModelParams::pets2009())?;
            commands::run_track(&params, &detections, &out, seed, runs)
        }
        Command::Simulate {
            params,
            frames,
            seed,
            objects,
            stationary,
            confine,
            out_truth,
            out_detections,
        } => {
            let params = params.resolve(ModelParams::pets2009())?;
            let initial = match (objects, stationary) {
                (Some(k), _) => InitialPopulation::Count(k),
                (None, true) => InitialPopulation::Stationary,
                (None, false) => InitialPopulation::Empty,
            };
            commands::run_simulate(
                &params,
                frames,
                seed,
                initial,
                confine,
                &out_truth,
                &out_detections,
            )
        }
        Command::Evaluate {
            ground_truth,
            tracks,
            threshold,
            out,
        } => commands::run_evaluate(&ground_truth, &tracks, threshold, out.as_deref()).map(|_| ()),
        Command::PruneBench {
            params,
            frames,
            seed,
            runs,
            out,
        } => {
            let params = params.resolve(settrack::bench::bench_params())?;
            commands::run_prune_bench_cmd(&params, frames, seed, runs, out.as_deref()).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string();
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
