//! `landscape-lab`: data generation, training, landscape analysis, dynamics
//! simulation and staged training from the command line.

mod commands;
mod report;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use landscape_core::LabError;
use serde::{Deserialize, Serialize};

pub const FORMAT_VERSION: &str = "landscape-lab/1";
pub const SEED_ENV: &str = "LANDSCAPE_LAB_SEED";

#[derive(Parser, Debug)]
#[command(name = "landscape-lab", version, about = "Loss-landscape laboratory for Single and Looped linear attention")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a Markov dataset (and optional longer test sets).
    GenData(GenDataArgs),
    /// Train one architecture on a generated dataset.
    Train(TrainArgs),
    /// Eigenspectra of one weight block across a training run's checkpoints.
    Hessian(HessianArgs),
    /// Gradient descent on quadratic river-valley instances.
    SimulateQuad(QuadArgs),
    /// Time-varying landscapes bounded below by a fixed valley Hessian.
    SimulateGeneral(GeneralArgs),
    /// Staged Single-to-Looped training with a pure-Looped baseline.
    Shift(ShiftArgs),
    /// Gradient alignment sweep between Single and Looped models.
    Align(AlignArgs),
    /// Merge metrics across run directories.
    Report(ReportArgs),
    /// Run a named experiment recipe end to end.
    Reproduce(ReproduceArgs),
    /// Re-run a run directory from its config and compare CSV outputs.
    Replay(ReplayArgs),
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct GenDataArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 3)]
    pub vocab: usize,
    #[arg(long, default_value_t = 4)]
    pub len: usize,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 3)]
    pub matrices: usize,
    /// Comma-separated lengths of extra test sets.
    #[arg(long, value_delimiter = ',')]
    pub test_lengths: Vec<usize>,
    #[arg(long, default_value_t = 5000)]
    pub n_test: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct TrainArgs {
    /// single, looped:T or deep:L.
    #[arg(long, default_value = "looped:3")]
    pub arch: String,
    #[arg(long, default_value_t = 600)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// adam or gd.
    #[arg(long, default_value = "adam")]
    pub optimizer: String,
    /// full or a mini-batch size.
    #[arg(long, default_value = "full")]
    pub batch: String,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.02)]
    pub init_std: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub eval_every: usize,
    /// Checkpoint interval for later Hessian analysis; 0 disables.
    #[arg(long, default_value_t = 10)]
    pub checkpoint_every: usize,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct HessianArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// wk, wq, wv or wh.
    #[arg(long, default_value = "wv")]
    pub block: String,
    #[arg(long, default_value_t = 0)]
    pub layer: usize,
    #[arg(long, default_value_t = 10)]
    pub every: usize,
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
    #[arg(long, default_value_t = 0.05)]
    pub eps_rel: f64,
    /// Absolute river threshold; overrides --eps-rel.
    #[arg(long)]
    pub eps_abs: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long, default_value_t = 10.0)]
    pub kappa_v: f64,
    /// Defaults to `<run>/hessian-<block>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct QuadArgs {
    /// A JSON file, `random:N` or `pair:N`.
    #[arg(long, default_value = "random:100")]
    pub instances: String,
    #[arg(long, default_value_t = 5000)]
    pub k: usize,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Coupling norm for `pair:N`.
    #[arg(long, default_value_t = 0.1)]
    pub coupling: f64,
    /// Row stride of the trajectory CSVs.
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct GeneralArgs {
    #[arg(long, default_value = "random:50")]
    pub instances: String,
    #[arg(long, default_value_t = 5000)]
    pub k: usize,
    /// constant or periodic.
    #[arg(long, default_value = "periodic")]
    pub schedule: String,
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ShiftArgs {
    #[arg(long, default_value_t = 600)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3)]
    pub t: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub delta1: f64,
    #[arg(long, default_value_t = 10)]
    pub plateau_window: usize,
    #[arg(long, default_value_t = 30)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.2)]
    pub delta2: f64,
    #[arg(long, default_value_t = 10)]
    pub stability_window: usize,
    #[arg(long, default_value_t = 100)]
    pub shift_min: usize,
    #[arg(long, default_value_t = 150)]
    pub shift_max: usize,
    /// Fixed shift epoch instead of the plateau criterion.
    #[arg(long)]
    pub shift_at: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct AlignArgs {
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    #[arg(long, default_value_t = 6)]
    pub d: usize,
    #[arg(long, default_value_t = 3)]
    pub t: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub eps_scale: f64,
    #[arg(long, default_value_t = 0.1)]
    pub diag_lo: f64,
    #[arg(long, default_value_t = 0.4)]
    pub diag_hi: f64,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    /// Dense Gaussian weights instead of the diagonal-dominant construction.
    #[arg(long)]
    pub adversarial: bool,
    /// Compare full gradients instead of direct-path gradients.
    #[arg(long)]
    pub full_gradient: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ReproduceArgs {
    /// accuracy (per-stratum curves), spectra (W_V eigenspectra), speedup
    /// (shift sweep plus a plateau-criterion run) or length (length generalization).
    #[arg(long)]
    pub recipe: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    #[arg(long, default_value_t = 600)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3)]
    pub t: usize,
    /// Checkpoint interval for spectra.
    #[arg(long, default_value_t = 10)]
    pub every: usize,
    /// Shift points for the speedup sweep.
    #[arg(long, value_delimiter = ',', default_value = "0,30,60,90,120,150,180,240,300")]
    pub points: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "8,11,14,17")]
    pub lengths: Vec<usize>,
    #[arg(long, default_value_t = 5000)]
    pub n_test: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Fresh directory for the re-run.
    #[arg(long)]
    pub into: PathBuf,
}

/// Serialized next to every run's outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub format_version: String,
    pub command: Command,
}

/// Bad user input, as opposed to a failure while running.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(Invalid(msg.into()).into())
}

/// 1 for validation errors, 2 for runtime failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<LabError>() {
            return match e {
                LabError::Parameter(_) | LabError::Domain(_) | LabError::Shape(_) | LabError::Capacity(..) | LabError::Precondition { .. } => 1,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(LabError::TrainingAborted { dump, .. }) = e.downcast_ref::<LabError>() {
                let path = std::env::temp_dir().join("landscape-lab-abort.json");
                if std::fs::write(&path, dump).is_ok() {
                    eprintln!("state dump written to {}", path.display());
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
