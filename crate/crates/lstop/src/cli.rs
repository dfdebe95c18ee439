//! Command-line interface: flag definitions and dispatch.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error (clap reports its
//! own parse failures with 2 as well), 3 training divergence abort.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::commands;

#[derive(Parser, Debug)]
#[command(
    name = "lstop",
    version,
    about = "Learned iterative sparse recovery with an instance-adaptive stopping policy"
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Generate train/test datasets of synthetic sparse-recovery problems.
    Gen(GenArgs),
    /// Grid-search classical-solver hyperparameters on the training set.
    Tune(TuneArgs),
    /// Train the unrolled model and stopping policy.
    Train(TrainArgs),
    /// Evaluate methods on a fixed test set and emit reports.
    Eval(EvalArgs),
    /// Merge evaluation reports into one comparison table.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    /// m=50, n=100, 20k train, 500 test per SNR.
    Desk,
    /// m=250, n=500, 50k train, 1000 test per SNR.
    Paper,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Preset problem scale.
    #[arg(long, value_enum, default_value = "desk")]
    pub scale: Scale,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory (train.lstp, test.lstp, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
    /// Override: measurement count.
    #[arg(long)]
    pub m: Option<usize>,
    /// Override: signal dimension.
    #[arg(long)]
    pub n: Option<usize>,
    /// Override: nonzero probability.
    #[arg(long)]
    pub p_b: Option<f64>,
    /// Override: SNR levels in dB.
    #[arg(long, value_delimiter = ',')]
    pub snr: Option<Vec<f64>>,
    /// Override: training instances.
    #[arg(long)]
    pub train_count: Option<usize>,
    /// Override: test instances per SNR level.
    #[arg(long)]
    pub test_per_snr: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Twostage,
    Aevb,
    Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TuneAlgo {
    Ista,
    Fista,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    /// Training dataset file.
    #[arg(long)]
    pub train: PathBuf,
    /// Solvers to tune.
    #[arg(long, value_delimiter = ',', default_values = ["ista", "fista"])]
    pub algos: Vec<TuneAlgo>,
    /// Iteration budgets to tune at.
    #[arg(long, value_delimiter = ',', default_values_t = [16usize])]
    pub t: Vec<usize>,
    /// Tuning-subset size (first N training instances).
    #[arg(long, default_value_t = 512)]
    pub subset: usize,
    /// l1-weight grid; defaults to 10 log-spaced points in [1e-4, 1].
    #[arg(long, value_delimiter = ',')]
    pub rho_grid: Option<Vec<f64>>,
    /// Step grid; defaults to the power-iteration step.
    #[arg(long, value_delimiter = ',')]
    pub step_grid: Option<Vec<f64>>,
    /// Output file (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stage1ModeArg {
    /// Full expectation with gradients through the oracle.
    Full,
    /// One oracle draw per sample, no oracle gradient.
    Sample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stage2ModeArg {
    /// Cross-entropy against the full oracle distribution.
    Fkl,
    /// Cross-entropy against the oracle mode.
    Map,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FeaturesArg {
    /// Raw [measurement; state] policy inputs.
    Raw,
    /// Adds the residual energy scalar.
    Residual,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training dataset file.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long, value_enum, default_value = "twostage")]
    pub algo: Algo,
    /// Run directory for checkpoints and logs.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Unrolled depth T.
    #[arg(long, default_value_t = 16)]
    pub depth: usize,
    /// Baseline-loss warm-start iterations.
    #[arg(long, default_value_t = 2000)]
    pub warm: usize,
    #[arg(long, default_value_t = 15000)]
    pub stage1: usize,
    #[arg(long, default_value_t = 5000)]
    pub stage2: usize,
    #[arg(long, default_value_t = 0)]
    pub stage3: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    /// Layer-weight decay of the baseline loss.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value = "full")]
    pub stage1_mode: Stage1ModeArg,
    #[arg(long, value_enum, default_value = "fkl")]
    pub stage2_mode: Stage2ModeArg,
    /// Stop-eligible layers (must include the final layer).
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    #[arg(long, default_value_t = 64)]
    pub hidden1: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden2: usize,
    #[arg(long, value_enum, default_value = "raw")]
    pub features: FeaturesArg,
    /// Tuning file to source the ISTA-like initialization from.
    #[arg(long)]
    pub tune: Option<PathBuf>,
    /// Explicit initialization l1 weight (overrides --tune).
    #[arg(long)]
    pub init_rho: Option<f64>,
    /// Explicit initialization step (overrides --tune).
    #[arg(long)]
    pub init_step: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Ista,
    Fista,
    ListaBaseline,
    ListaStop,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ista => "ista",
            Method::Fista => "fista",
            Method::ListaBaseline => "lista-baseline",
            Method::ListaStop => "lista-stop",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TimingArg {
    /// Measure wall time into reports.
    Wall,
    /// Report zero (byte-identical reports across runs).
    Off,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Test dataset file.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub methods: Vec<Method>,
    /// Tuning file (required for ista/fista).
    #[arg(long)]
    pub tune: Option<PathBuf>,
    /// Model checkpoint (required for lista-baseline/lista-stop).
    #[arg(long)]
    pub theta: Option<PathBuf>,
    /// Policy checkpoint (required for lista-stop).
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Iteration budget for classical methods; defaults to the model depth.
    #[arg(long)]
    pub t: Option<usize>,
    /// Stop-eligible layers the policy was trained with.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    /// Threshold of the sequential deployment mode.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
    /// Also emit a combined table across the requested methods.
    #[arg(long)]
    pub compare: bool,
    #[arg(long, value_enum, default_value = "wall")]
    pub timing: TimingArg,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Evaluation reports (JSON) to merge.
    #[arg(long, value_delimiter = ',', required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("training aborted: {0}")]
    TrainAbort(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
            CliError::TrainAbort(_) => 3,
        }
    }
}

impl From<crate::formats::FormatError> for CliError {
    fn from(e: crate::formats::FormatError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<crate::report::ReportError> for CliError {
    fn from(e: crate::report::ReportError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Gen(args) => commands::gen(args),
        Cmd::Tune(args) => commands::tune(args),
        Cmd::Train(args) => commands::train(args),
        Cmd::Eval(args) => commands::eval(args),
        Cmd::Report(args) => commands::report(args),
    }
}
