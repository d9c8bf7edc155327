//! `hypercloud` command-line driver.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hypercloud::bandselect::{SelectMode, DEFAULT_CLUSTER_THRESHOLD};
use hypercloud::hypercube::DEFAULT_AUX_FRACTION;
use hypercloud::metrics::DEFAULT_CLOUDY_THRESHOLD;
use hypercloud::models::ModelKind;
use hypercloud::pipeline::{DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE};
use hypercloud::ErrorClass;

#[derive(Debug, Parser)]
#[command(
    name = "hypercloud",
    version,
    about = "Cloud segmentation toolkit for hyperspectral tiles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cut a scene (and optional mask) into square tiles
    Tile(TileArgs),
    /// Choose spectral channels from a tile set
    Select(SelectArgs),
    /// Train a model on a tile set
    Train(TrainArgs),
    /// Segment tiles with a trained model
    Infer(InferArgs),
    /// Score predicted masks against ground truth
    Eval(EvalArgs),
    /// Time per-tile inference and report model size
    Bench(BenchArgs),
    /// Write a false-colour RGB composite of a cube
    Composite(CompositeArgs),
    /// Merge evaluation reports and print them as tables
    Report(ReportArgs),
    /// Class distribution and cloud-coverage histogram of a tile set
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Single,
    Perclass,
    #[value(name = "every2nd")]
    Every2nd,
}

impl From<ModeArg> for SelectMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Single => SelectMode::Single,
            ModeArg::Perclass => SelectMode::PerClass,
            ModeArg::Every2nd => SelectMode::EverySecond,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Liunet1d,
    Unet2dsimple,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Liunet1d => ModelKind::LiuNet1d,
            ModelArg::Unet2dsimple => ModelKind::UNet2dSimple,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SetArg {
    All,
    Train,
    Val,
    Test,
    /// Validation and test tiles together
    Heldout,
}

#[derive(Debug, Args)]
pub struct Threads {
    /// Worker threads for parallel sections; 0 uses every core
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct TileArgs {
    /// Scene cube (.hsc)
    pub scene: PathBuf,
    /// Ground-truth mask of the scene (.msk)
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Output directory, created if missing
    #[arg(long)]
    pub out: PathBuf,
    /// Tile edge in pixels
    #[arg(long, default_value_t = 254)]
    pub tile_size: usize,
    /// Scene name used in tile ids [default: scene file stem]
    #[arg(long)]
    pub scene_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Directory of tiles
    pub tiles: PathBuf,
    /// Selection scenario
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Output band selection file (.json)
    #[arg(long)]
    pub out: PathBuf,
    /// Pearson correlation at which neighbouring channels join a cluster
    #[arg(long, default_value_t = DEFAULT_CLUSTER_THRESHOLD)]
    pub threshold: f64,
    /// Use every N-th pixel of each tile
    #[arg(long, default_value_t = 1)]
    pub pixel_stride: usize,
    /// Wavelength table (index,wavelength_nm) to annotate the selection
    #[arg(long)]
    pub wavelengths: Option<PathBuf>,
    #[command(flatten)]
    pub threads: Threads,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of tiles with masks
    pub tiles: PathBuf,
    /// Band selection file from `select`
    #[arg(long)]
    pub bands: PathBuf,
    /// Network to train
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Output model directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    pub batch_size: usize,
    /// Adam learning rate
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    pub lr: f64,
    /// Seed for the split, initialisation and shuffling
    #[arg(long, env = "HYPERCLOUD_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Use every N-th pixel as a 1D training sample
    #[arg(long, default_value_t = 1)]
    pub pixel_stride: usize,
    /// Feed selected channels without per-channel standardization
    #[arg(long, default_value_t = false)]
    pub raw_inputs: bool,
    /// Keep all tiles of a scene in the same split
    #[arg(long, default_value_t = false)]
    pub by_scene: bool,
    #[command(flatten)]
    pub threads: Threads,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Directory of tiles
    pub tiles: PathBuf,
    /// Trained model directory
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory for predicted masks
    #[arg(long)]
    pub out: PathBuf,
    /// Which tiles to segment (all but `all` need the model's split.json)
    #[arg(long, value_enum, default_value_t = SetArg::All)]
    pub set: SetArg,
    #[command(flatten)]
    pub threads: Threads,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of predicted masks
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of ground-truth masks
    #[arg(long)]
    pub truth: PathBuf,
    /// Output report file (.json)
    #[arg(long)]
    pub out: PathBuf,
    /// Trained model directory, used to label the report entry
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Model label when no model directory is given
    #[arg(long, value_enum)]
    pub kind: Option<ModelArg>,
    /// Channel-count label when no model directory is given
    #[arg(long)]
    pub channels: Option<usize>,
    /// Split file; scores validation and test tiles separately
    /// [default: all predictions count as test]
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Cloud cover a tile must exceed to count as cloudy
    #[arg(long, default_value_t = DEFAULT_CLOUDY_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Directory of tiles
    pub tiles: PathBuf,
    /// Trained model directory
    #[arg(long)]
    pub model: PathBuf,
    /// Output report file (.json)
    #[arg(long)]
    pub out: PathBuf,
    /// Timed passes over the tile set
    #[arg(long, default_value_t = 1)]
    pub repetitions: usize,
    /// Time at most this many tiles; 0 means no limit
    #[arg(long, default_value_t = 0)]
    pub max_tiles: usize,
    /// Which tiles to time (all but `all` need the model's split.json)
    #[arg(long, value_enum, default_value_t = SetArg::Heldout)]
    pub set: SetArg,
    #[command(flatten)]
    pub threads: Threads,
}

#[derive(Debug, Args)]
pub struct CompositeArgs {
    /// Cube (.hsc)
    pub cube: PathBuf,
    /// Output image (.ppm)
    #[arg(long)]
    pub out: PathBuf,
    /// Red, green and blue band indices
    #[arg(long, value_delimiter = ',', required = true)]
    pub rgb: Vec<usize>,
    /// Two auxiliary band indices blended into every channel
    #[arg(long, value_delimiter = ',', required = true)]
    pub aux: Vec<usize>,
    /// Weight of the auxiliary band mean
    #[arg(long, default_value_t = DEFAULT_AUX_FRACTION)]
    pub aux_fraction: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report files to merge; later files win on overlapping entries
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Write the merged report (.json)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the rendered tables to this file as well as stdout
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Directory of tiles with masks
    pub tiles: PathBuf,
}

/// Failure of a subcommand, mapped to an exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(hypercloud::Error),
}

impl From<hypercloud::Error> for CliError {
    fn from(e: hypercloud::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e.class() {
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::Core(e) => e.kind(),
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }

    /// Single machine-parsable line: `error: kind=<Kind> code=<n> message=<json string>`.
    pub fn line(&self) -> String {
        format!(
            "error: kind={} code={} message={}",
            self.kind(),
            self.exit_code(),
            serde_json::to_string(&self.message()).expect("string serializes")
        )
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                // --help / --version
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let err = CliError::Usage(e.kind().to_string());
            eprintln!("{}", err.line());
            return ExitCode::from(err.exit_code());
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code())
        }
    }
}
