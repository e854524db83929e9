use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::eval::MaskKind;
use crate::gbt::GbtParams;
use crate::grid::ValueRange;
use crate::models::ModelKind;
use crate::smoothing::{EdgeMode, SgParams};

#[derive(Debug, Parser)]
#[command(
    name = "stgap",
    version,
    about = "Gap filling for gridded daily rasters"
)]
pub struct Cli {
    /// Worker threads (0 = one per core). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Write the run manifest here instead of to stderr.
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene: cube, auxiliary layers and scene spec.
    Synth(SynthArgs),
    /// Hide observed cells of a cube and write the hidden truth table.
    Mask(MaskArgs),
    /// Fit a model on a held-out split and report test accuracy.
    Train(TrainArgs),
    /// Fill the gaps of a cube with a trained model.
    Reconstruct(ReconstructArgs),
    /// Score a predicted cube against a truth table or truth cube.
    Evaluate(EvaluateArgs),
    /// Run a parameter, window, training-fraction or ablation sweep.
    Sweep(SweepArgs),
    /// Rank the features of a trained model by split gain.
    Importance(ImportanceArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    /// Output directory; receives cube.grid, aux.grid and scene.json.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub rows: usize,
    #[arg(long, default_value_t = 64)]
    pub cols: usize,
    #[arg(long, default_value_t = 60)]
    pub days: usize,
    #[arg(long, default_value_t = 0.02)]
    pub noise_sigma: f64,
    #[arg(long, default_value = "synthetic")]
    pub tile_id: String,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_name = "PATH")]
    pub cube: PathBuf,
    #[arg(long, value_enum, default_value_t = MaskKindArg::Blob)]
    pub kind: MaskKindArg,
    /// Fraction of observed cells to hide.
    #[arg(long, value_parser = open_unit)]
    pub ratio: f64,
    /// Coarsest blob noise spacing in cells.
    #[arg(long, default_value_t = 8.0)]
    pub corr_length: f64,
    /// Masked cube output.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Hidden truth CSV output.
    #[arg(long, value_name = "PATH")]
    pub truth: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MaskKindArg {
    Uniform,
    Blob,
}

impl From<MaskKindArg> for MaskKind {
    fn from(k: MaskKindArg) -> Self {
        match k {
            MaskKindArg::Uniform => MaskKind::Uniform,
            MaskKindArg::Blob => MaskKind::Blob,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Mlr,
    Rf,
    Xgb,
    Txgb,
    Sxgb,
    Stxgb,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Mlr => ModelKind::Mlr,
            ModelArg::Rf => ModelKind::Rf,
            ModelArg::Xgb => ModelKind::Xgb,
            ModelArg::Txgb => ModelKind::Txgb,
            ModelArg::Sxgb => ModelKind::Sxgb,
            ModelArg::Stxgb => ModelKind::Stxgb,
        }
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Stxgb)]
    pub model: ModelArg,
    #[arg(long, value_parser = positive_at_most_one, default_value_t = GbtParams::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = GbtParams::default().max_depth)]
    pub max_depth: usize,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = GbtParams::default().n_estimators as u64)]
    pub n_estimators: u64,
    #[arg(long, value_parser = non_negative, default_value_t = GbtParams::default().lambda)]
    pub lambda: f64,
    #[arg(long, value_parser = non_negative, default_value_t = GbtParams::default().gamma)]
    pub gamma: f64,
    /// Spatial neighbour half-window.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 1)]
    pub sw: u64,
    /// Temporal neighbour half-window.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 1)]
    pub tw: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_name = "PATH")]
    pub cube: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub aux: PathBuf,
    #[arg(long, value_parser = open_unit, default_value_t = 0.7)]
    pub train_fraction: f64,
    /// Model JSON output.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct SgArgs {
    #[arg(long, default_value_t = SgParams::default().window_length)]
    pub sg_window: usize,
    #[arg(long, default_value_t = SgParams::default().polyorder)]
    pub sg_order: usize,
    /// Skip Savitzky-Golay smoothing.
    #[arg(long)]
    pub no_sg: bool,
    /// Let smoothing change observed cells too.
    #[arg(long)]
    pub no_sg_pin: bool,
    /// Pad series ends by reflection instead of fitting the end windows.
    #[arg(long)]
    pub sg_mirror: bool,
}

impl SgArgs {
    pub fn params(&self) -> Option<SgParams> {
        (!self.no_sg).then(|| SgParams {
            window_length: self.sg_window,
            polyorder: self.sg_order,
            pin_observed: !self.no_sg_pin,
            edge: if self.sg_mirror {
                EdgeMode::Mirror
            } else {
                EdgeMode::Interp
            },
        })
    }
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long, value_name = "PATH")]
    pub cube: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub aux: PathBuf,
    /// Model JSON from `train`.
    #[arg(long, value_name = "PATH")]
    pub model_file: PathBuf,
    /// Filled cube output.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Clamp range `LO,HI` for filled values; defaults to the cube's range.
    #[arg(long, value_parser = value_range)]
    pub value_range: Option<ValueRange>,
    /// Recompute neighbour means from filled values until they settle.
    #[arg(long)]
    pub iterative: bool,
    #[command(flatten)]
    pub sg: SgArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predicted cube.
    #[arg(long, value_name = "PATH")]
    pub pred: PathBuf,
    /// Hidden truth CSV from `mask`.
    #[arg(
        long,
        value_name = "PATH",
        conflicts_with = "truth_cube",
        required_unless_present = "truth_cube"
    )]
    pub truth: Option<PathBuf>,
    /// Reference cube; scores its valid cells.
    #[arg(long, value_name = "PATH")]
    pub truth_cube: Option<PathBuf>,
    /// With --truth-cube, score only cells invalid in this masked cube.
    #[arg(long, value_name = "PATH", requires = "truth_cube")]
    pub masked: Option<PathBuf>,
    /// Append one row per day.
    #[arg(long)]
    pub per_day: bool,
    #[arg(long, default_value = "stgap")]
    pub label: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    Params,
    Windows,
    TrainFraction,
    Ablation,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_name = "PATH")]
    pub cube: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub aux: PathBuf,
    #[arg(long, value_enum)]
    pub axis: AxisArg,
    /// Base model for every point.
    #[arg(long, value_enum, default_value_t = ModelArg::Stxgb)]
    pub model: ModelArg,
    /// Comma-separated values for the params axis (base value when omitted).
    #[arg(long, value_delimiter = ',', value_parser = positive_at_most_one)]
    pub learning_rate: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub max_depth: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..))]
    pub n_estimators: Vec<u64>,
    #[arg(long, value_parser = non_negative, default_value_t = GbtParams::default().lambda)]
    pub lambda: f64,
    #[arg(long, value_parser = non_negative, default_value_t = GbtParams::default().gamma)]
    pub gamma: f64,
    /// Comma-separated values for the windows axis.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..))]
    pub sw: Vec<u64>,
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..))]
    pub tw: Vec<u64>,
    /// Training fraction; a comma-separated list on the train-fraction axis.
    #[arg(long, value_delimiter = ',', value_parser = open_unit)]
    pub train_fraction: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    /// Model JSON from `train`.
    #[arg(long, value_name = "PATH")]
    pub model_file: PathBuf,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

fn open_unit(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} must lie strictly between 0 and 1"))
    }
}

fn positive_at_most_one(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} must lie in (0, 1]"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be >= 0"))
    }
}

fn value_range(s: &str) -> Result<ValueRange, String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("'{s}' is not LO,HI"))?;
    ValueRange::new(parse_f64(lo)?, parse_f64(hi)?).map_err(|e| e.to_string())
}
