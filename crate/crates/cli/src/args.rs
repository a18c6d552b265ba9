use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "salaudit",
    version,
    about = "Generate, train, explain and audit saliency maps"
)]
pub struct Cli {
    /// Master seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Run directory for all outputs.
    #[arg(long, global = true, env = "SALAUDIT_OUT", default_value = "run")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Write a synthetic lesion dataset.
    Generate(GenerateArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Train several models on balanced subsets with random hyperparameters.
    Suite(SuiteArgs),
    /// Saliency map for one image.
    Explain(ExplainArgs),
    /// Sanity checks and the spurious-correlation screen.
    Audit(AuditArgs),
    /// SSIM between two CSV maps.
    Ssim(SsimArgs),
    /// Re-run a command from its config.json.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Clean,
    Biased,
    Imbalanced,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value_t = Preset::Clean)]
    pub preset: Preset,
    #[arg(long)]
    pub naevi: Option<usize>,
    #[arg(long)]
    pub melanoma: Option<usize>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    /// Image side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    /// Dark-corner strength; adds the artifact to presets without one.
    #[arg(long)]
    pub strength: Option<f64>,
    /// Artifact probability for naevi.
    #[arg(long)]
    pub p0: Option<f64>,
    /// Artifact probability for melanoma.
    #[arg(long)]
    pub p1: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, default_value = "model")]
    pub model_id: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SuiteArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub models: usize,
    /// Number of distinct balanced subsets; models cycle through them.
    #[arg(long, default_value_t = 3)]
    pub subsets: usize,
    /// Images per class in each subset; defaults to the smaller class.
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Melanoma expansion factor by flips and rotations, in [1, 8].
    #[arg(long, default_value_t = 1.0)]
    pub expansion: f64,
    #[arg(long)]
    pub epochs_min: Option<usize>,
    #[arg(long)]
    pub epochs_max: Option<usize>,
    #[arg(long)]
    pub lr_min: Option<f64>,
    #[arg(long)]
    pub lr_max: Option<f64>,
    /// Every member uses the master seed instead of its own.
    #[arg(long)]
    pub shared_seeds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodArg {
    #[value(name = "gradcam")]
    #[serde(rename = "gradcam")]
    GradCam,
    Kshap,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundArg {
    Mean,
    Gray,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputArg {
    Probability,
    Logit,
}

/// How a saliency map is produced.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MethodArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::GradCam)]
    pub method: MethodArg,
    /// Explained class; 1 is melanoma.
    #[arg(long, default_value_t = 1)]
    pub class: usize,
    /// Kernel SHAP feature count; must be a perfect square.
    #[arg(long, default_value_t = 64)]
    pub segments: usize,
    /// Kernel SHAP coalition draws, or `exhaustive`.
    #[arg(long, default_value = "2048")]
    pub samples: String,
    #[arg(long, value_enum, default_value_t = BackgroundArg::Mean)]
    pub background: BackgroundArg,
    #[arg(long, value_enum, default_value_t = OutputArg::Probability)]
    pub output: OutputArg,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// RGB PNG matching the model input size.
    #[arg(long)]
    pub image: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub method: MethodArgs,
}

/// Test images drawn from a dataset directory.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ImageArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Number of test images, in manifest order.
    #[arg(long, default_value_t = 20)]
    pub limit: usize,
    /// Only images carrying the dark-corner artifact.
    #[arg(long)]
    pub artifact_only: bool,
    /// SSIM window side.
    #[arg(long, default_value_t = 8)]
    pub window: usize,
    /// Sliding SSIM windows instead of non-overlapping ones.
    #[arg(long)]
    pub sliding: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AuditArgs {
    #[command(subcommand)]
    pub check: AuditCheck,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeArg {
    Cascading,
    Independent,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum AuditCheck {
    /// Recompute maps with different seeds and compare them.
    Repro {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 2)]
        repeats: usize,
        #[command(flatten)]
        #[serde(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        #[serde(flatten)]
        images: ImageArgs,
    },
    /// Randomize layers from the output side and compare maps.
    Randomize {
        #[arg(long)]
        model: PathBuf,
        /// `topN` or a comma-separated list of layer ids, output side first.
        #[arg(long, default_value = "top5")]
        layers: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Cascading)]
        mode: ModeArg,
        #[command(flatten)]
        #[serde(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        #[serde(flatten)]
        images: ImageArgs,
    },
    /// Compare maps across models with similar test AUC.
    Sensitivity {
        #[arg(long, num_args = 2.., required = true)]
        models: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.02)]
        auc_tolerance: f64,
        #[command(flatten)]
        #[serde(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        #[serde(flatten)]
        images: ImageArgs,
    },
    /// Corner-mass screen of a suspect model against a control.
    Spurious {
        #[arg(long)]
        biased: PathBuf,
        #[arg(long)]
        control: PathBuf,
        #[arg(long, default_value_t = 0.15)]
        corner_fraction: f64,
        #[arg(long, default_value_t = 2.0)]
        threshold: f64,
        #[command(flatten)]
        #[serde(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        #[serde(flatten)]
        images: ImageArgs,
    },
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SsimArgs {
    /// CSV grid, one row per line.
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub window: usize,
    #[arg(long)]
    pub sliding: bool,
    /// Compare the maps as given instead of min-max normalized.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// A config.json written by an earlier run.
    pub echo: PathBuf,
}
