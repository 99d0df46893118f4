use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use xcb_core::models::ModelKind;

#[derive(Parser, Debug)]
#[command(name = "xcb", version, about = "Cross-modal concept bottleneck experiments on the Shapes corpus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a Shapes corpus.
    GenData(GenDataArgs),
    /// Train one model and write a run directory.
    Train(TrainArgs),
    /// Re-evaluate a run directory on a dataset's test split.
    Eval(EvalArgs),
    /// Train the ablation grid over the seed list and write a delta table.
    Ablate(ExperimentArgs),
    /// Train standard and XCB models on shortcut-marked data and compare them on clean test data.
    Robustness(RobustnessArgs),
    /// Dump the tokens each latent factor attends to.
    Concepts(ConceptsArgs),
    /// Integrated-gradients maps and shortcut-corner shares.
    Attribute(AttributeArgs),
    /// Build or score an interpretability survey.
    #[command(subcommand)]
    Survey(SurveyCommand),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 2700)]
    pub n: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Draw the class digit into the top-left corner of every image.
    #[arg(long)]
    pub shortcut: bool,
    /// Fraction of captions replaced by a caption of another class.
    #[arg(long, default_value_t = 0.0)]
    pub noisy_frac: f64,
    /// Append a paraphrase to every caption.
    #[arg(long)]
    pub redundant: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Options that resolve a training configuration.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// JSON training configuration; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dotted override, e.g. `--set loss.lambda_tie=0.5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated subset of f1,per_class,dci.
    #[arg(long, default_value = "f1,per_class,dci")]
    pub metrics: String,
    /// Also write the report here as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated seed list; defaults to the configuration's.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct RobustnessArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Test images attributed per model (0 skips attribution).
    #[arg(long, default_value_t = 16)]
    pub attribute: usize,
    /// Integrated-gradients steps.
    #[arg(long, default_value_t = 64)]
    pub steps: usize,
}

#[derive(Args, Debug)]
pub struct ConceptsArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AttributeArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub steps: usize,
    /// Number of test images to attribute.
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum SurveyCommand {
    /// Write survey questions built from a run's concepts.
    Gen(SurveyGenArgs),
    /// Score answers (option indices) against a question file.
    Score(SurveyScoreArgs),
}

#[derive(Args, Debug)]
pub struct SurveyGenArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub questions: usize,
    #[arg(long, default_value_t = 3)]
    pub top_k: usize,
    #[arg(long, default_value_t = 5)]
    pub images: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SurveyScoreArgs {
    #[arg(long)]
    pub questions: PathBuf,
    /// Comma-separated chosen option per question.
    #[arg(long, value_delimiter = ',', required = true)]
    pub answers: Vec<usize>,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: xcb_core::Error| e.to_string())
}
