use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mrf_core::{Criterion, LabelColumn, ReportFormat, Scale, Variant};

#[derive(Debug, Parser)]
#[command(
    name = "mrf",
    version,
    about = "Multinomial random forests: training, evaluation and privacy audits"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a forest and write it as a versioned JSON model file.
    Train(TrainArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Repeated k-fold cross-validation, optionally paired with a second method.
    Cv(CvArgs),
    /// Cross-validate the multinomial forest over a (B1, B2) grid.
    Sweep(SweepArgs),
    /// Exhaustively audit the three exponential mechanisms on a small dataset.
    Audit(AuditArgs),
    /// Split a total privacy budget into per-mechanism scales.
    Budget(BudgetArgs),
    /// Accuracy of every individual tree of a saved model.
    TreeDist(TreeDistArgs),
    /// Average ranks of methods across datasets from a CSV of accuracies.
    Rank(RankArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Delimited table with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column: `last`, a 0-based index or a header name.
    #[arg(long, default_value = "last")]
    pub label_col: LabelColumn,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
}

#[derive(Debug, Clone, Args)]
pub struct ForestArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Minimum estimation points per leaf (node size for the baseline).
    #[arg(long, default_value_t = 5)]
    pub min_leaf: usize,
    /// Feature selection sharpness, a non-negative number or `inf`.
    #[arg(long, default_value = "10")]
    pub b1: Scale,
    /// Split value selection sharpness.
    #[arg(long, default_value = "10")]
    pub b2: Scale,
    /// Leaf label sharpness; `inf` takes the majority label.
    #[arg(long, default_value = "inf")]
    pub b3: Scale,
    /// Ratio of structure to estimation points.
    #[arg(long, default_value_t = 1.0)]
    pub partition_rate: f64,
    #[arg(long, default_value = "gini")]
    pub criterion: Criterion,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// mrf, breiman or completely-random.
    #[arg(long, default_value = "mrf")]
    pub method: Variant,
    /// Features tried per node by the baseline; default floor(sqrt(D)).
    #[arg(long)]
    pub mtry: Option<usize>,
    /// Grow baseline trees on the full training set instead of a bootstrap sample.
    #[arg(long)]
    pub no_bootstrap: bool,
    /// Total privacy budget; overrides B1, B2, B3 and the depth cap.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Share of each layer's budget spent on feature selection.
    #[arg(long, default_value_t = 0.5)]
    pub budget_split: f64,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, default_value = "json")]
    pub format: ReportFormat,
    /// Output file; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Rows to predict; extra columns are ignored. If the label column is
    /// present, accuracy is reported.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column header name; by default the last column if it is not a feature.
    #[arg(long)]
    pub label_col: Option<String>,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// Seed for randomized leaf labels.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Evaluate a second method on the same folds and test the paired difference.
    #[arg(long)]
    pub compare: Option<Variant>,
    /// Dataset name used in reports; defaults to the file stem.
    #[arg(long)]
    pub name: Option<String>,
    /// Read the fold plan from this JSON file instead of drawing one.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Write the fold plan used to this JSON file.
    #[arg(long)]
    pub save_plan: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,1,5,10,inf")]
    pub b1_grid: Vec<Scale>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,5,10,inf")]
    pub b2_grid: Vec<Scale>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Small dataset (at most 32 rows) to audit.
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Audit the value mechanism on this feature only; default every feature.
    #[arg(long)]
    pub feature: Option<usize>,
    /// Use every class as a replacement label, not only those present.
    #[arg(long)]
    pub all_labels: bool,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 5)]
    pub min_leaf: usize,
    #[arg(long, default_value_t = 1.0)]
    pub partition_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    pub budget_split: f64,
    /// Training set size; alternatively pass --data.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    pub n: Option<usize>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "last")]
    pub label_col: LabelColumn,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TreeDistArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Labelled evaluation rows.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column header name; by default the last column.
    #[arg(long)]
    pub label_col: Option<String>,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// CSV with header `dataset,method,accuracy`.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}
