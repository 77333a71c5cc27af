//! Multinomial random forests: impurity-weighted random split selection,
//! a greedy baseline, privacy budgeting and auditing, and an evaluation
//! harness.

pub mod data;
pub mod error;
pub mod forest;
pub mod harness;
pub mod impurity;
pub mod privacy;
pub mod rng;
pub mod splitsel;
pub mod tree;

pub use data::{
    load_dataset, load_feature_rows, make_folds, partition, CsvOptions, Dataset, FeatureRows, FoldPlan, LabelColumn,
    Partition,
};
pub use error::{Error, ErrorClass, Result};
pub use forest::{
    predict, predict_batch, train_baseline_rf, train_mrf, BaselineConfig, BatchPrediction, Forest, ForestConfig,
    MrfConfig, Variant,
};
pub use harness::{
    average_ranks, emit_report, run_cv, sweep, tree_accuracy_distribution, wilcoxon_signed_rank, CvReport, Method,
    Report, ReportFormat, SweepReport,
};
pub use impurity::{impurity, impurity_decrease, ClassCounts, Criterion, SplitCandidate};
pub use privacy::{allocate_budget, compose_budget, AuditReport, NeighborGrid, PrivacyBudget};
pub use splitsel::Scale;
pub use tree::{build_greedy_tree, build_tree, leaf_distribution, predict_tree, tree_depth, Node, Tree, TreeParams};
