//! Evaluation: cross-validation, sweeps, statistical comparison and reports.

mod cv;
mod rank;
mod report;
mod wilcoxon;

pub use cv::{
    fold_plan, run_cv, run_cv_with_plan, sweep, tree_accuracy_distribution, CvReport, FoldResult, Method, SweepCell,
    SweepReport, TreeAccuracyReport,
};
pub use rank::{average_ranks, read_rank_rows, RankRow, RankTable};
pub use report::{emit_report, render_report, sig6, Report, ReportFormat};
pub use wilcoxon::wilcoxon_signed_rank;
