use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{sig6, Report};
use crate::data::{make_folds, Dataset, FoldPlan};
use crate::error::Result;
use crate::forest::{
    accuracy, predict_batch, train_baseline_rf, train_mrf, BaselineConfig, Forest, ForestConfig, MrfConfig,
};
use crate::rng::{derive_seed, stream, Domain};
use crate::splitsel::Scale;

/// A forest recipe to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "config", rename_all = "snake_case")]
pub enum Method {
    Mrf(MrfConfig),
    /// The multinomial forest with `B1 = B2 = 0`, whatever the config says.
    CompletelyRandom(MrfConfig),
    Breiman(BaselineConfig),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Mrf(_) => "mrf",
            Method::CompletelyRandom(_) => "completely_random",
            Method::Breiman(_) => "breiman",
        }
    }

    pub fn train(&self, dataset: &Dataset, seed: u64) -> Result<Forest> {
        match self {
            Method::Mrf(c) => train_mrf(dataset, &MrfConfig { seed, ..c.clone() }),
            Method::CompletelyRandom(c) => train_mrf(dataset, &MrfConfig { seed, ..c.clone() }.completely_random()),
            Method::Breiman(c) => train_baseline_rf(dataset, &BaselineConfig { seed, ..c.clone() }),
        }
    }

    fn config(&self) -> ForestConfig {
        match self {
            Method::Mrf(c) => ForestConfig::Mrf(c.clone()),
            Method::CompletelyRandom(c) => ForestConfig::Mrf(c.clone().completely_random()),
            Method::Breiman(c) => ForestConfig::Baseline(c.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
    /// Wall-clock time to train and evaluate this fold.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub dataset: String,
    pub method: String,
    pub config: ForestConfig,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub results: Vec<FoldResult>,
    pub mean_accuracy: f64,
    /// Sample standard deviation of the fold accuracies.
    pub std: f64,
}

impl CvReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.accuracy).collect()
    }

    /// The report with all timings zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.results.iter_mut().for_each(|f| f.seconds = 0.0);
        r
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// The fold plan every method sees for a given seed.
pub fn fold_plan(n: usize, folds: usize, repeats: usize, seed: u64) -> Result<FoldPlan> {
    make_folds(n, folds, repeats, &mut stream(seed, Domain::Folds, 0))
}

/// Repeated k-fold cross-validation. The fold plan and the per-cell seeds
/// depend only on `seed`, so different methods are evaluated on identical
/// splits.
pub fn run_cv(
    dataset: &Dataset,
    name: &str,
    method: &Method,
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<CvReport> {
    let plan = fold_plan(dataset.n_samples(), folds, repeats, seed)?;
    run_cv_with_plan(dataset, name, method, &plan, seed)
}

pub fn run_cv_with_plan(
    dataset: &Dataset,
    name: &str,
    method: &Method,
    plan: &FoldPlan,
    seed: u64,
) -> Result<CvReport> {
    let cells: Vec<_> = plan.cells().collect();
    let results = cells
        .par_iter()
        .map(|&(repeat, fold, split)| {
            let started = Instant::now();
            let cell = (repeat * plan.folds + fold) as u64;
            let train = dataset.subset(&split.train)?;
            let forest = method.train(&train, derive_seed(seed, Domain::Cell, cell))?;
            let rows: Vec<&[f64]> = split.test.iter().map(|&i| dataset.row(i)).collect();
            let truth: Vec<usize> = split.test.iter().map(|&i| dataset.label(i)).collect();
            let predicted = predict_batch(&forest, &rows, derive_seed(seed, Domain::Evaluate, cell));
            Ok(FoldResult {
                repeat,
                fold,
                train_size: split.train.len(),
                test_size: split.test.len(),
                accuracy: accuracy(&predicted.classes, &truth),
                seconds: started.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean_accuracy, std) = mean_std(&results.iter().map(|r| r.accuracy).collect::<Vec<_>>());
    Ok(CvReport {
        dataset: name.into(),
        method: method.name().into(),
        config: method.config(),
        folds: plan.folds,
        repeats: plan.repeats,
        seed,
        results,
        mean_accuracy,
        std,
    })
}

impl Report for CvReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec![
            "dataset",
            "method",
            "repeat",
            "fold",
            "train_size",
            "test_size",
            "accuracy",
            "seconds",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.results
            .iter()
            .map(|r| {
                vec![
                    self.dataset.clone(),
                    self.method.clone(),
                    r.repeat.to_string(),
                    r.fold.to_string(),
                    r.train_size.to_string(),
                    r.test_size.to_string(),
                    sig6(r.accuracy),
                    sig6(r.seconds),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub b1: Scale,
    pub b2: Scale,
    pub mean_accuracy: f64,
    pub std: f64,
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub dataset: String,
    pub base: MrfConfig,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub b1_grid: Vec<Scale>,
    pub b2_grid: Vec<Scale>,
    /// Row-major over `b1_grid` then `b2_grid`.
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn cell(&self, b1: Scale, b2: Scale) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.b1 == b1 && c.b2 == b2)
    }
}

/// Cross-validates the multinomial forest at every `(B1, B2)` grid point on
/// one shared fold plan.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    dataset: &Dataset,
    name: &str,
    b1_grid: &[Scale],
    b2_grid: &[Scale],
    base: &MrfConfig,
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<SweepReport> {
    if b1_grid.is_empty() || b2_grid.is_empty() {
        return Err(crate::error::Error::Config("sweep grids must be non-empty".into()));
    }
    let plan = fold_plan(dataset.n_samples(), folds, repeats, seed)?;
    let points: Vec<(Scale, Scale)> = b1_grid
        .iter()
        .flat_map(|&a| b2_grid.iter().map(move |&b| (a, b)))
        .collect();
    let cells = points
        .par_iter()
        .map(|&(b1, b2)| {
            let method = Method::Mrf(MrfConfig { b1, b2, ..base.clone() });
            let report = run_cv_with_plan(dataset, name, &method, &plan, seed)?;
            Ok(SweepCell {
                b1,
                b2,
                mean_accuracy: report.mean_accuracy,
                std: report.std,
                accuracies: report.accuracies(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        dataset: name.into(),
        base: base.clone(),
        folds,
        repeats,
        seed,
        b1_grid: b1_grid.to_vec(),
        b2_grid: b2_grid.to_vec(),
        cells,
    })
}

impl Report for SweepReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["B1", "B2", "mean_acc", "std"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let scale = |s: Scale| s.finite().map_or_else(|| "inf".to_string(), sig6);
        self.cells
            .iter()
            .map(|c| vec![scale(c.b1), scale(c.b2), sig6(c.mean_accuracy), sig6(c.std)])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeAccuracyReport {
    pub forest_accuracy: f64,
    /// Accuracy of each tree's own votes, in tree order.
    pub tree_accuracies: Vec<f64>,
}

/// Accuracy of every individual tree on the given rows, read off the vote
/// matrix of one batch prediction.
pub fn tree_accuracy_distribution<X: AsRef<[f64]> + Sync>(
    forest: &Forest,
    rows: &[X],
    labels: &[usize],
    seed: u64,
) -> TreeAccuracyReport {
    let batch = predict_batch(forest, rows, seed);
    TreeAccuracyReport {
        forest_accuracy: accuracy(&batch.classes, labels),
        tree_accuracies: batch.votes.iter().map(|v| accuracy(v, labels)).collect(),
    }
}

impl Report for TreeAccuracyReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["tree", "accuracy"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.tree_accuracies
            .iter()
            .enumerate()
            .map(|(i, a)| vec![i.to_string(), sig6(*a)])
            .collect()
    }
}
