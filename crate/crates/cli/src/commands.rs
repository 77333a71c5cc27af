use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use anyhow::{Context, Result};
use mrf_core::harness::{
    fold_plan, read_rank_rows, render_report, run_cv_with_plan, sig6, tree_accuracy_distribution, Report,
};
use mrf_core::privacy::{
    allocate_budget, allocate_for, audit_feature_mechanism, audit_label_mechanism, audit_value_mechanism,
};
use mrf_core::{
    average_ranks, compose_budget, emit_report, load_dataset, load_feature_rows, predict_batch, sweep,
    train_baseline_rf, train_mrf, wilcoxon_signed_rank, AuditReport, BaselineConfig, ClassCounts, CsvOptions, CvReport,
    Dataset, Error, FeatureRows, FoldPlan, Forest, Method, MrfConfig, NeighborGrid, PrivacyBudget, Scale, Variant,
};
use serde::Serialize;

use crate::args::{
    AuditArgs, BudgetArgs, CvArgs, DataArgs, ForestArgs, OutputArgs, PredictArgs, RankArgs, SweepArgs, TrainArgs,
    TreeDistArgs,
};
use crate::{Outcome, Usage};

fn delimiter(c: char) -> Result<u8> {
    u8::try_from(c)
        .ok()
        .filter(u8::is_ascii)
        .ok_or_else(|| Usage(format!("delimiter must be a single ASCII character, got {c:?}")).into())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path)
        .map_err(Error::Io)
        .with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn read_dataset(args: &DataArgs) -> Result<Dataset> {
    let options = CsvOptions {
        delimiter: delimiter(args.delimiter)?,
        label: args.label_col.clone(),
    };
    load_dataset(open(&args.data)?, &options).with_context(|| format!("reading {}", args.data.display()))
}

fn dataset_name(path: &Path, name: &Option<String>) -> String {
    name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
    })
}

fn write_report<R: Report>(report: &R, output: &OutputArgs) -> Result<()> {
    match &output.out {
        Some(path) => {
            emit_report(report, output.format, path).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{}", render_report(report, output.format)?),
    }
    Ok(())
}

fn mrf_config(f: &ForestArgs) -> MrfConfig {
    MrfConfig {
        b1: f.b1,
        b2: f.b2,
        b3: f.b3,
        min_leaf: f.min_leaf,
        trees: f.trees,
        partition_rate: f.partition_rate,
        criterion: f.criterion,
        max_depth: f.max_depth,
        seed: f.seed,
    }
}

fn baseline_config(f: &ForestArgs) -> BaselineConfig {
    BaselineConfig {
        trees: f.trees,
        min_node: f.min_leaf,
        mtry: f.mtry,
        bootstrap: !f.no_bootstrap,
        criterion: f.criterion,
        max_depth: f.max_depth,
        seed: f.seed,
    }
}

/// The multinomial configuration, with B1, B2, B3 and the depth cap taken
/// from the privacy budget when `--epsilon` is set.
fn private_config(f: &ForestArgs, n_train: usize) -> Result<(MrfConfig, Option<PrivacyBudget>)> {
    let config = mrf_config(f);
    config.validate()?;
    match f.epsilon {
        None => Ok((config, None)),
        Some(eps) => {
            let budget = allocate_for(&config, n_train, eps, f.budget_split)?;
            Ok((budget.apply(&config), Some(budget)))
        }
    }
}

fn method(f: &ForestArgs, variant: Variant, n_train: usize) -> Result<Method> {
    Ok(match variant {
        Variant::Mrf => Method::Mrf(private_config(f, n_train)?.0),
        Variant::CompletelyRandom => Method::CompletelyRandom(private_config(f, n_train)?.0),
        Variant::Breiman if f.epsilon.is_some() => {
            return Err(Usage("--epsilon applies only to the multinomial forest".into()).into())
        }
        Variant::Breiman => Method::Breiman(baseline_config(f)),
    })
}

pub fn train(args: &TrainArgs) -> Result<Outcome> {
    let ds = read_dataset(&args.data)?;
    let f = &args.forest;
    let forest = match f.method {
        Variant::Breiman => {
            if f.epsilon.is_some() {
                return Err(Usage("--epsilon applies only to the multinomial forest".into()).into());
            }
            train_baseline_rf(&ds, &baseline_config(f))?
        }
        v => {
            let (mut config, budget) = private_config(f, ds.n_samples())?;
            if v == Variant::CompletelyRandom {
                config = config.completely_random();
            }
            if let Some(b) = budget {
                eprintln!(
                    "budget: eps={} depth={} B1={} B2={} B3={}",
                    b.epsilon, b.depth, b.b1, b.b2, b.b3
                );
            }
            train_mrf(&ds, &config)?
        }
    };
    forest
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!(
        "trained {} forest: {} trees on {} rows, {} features, {} classes",
        forest.variant,
        forest.n_trees(),
        ds.n_samples(),
        forest.n_features(),
        forest.n_classes()
    );
    Ok(Outcome::Success)
}

fn load_model(path: &Path) -> Result<Forest> {
    Forest::load(path).with_context(|| format!("loading model {}", path.display()))
}

/// Reads the model's feature columns and, if found, the label column: the
/// named one, or else the last column when it is not a feature.
fn read_rows(path: &Path, forest: &Forest, label: &Option<String>, delim: char) -> Result<FeatureRows> {
    let delim = delimiter(delim)?;
    let label_name = match label {
        Some(l) => Some(l.clone()),
        None => {
            let mut reader = csv::ReaderBuilder::new().delimiter(delim).from_reader(open(path)?);
            let headers = reader.headers().map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?;
            headers
                .iter()
                .next_back()
                .map(str::trim)
                .filter(|h| !forest.feature_names.iter().any(|f| f == h))
                .map(String::from)
        }
    };
    load_feature_rows(open(path)?, delim, &forest.feature_names, label_name.as_deref())
        .with_context(|| format!("reading {}", path.display()))
}

#[derive(Serialize)]
struct PredictionRow {
    row: usize,
    predicted: String,
    label: Option<String>,
}

#[derive(Serialize)]
struct PredictionReport {
    accuracy: Option<f64>,
    predictions: Vec<PredictionRow>,
}

impl Report for PredictionReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["row", "predicted", "label"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.predictions
            .iter()
            .map(|p| {
                vec![
                    p.row.to_string(),
                    p.predicted.clone(),
                    p.label.clone().unwrap_or_default(),
                ]
            })
            .collect()
    }
}

pub fn predict(args: &PredictArgs) -> Result<Outcome> {
    let forest = load_model(&args.model)?;
    let input = read_rows(&args.data, &forest, &args.label_col, args.delimiter)?;
    let batch = predict_batch(&forest, &input.rows, args.seed);
    let predictions: Vec<PredictionRow> = batch
        .classes
        .iter()
        .enumerate()
        .map(|(i, &c)| PredictionRow {
            row: i,
            predicted: forest.class_names[c].clone(),
            label: input.labels.as_ref().map(|l| l[i].clone()),
        })
        .collect();
    let accuracy = input.labels.as_ref().filter(|l| !l.is_empty()).map(|l| {
        let hits = predictions.iter().zip(l).filter(|(p, t)| &p.predicted == *t).count();
        hits as f64 / l.len() as f64
    });
    if let Some(a) = accuracy {
        eprintln!("accuracy: {}", sig6(a));
    }
    write_report(&PredictionReport { accuracy, predictions }, &args.output)?;
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct Comparison {
    primary: CvReport,
    other: CvReport,
    /// Two-sided Wilcoxon signed-rank p-value over the paired fold accuracies.
    wilcoxon_p: Option<f64>,
}

impl Report for Comparison {
    fn csv_header(&self) -> Vec<&'static str> {
        self.primary.csv_header()
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = self.primary.csv_rows();
        rows.extend(self.other.csv_rows());
        rows
    }
}

fn read_plan(path: &Path, n: usize) -> Result<FoldPlan> {
    let plan: FoldPlan = serde_json::from_reader(open(path)?)
        .map_err(Error::Json)
        .with_context(|| format!("reading fold plan {}", path.display()))?;
    let in_range = plan
        .cells()
        .all(|(_, _, s)| s.train.iter().chain(&s.test).all(|&i| i < n));
    if plan.n != n || !in_range {
        return Err(Error::Schema(format!("fold plan is for {} rows, dataset has {n}", plan.n)).into());
    }
    Ok(plan)
}

pub fn cv(args: &CvArgs) -> Result<Outcome> {
    let ds = read_dataset(&args.data)?;
    let name = dataset_name(&args.data.data, &args.name);
    let n = ds.n_samples();
    let plan = match &args.plan {
        Some(path) => read_plan(path, n)?,
        None => fold_plan(n, args.folds, args.repeats, args.forest.seed)?,
    };
    if let Some(path) = &args.save_plan {
        fs::write(path, serde_json::to_string(&plan)?)
            .map_err(Error::Io)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let largest_train = plan.cells().map(|(_, _, s)| s.train.len()).max().unwrap_or(n);
    let seed = args.forest.seed;
    let primary = run_cv_with_plan(
        &ds,
        &name,
        &method(&args.forest, args.forest.method, largest_train)?,
        &plan,
        seed,
    )?;
    eprintln!(
        "{}: mean accuracy {} (sd {})",
        primary.method,
        sig6(primary.mean_accuracy),
        sig6(primary.std)
    );
    match args.compare {
        None => write_report(&primary, &args.output)?,
        Some(v) => {
            let other = run_cv_with_plan(&ds, &name, &method(&args.forest, v, largest_train)?, &plan, seed)?;
            eprintln!(
                "{}: mean accuracy {} (sd {})",
                other.method,
                sig6(other.mean_accuracy),
                sig6(other.std)
            );
            let wilcoxon_p = match wilcoxon_signed_rank(&primary.accuracies(), &other.accuracies()) {
                Ok(p) => {
                    eprintln!("wilcoxon p = {}", sig6(p));
                    Some(p)
                }
                Err(e) => {
                    eprintln!("wilcoxon test skipped: {e}");
                    None
                }
            };
            write_report(
                &Comparison {
                    primary,
                    other,
                    wilcoxon_p,
                },
                &args.output,
            )?;
        }
    }
    Ok(Outcome::Success)
}

pub fn run_sweep(args: &SweepArgs) -> Result<Outcome> {
    if args.forest.epsilon.is_some() {
        return Err(Usage("sweep sets B1 and B2 from its grids; --epsilon does not apply".into()).into());
    }
    let ds = read_dataset(&args.data)?;
    let name = dataset_name(&args.data.data, &args.name);
    let base = mrf_config(&args.forest);
    base.validate()?;
    let report = sweep(
        &ds,
        &name,
        &args.b1_grid,
        &args.b2_grid,
        &base,
        args.folds,
        args.repeats,
        args.forest.seed,
    )?;
    write_report(&report, &args.output)?;
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct AuditSet {
    budget: Option<PrivacyBudget>,
    pass: bool,
    reports: Vec<AuditReport>,
}

impl Report for AuditSet {
    fn csv_header(&self) -> Vec<&'static str> {
        vec![
            "mechanism",
            "budget",
            "worst_ratio",
            "bound",
            "pass",
            "neighbors",
            "candidate_set_changes",
            "witness",
        ]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.reports
            .iter()
            .map(|r| {
                vec![
                    r.mechanism.clone(),
                    sig6(r.budget),
                    sig6(r.worst_ratio),
                    sig6(r.bound),
                    r.pass.to_string(),
                    r.neighbors.to_string(),
                    r.candidate_set_changes.to_string(),
                    r.witness
                        .as_ref()
                        .map(|w| format!("{} -> output {}", w.change, w.output))
                        .unwrap_or_default(),
                ]
            })
            .collect()
    }
}

fn finite(scale: Scale, name: &str) -> Result<f64> {
    scale
        .finite()
        .ok_or_else(|| Usage(format!("audit needs a finite {name}; pass a number or --epsilon")).into())
}

pub fn audit(args: &AuditArgs) -> Result<Outcome> {
    let ds = read_dataset(&args.data)?;
    let (config, budget) = private_config(&args.forest, ds.n_samples())?;
    let (b1, b2, b3) = (
        finite(config.b1, "--b1")?,
        finite(config.b2, "--b2")?,
        finite(config.b3, "--b3")?,
    );
    let mut grid = NeighborGrid::from_dataset(&ds);
    if args.all_labels {
        grid.labels = (0..ds.n_classes()).collect();
    }
    let criterion = config.criterion;
    let mut reports = vec![audit_feature_mechanism(&ds, b1, &grid, criterion)?];
    let features: Vec<usize> = match args.feature {
        Some(j) => vec![j],
        None => (0..ds.n_features()).collect(),
    };
    for j in features {
        match audit_value_mechanism(&ds, j, b2, &grid, criterion) {
            Ok(mut r) => {
                r.mechanism = format!("value[{j}]");
                reports.push(r);
            }
            Err(Error::NoChoices) => eprintln!("feature {j} is constant; no split values to audit"),
            Err(e) => return Err(e.into()),
        }
    }
    let tally = ClassCounts::from_labels(ds.labels().iter().copied(), ds.n_classes());
    reports.push(audit_label_mechanism(&tally, b3)?);
    let pass = reports.iter().all(|r| r.pass);
    for r in reports.iter().filter(|r| !r.pass) {
        eprintln!(
            "{} mechanism exceeds its bound: ratio {} > {}",
            r.mechanism, r.worst_ratio, r.bound
        );
    }
    write_report(&AuditSet { budget, pass, reports }, &args.output)?;
    Ok(if pass {
        Outcome::Success
    } else {
        Outcome::AuditViolation
    })
}

#[derive(Serialize)]
struct BudgetReport {
    n_train: usize,
    estimation_size: usize,
    #[serde(flatten)]
    budget: PrivacyBudget,
    /// `t * max(d * (B1 + B2), B3)`; equals epsilon.
    composed_epsilon: f64,
}

impl Report for BudgetReport {
    fn csv_header(&self) -> Vec<&'static str> {
        vec!["epsilon", "trees", "depth", "b1", "b2", "b3", "composed_epsilon"]
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        let b = &self.budget;
        vec![vec![
            sig6(b.epsilon),
            b.trees.to_string(),
            b.depth.to_string(),
            sig6(b.b1),
            sig6(b.b2),
            sig6(b.b3),
            sig6(self.composed_epsilon),
        ]]
    }
}

pub fn budget(args: &BudgetArgs) -> Result<Outcome> {
    let n_train = match (&args.n, &args.data) {
        (Some(n), _) => *n,
        (None, Some(path)) => {
            let options = CsvOptions {
                delimiter: delimiter(args.delimiter)?,
                label: args.label_col.clone(),
            };
            load_dataset(open(path)?, &options)
                .with_context(|| format!("reading {}", path.display()))?
                .n_samples()
        }
        (None, None) => return Err(Usage("pass --n or --data".into()).into()),
    };
    let config = MrfConfig {
        trees: args.trees,
        min_leaf: args.min_leaf,
        partition_rate: args.partition_rate,
        ..MrfConfig::default()
    };
    config.validate()?;
    let estimation_size = n_train - mrf_core::data::structure_size(n_train, args.partition_rate).min(n_train);
    let budget = allocate_budget(
        args.epsilon,
        args.trees,
        estimation_size,
        args.min_leaf,
        args.budget_split,
    )?;
    let composed_epsilon = compose_budget(budget.b1 + budget.b2, budget.depth, budget.b3, budget.trees);
    write_report(
        &BudgetReport {
            n_train,
            estimation_size,
            budget,
            composed_epsilon,
        },
        &args.output,
    )?;
    Ok(Outcome::Success)
}

pub fn tree_dist(args: &TreeDistArgs) -> Result<Outcome> {
    let forest = load_model(&args.model)?;
    let input = read_rows(&args.data, &forest, &args.label_col, args.delimiter)?;
    let raw = input
        .labels
        .ok_or_else(|| Error::Schema("evaluation data has no label column".into()))?;
    if raw.is_empty() {
        return Err(Error::Empty.into());
    }
    // Labels the model never saw can match no tree's vote.
    let labels: Vec<usize> = raw
        .iter()
        .map(|l| forest.class_names.iter().position(|c| c == l).unwrap_or(usize::MAX))
        .collect();
    let report = tree_accuracy_distribution(&forest, &input.rows, &labels, args.seed);
    eprintln!("forest accuracy: {}", sig6(report.forest_accuracy));
    write_report(&report, &args.output)?;
    Ok(Outcome::Success)
}

pub fn rank(args: &RankArgs) -> Result<Outcome> {
    let rows = read_rank_rows(open(&args.input)?).with_context(|| format!("reading {}", args.input.display()))?;
    write_report(&average_ranks(&rows)?, &args.output)?;
    Ok(Outcome::Success)
}
