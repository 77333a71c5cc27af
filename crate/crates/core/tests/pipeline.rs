use std::io::Write;

use mrf_core::harness::{emit_report, render_report, run_cv, wilcoxon_signed_rank, Method, ReportFormat};
use mrf_core::rng::{stream, Domain};
use mrf_core::{
    load_dataset, predict, predict_batch, train_baseline_rf, train_mrf, BaselineConfig, CsvOptions, CvReport, Error,
    Forest, MrfConfig, Scale,
};

const CSV: &str = "x,y,label\n\
0.1,1.0,a\n0.2,0.8,a\n0.3,1.2,a\n0.4,0.9,a\n0.5,1.1,a\n0.6,1.0,a\n0.7,0.7,a\n0.8,1.3,a\n\
2.1,3.0,b\n2.2,2.8,b\n2.3,3.2,b\n2.4,2.9,b\n2.5,3.1,b\n2.6,3.0,b\n2.7,2.7,b\n2.8,3.3,b\n";

#[test]
fn csv_to_model_file_and_back() {
    let ds = load_dataset(CSV.as_bytes(), &CsvOptions::default()).unwrap();
    assert_eq!(ds.class_names(), ["a", "b"]);
    let forest = train_mrf(
        &ds,
        &MrfConfig {
            trees: 20,
            min_leaf: 2,
            seed: 5,
            ..MrfConfig::default()
        },
    )
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    forest.save(&path).unwrap();
    let loaded = Forest::load(&path).unwrap();
    assert_eq!(loaded, forest);

    let rows: Vec<&[f64]> = ds.rows().collect();
    let out = predict_batch(&loaded, &rows, 0);
    assert_eq!(out.classes, ds.labels());
}

#[test]
fn finite_b3_prediction_is_reproducible_per_stream() {
    let ds = load_dataset(CSV.as_bytes(), &CsvOptions::default()).unwrap();
    let forest = train_mrf(
        &ds,
        &MrfConfig {
            trees: 15,
            min_leaf: 2,
            b3: Scale::Finite(0.5),
            ..MrfConfig::default()
        },
    )
    .unwrap();
    let x = [1.4, 2.0];
    let a = predict(&forest, &x, &mut stream(3, Domain::Predict, 0));
    let b = predict(&forest, &x, &mut stream(3, Domain::Predict, 0));
    assert_eq!(a, b);
}

#[test]
fn paired_methods_see_identical_folds() {
    let ds = load_dataset(CSV.as_bytes(), &CsvOptions::default()).unwrap();
    let mrf = run_cv(
        &ds,
        "toy",
        &Method::Mrf(MrfConfig {
            trees: 5,
            min_leaf: 1,
            ..MrfConfig::default()
        }),
        4,
        2,
        8,
    )
    .unwrap();
    let rf = run_cv(
        &ds,
        "toy",
        &Method::Breiman(BaselineConfig {
            trees: 5,
            min_node: 1,
            ..BaselineConfig::default()
        }),
        4,
        2,
        8,
    )
    .unwrap();
    let sizes = |r: &CvReport| {
        r.results
            .iter()
            .map(|f| (f.repeat, f.fold, f.test_size))
            .collect::<Vec<_>>()
    };
    assert_eq!(sizes(&mrf), sizes(&rf));
    assert_eq!(mrf.mean_accuracy, 1.0);
}

#[test]
fn reports_are_written_in_both_formats() {
    let ds = load_dataset(CSV.as_bytes(), &CsvOptions::default()).unwrap();
    let r = run_cv(
        &ds,
        "toy",
        &Method::Mrf(MrfConfig {
            trees: 3,
            min_leaf: 1,
            ..MrfConfig::default()
        }),
        4,
        1,
        1,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    emit_report(&r, ReportFormat::Json, &json).unwrap();
    let back: CvReport = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(back, r);
    let csv = render_report(&r, ReportFormat::Csv).unwrap();
    assert!(csv.starts_with("dataset,method,repeat,fold,train_size,test_size,accuracy,seconds\ntoy,mrf,0,0,"));
    assert_eq!(csv.lines().count(), 5);

    let blocked = dir.path().join("missing").join("r.json");
    assert!(matches!(
        emit_report(&r, ReportFormat::Json, &blocked),
        Err(Error::Io(_))
    ));
}

#[test]
fn wilcoxon_on_cv_accuracies() {
    let a = [0.9, 0.85, 0.92, 0.88, 0.91, 0.87, 0.93, 0.9];
    let b = [0.8, 0.78, 0.83, 0.79, 0.84, 0.76, 0.8, 0.82];
    let p = wilcoxon_signed_rank(&a, &b).unwrap();
    assert!((p - 2.0 / 256.0).abs() < 1e-12);
}

#[test]
fn baseline_forest_round_trips() {
    let ds = load_dataset(CSV.as_bytes(), &CsvOptions::default()).unwrap();
    let forest = train_baseline_rf(
        &ds,
        &BaselineConfig {
            trees: 4,
            min_node: 1,
            ..BaselineConfig::default()
        },
    )
    .unwrap();
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(forest.to_json().unwrap().as_bytes()).unwrap();
    assert_eq!(Forest::load(file.path()).unwrap(), forest);
}
