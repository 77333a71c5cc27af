//! Tabular datasets, structure/estimation partitions and cross-validation folds.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An immutable table of finite feature rows with dense class labels `0..K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    feature_names: Vec<String>,
    class_names: Vec<String>,
    num_features: usize,
}

impl Dataset {
    /// Builds a dataset with generated feature names (`x0`, `x1`, ...) and
    /// class names equal to the class indices.
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let num_features = rows.first().map_or(0, Vec::len);
        let feature_names = (0..num_features).map(|j| format!("x{j}")).collect();
        let class_names = (0..class_count).map(|c| c.to_string()).collect();
        Self::with_names(rows, labels, feature_names, class_names)
    }

    pub fn with_names(
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty);
        }
        if rows.len() != labels.len() {
            return Err(Error::Schema(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let num_features = feature_names.len();
        if num_features == 0 {
            return Err(Error::Schema("at least one feature column is required".into()));
        }
        let class_count = class_names.len();
        if class_count < 2 {
            return Err(Error::Schema(format!(
                "at least two classes are required, found {class_count}"
            )));
        }
        let mut features = Vec::with_capacity(rows.len() * num_features);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != num_features {
                return Err(Error::Schema(format!(
                    "row {i} has {} values, expected {num_features}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("non-finite feature value {v}"),
                });
            }
            features.extend_from_slice(row);
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::Schema(format!("label {bad} outside 0..{class_count}")));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            class_names,
            num_features,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.num_features
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    #[inline]
    pub fn value(&self, i: usize, feature: usize) -> f64 {
        self.features[i * self.num_features + feature]
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Original label strings, indexed by dense class id.
    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.num_features)
    }

    /// Copies the given rows (in the given order) into a new dataset that
    /// keeps the full class list, so class ids stay comparable.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty);
        }
        let mut features = Vec::with_capacity(indices.len() * self.num_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Ok(Self {
            features,
            labels,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            num_features: self.num_features,
        })
    }
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
    Name(String),
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim() {
            "" | "last" => LabelColumn::Last,
            t => match t.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(t.to_string()),
            },
        })
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Last => f.write_str("last"),
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::Name(n) => f.write_str(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub label: LabelColumn,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            label: LabelColumn::Last,
        }
    }
}

fn resolve_label(headers: &csv::StringRecord, label: &LabelColumn) -> Result<usize> {
    let width = headers.len();
    match label {
        LabelColumn::Last => width
            .checked_sub(1)
            .ok_or_else(|| Error::Schema("header row is empty".into())),
        LabelColumn::Index(i) if *i < width => Ok(*i),
        LabelColumn::Index(i) => Err(Error::Schema(format!(
            "label column index {i} out of range for {width} columns"
        ))),
        LabelColumn::Name(name) => headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("no column named {name:?}"))),
    }
}

fn parse_cell(cell: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column {column:?}: {cell:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("column {column:?}: non-finite value {cell:?}"),
        });
    }
    Ok(v)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Reads a delimited text table with a header row. Labels are re-indexed
/// densely in order of first appearance; row order is preserved.
pub fn load_dataset<R: Read>(source: R, options: &CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .from_reader(source);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let label_col = resolve_label(&headers, &options.label)?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_col)
        .map(|(_, h)| h.trim().to_string())
        .collect();

    let mut class_ids: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(rows.len() + 2, |p| p.line() as usize);
        let mut row = Vec::with_capacity(feature_names.len());
        for (j, cell) in record.iter().enumerate() {
            if j == label_col {
                continue;
            }
            row.push(parse_cell(cell, line, &headers[j])?);
        }
        let raw = record[label_col].trim().to_string();
        let next = class_ids.len();
        let id = *class_ids.entry(raw.clone()).or_insert_with(|| {
            class_names.push(raw);
            next
        });
        labels.push(id);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    Dataset::with_names(rows, labels, feature_names, class_names)
}

/// Rows read for prediction: the named feature columns in model order, plus
/// the raw label strings when a label column is present.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRows {
    pub rows: Vec<Vec<f64>>,
    pub labels: Option<Vec<String>>,
}

/// Reads the columns named in `feature_names` (in that order). If
/// `label_name` is given and present in the header, its raw values are
/// returned too.
pub fn load_feature_rows<R: Read>(
    source: R,
    delimiter: u8,
    feature_names: &[String],
    label_name: Option<&str>,
) -> Result<FeatureRows> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(source);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let columns: Vec<usize> = feature_names
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Schema(format!("missing feature column {name:?}")))
        })
        .collect::<Result<_>>()?;
    let label_col = label_name.and_then(|name| headers.iter().position(|h| h.trim() == name));
    let mut rows = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(rows.len() + 2, |p| p.line() as usize);
        let row = columns
            .iter()
            .map(|&j| parse_cell(&record[j], line, &headers[j]))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
        if let (Some(col), Some(out)) = (label_col, labels.as_mut()) {
            out.push(record[col].trim().to_string());
        }
    }
    Ok(FeatureRows { rows, labels })
}

/// Disjoint structure and estimation index sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub structure: Vec<usize>,
    pub estimation: Vec<usize>,
    pub rate: f64,
}

/// Number of structure points for `n` rows at the given rate:
/// round-half-up of `n * rate / (1 + rate)`.
pub fn structure_size(n: usize, rate: f64) -> usize {
    (n as f64 * rate / (1.0 + rate) + 0.5).floor() as usize
}

/// Splits `0..n` uniformly at random into structure and estimation sets.
/// Both returned lists are sorted ascending.
pub fn partition_indices<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Result<Partition> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::Domain(format!("partition rate must be positive, got {rate}")));
    }
    if n < 2 {
        return Err(Error::Size(format!(
            "cannot partition {n} rows into two non-empty sets"
        )));
    }
    let s = structure_size(n, rate);
    if s == 0 || s >= n {
        return Err(Error::Size(format!(
            "rate {rate} on {n} rows leaves one side empty ({s} structure points)"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut structure = idx[..s].to_vec();
    let mut estimation = idx[s..].to_vec();
    structure.sort_unstable();
    estimation.sort_unstable();
    Ok(Partition {
        structure,
        estimation,
        rate,
    })
}

pub fn partition<R: Rng + ?Sized>(dataset: &Dataset, rate: f64, rng: &mut R) -> Result<Partition> {
    partition_indices(dataset.n_samples(), rate, rng)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Repeated k-fold assignment. `assignments[r][f]` is fold `f` of repeat `r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n: usize,
    pub folds: usize,
    pub repeats: usize,
    pub assignments: Vec<Vec<FoldSplit>>,
}

impl FoldPlan {
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, &FoldSplit)> {
        self.assignments
            .iter()
            .enumerate()
            .flat_map(|(r, folds)| folds.iter().enumerate().map(move |(f, s)| (r, f, s)))
    }
}

/// Plans `repeats` independent shuffles of `0..n`, each cut into `folds`
/// test folds whose sizes differ by at most one (the first `n % folds` folds
/// get the extra index).
pub fn make_folds<R: Rng + ?Sized>(n: usize, folds: usize, repeats: usize, rng: &mut R) -> Result<FoldPlan> {
    if folds < 2 || folds > n {
        return Err(Error::Size(format!("need 2 <= folds <= n, got folds={folds}, n={n}")));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let base = n / folds;
    let extra = n % folds;
    let mut assignments = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let mut fold_of = vec![0usize; n];
        let mut start = 0;
        for f in 0..folds {
            let len = base + usize::from(f < extra);
            for &i in &perm[start..start + len] {
                fold_of[i] = f;
            }
            start += len;
        }
        let mut splits: Vec<FoldSplit> = (0..folds)
            .map(|_| FoldSplit {
                train: Vec::with_capacity(n - base),
                test: Vec::with_capacity(base + 1),
            })
            .collect();
        for (i, &f) in fold_of.iter().enumerate() {
            for (g, split) in splits.iter_mut().enumerate() {
                if g == f {
                    split.test.push(i);
                } else {
                    split.train.push(i);
                }
            }
        }
        assignments.push(splits);
    }
    Ok(FoldPlan {
        n,
        folds,
        repeats,
        assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use std::collections::BTreeSet;

    fn rng(seed: u64) -> crate::rng::StreamRng {
        stream(seed, Domain::Other(0), 0)
    }

    #[test]
    fn loads_and_reindexes_labels() {
        let csv = "a,b,y\n1,2,a\n3,4,b\n5,6,a\n";
        let ds = load_dataset(csv.as_bytes(), &CsvOptions::default()).unwrap();
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(ds.n_classes(), 2);
        assert_eq!(ds.class_names(), &["a", "b"]);
        assert_eq!(ds.row(1), &[3.0, 4.0]);
        assert_eq!(ds.feature_names(), &["a", "b"]);
    }

    #[test]
    fn label_column_by_name_and_index() {
        let csv = "y,a\nfoo,1\nbar,2\n";
        let by_name = CsvOptions {
            label: "y".parse().unwrap(),
            ..Default::default()
        };
        let by_index = CsvOptions {
            label: "0".parse().unwrap(),
            ..Default::default()
        };
        let a = load_dataset(csv.as_bytes(), &by_name).unwrap();
        let b = load_dataset(csv.as_bytes(), &by_index).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.feature_names(), &["a"]);
    }

    #[test]
    fn rejects_nan_and_text_cells() {
        let nan = "a,y\n1,0\nNaN,1\n";
        assert!(matches!(
            load_dataset(nan.as_bytes(), &CsvOptions::default()),
            Err(Error::Parse { .. })
        ));
        let text = "a,y\n1,0\nabc,1\n";
        assert!(matches!(
            load_dataset(text.as_bytes(), &CsvOptions::default()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn rejects_ragged_rows() {
        let ragged = "a,b,y\n1,2,0\n3,1\n";
        assert!(matches!(
            load_dataset(ragged.as_bytes(), &CsvOptions::default()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn schema_and_empty_errors() {
        let one_class = "a,y\n1,0\n2,0\n";
        assert!(matches!(
            load_dataset(one_class.as_bytes(), &CsvOptions::default()),
            Err(Error::Schema(_))
        ));
        let missing = CsvOptions {
            label: LabelColumn::Name("nope".into()),
            ..Default::default()
        };
        assert!(matches!(
            load_dataset("a,y\n1,0\n".as_bytes(), &missing),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            load_dataset("a,y\n".as_bytes(), &CsvOptions::default()),
            Err(Error::Empty)
        ));
    }

    #[test]
    fn semicolon_delimiter() {
        let csv = "a;y\n1.5;x\n2.5;z\n";
        let opts = CsvOptions {
            delimiter: b';',
            ..Default::default()
        };
        let ds = load_dataset(csv.as_bytes(), &opts).unwrap();
        assert_eq!(ds.value(1, 0), 2.5);
    }

    #[test]
    fn partition_sizes() {
        let p = partition_indices(100, 1.0, &mut rng(1)).unwrap();
        assert_eq!((p.structure.len(), p.estimation.len()), (50, 50));
        // 3 * 1/2 = 1.5 rounds half up to 2 structure points
        let p = partition_indices(3, 1.0, &mut rng(1)).unwrap();
        assert_eq!((p.structure.len(), p.estimation.len()), (2, 1));
        assert_eq!(p, partition_indices(3, 1.0, &mut rng(1)).unwrap());
        let p = partition_indices(10, 3.0, &mut rng(2)).unwrap();
        assert_eq!(p.structure.len(), 8);
    }

    #[test]
    fn partition_errors() {
        assert!(matches!(partition_indices(1, 1.0, &mut rng(0)), Err(Error::Size(_))));
        assert!(matches!(partition_indices(2, 1000.0, &mut rng(0)), Err(Error::Size(_))));
        assert!(matches!(partition_indices(10, 0.0, &mut rng(0)), Err(Error::Domain(_))));
    }

    #[test]
    fn partition_is_disjoint_cover() {
        let p = partition_indices(57, 0.7, &mut rng(9)).unwrap();
        let s: BTreeSet<_> = p.structure.iter().copied().collect();
        let e: BTreeSet<_> = p.estimation.iter().copied().collect();
        assert!(s.is_disjoint(&e));
        assert_eq!(s.union(&e).copied().collect::<Vec<_>>(), (0..57).collect::<Vec<_>>());
    }

    #[test]
    fn partitions_vary_with_seed() {
        let first = partition_indices(40, 1.0, &mut rng(0)).unwrap().structure;
        let distinct = (1..100)
            .map(|s| partition_indices(40, 1.0, &mut rng(s)).unwrap().structure)
            .filter(|s| *s != first)
            .count();
        assert!(distinct > 0);
    }

    #[test]
    fn folds_equal_division_and_remainder() {
        let plan = make_folds(10, 10, 1, &mut rng(3)).unwrap();
        assert!(plan.assignments[0]
            .iter()
            .all(|f| f.test.len() == 1 && f.train.len() == 9));
        let plan = make_folds(11, 10, 1, &mut rng(3)).unwrap();
        let mut sizes: Vec<_> = plan.assignments[0].iter().map(|f| f.test.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [1, 1, 1, 1, 1, 1, 1, 1, 1, 2]);
    }

    #[test]
    fn folds_cover_each_index_once_per_repeat() {
        let plan = make_folds(23, 4, 3, &mut rng(5)).unwrap();
        for repeat in &plan.assignments {
            let mut seen = [0; 23];
            for split in repeat {
                for &i in &split.test {
                    seen[i] += 1;
                }
                assert_eq!(split.test.len() + split.train.len(), 23);
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
        assert_ne!(plan.assignments[0], plan.assignments[1]);
        assert_eq!(plan, make_folds(23, 4, 3, &mut rng(5)).unwrap());
    }

    #[test]
    fn fold_plan_json_round_trip() {
        let plan = make_folds(12, 3, 2, &mut rng(8)).unwrap();
        let json = serde_json::to_string(&plan).unwrap();
        assert_eq!(serde_json::from_str::<FoldPlan>(&json).unwrap(), plan);
    }

    #[test]
    fn fold_errors() {
        assert!(matches!(make_folds(5, 6, 1, &mut rng(0)), Err(Error::Size(_))));
        assert!(matches!(make_folds(5, 1, 1, &mut rng(0)), Err(Error::Size(_))));
        assert!(matches!(make_folds(5, 2, 0, &mut rng(0)), Err(Error::Config(_))));
    }
}
