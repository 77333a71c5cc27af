//! Ensembles: the multinomial forest, the greedy bootstrap baseline, and
//! majority-vote prediction.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{partition, Dataset};
use crate::error::{Error, Result};
use crate::impurity::{argmax_lowest, Criterion};
use crate::rng::{stream, Domain};
use crate::splitsel::Scale;
use crate::tree::{build_greedy_tree, build_tree, sample_label, Tree, TreeParams};

/// Version written into every serialized forest.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrfConfig {
    pub b1: Scale,
    pub b2: Scale,
    pub b3: Scale,
    /// Minimum number of estimation points per leaf.
    pub min_leaf: usize,
    pub trees: usize,
    /// Ratio |structure| / |estimation|.
    pub partition_rate: f64,
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for MrfConfig {
    fn default() -> Self {
        Self {
            b1: Scale::Finite(10.0),
            b2: Scale::Finite(10.0),
            b3: Scale::Infinite,
            min_leaf: 5,
            trees: 100,
            partition_rate: 1.0,
            criterion: Criterion::Gini,
            max_depth: None,
            seed: 0,
        }
    }
}

impl MrfConfig {
    /// The same configuration with uniform feature and value selection.
    pub fn completely_random(self) -> Self {
        Self {
            b1: Scale::ZERO,
            b2: Scale::ZERO,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 {
            return Err(Error::Config("trees must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be at least 1".into()));
        }
        if !(self.partition_rate > 0.0 && self.partition_rate.is_finite()) {
            return Err(Error::Config(format!(
                "partition rate must be positive and finite, got {}",
                self.partition_rate
            )));
        }
        for (name, s) in [("b1", self.b1), ("b2", self.b2), ("b3", self.b3)] {
            if let Scale::Finite(v) = s {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn tree_params(&self) -> TreeParams {
        TreeParams::Multinomial {
            b1: self.b1,
            b2: self.b2,
            min_leaf: self.min_leaf,
            max_depth: self.max_depth,
            criterion: self.criterion,
        }
    }

    pub fn variant(&self) -> Variant {
        if self.b1 == Scale::ZERO && self.b2 == Scale::ZERO {
            Variant::CompletelyRandom
        } else {
            Variant::Mrf
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub trees: usize,
    /// Nodes with at most this many samples become leaves.
    pub min_node: usize,
    /// Features tried per node; `None` means `floor(sqrt(D))`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            min_node: 5,
            mtry: None,
            bootstrap: true,
            criterion: Criterion::Gini,
            max_depth: None,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn resolved_mtry(&self, n_features: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
            .clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Mrf,
    Breiman,
    CompletelyRandom,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Mrf => "mrf",
            Variant::Breiman => "breiman",
            Variant::CompletelyRandom => "completely_random",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "mrf" => Ok(Variant::Mrf),
            "breiman" | "rf" => Ok(Variant::Breiman),
            "completely_random" | "comprf" => Ok(Variant::CompletelyRandom),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForestConfig {
    Mrf(MrfConfig),
    Baseline(BaselineConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub format_version: u32,
    pub variant: Variant,
    pub config: ForestConfig,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Label-selection scale each tree votes with.
    pub fn vote_scale(&self) -> Scale {
        match &self.config {
            ForestConfig::Mrf(c) => c.b3,
            ForestConfig::Baseline(_) => Scale::Infinite,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                header.format_version
            )));
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Trains a multinomial forest. Tree `i` draws its partition and all split
/// decisions from stream `i` of the tree domain, so the result does not
/// depend on thread scheduling.
pub fn train_mrf(dataset: &Dataset, config: &MrfConfig) -> Result<Forest> {
    config.validate()?;
    let n = dataset.n_samples();
    if n < 2 * config.min_leaf {
        return Err(Error::Config(format!(
            "need at least 2k = {} rows, got {n}",
            2 * config.min_leaf
        )));
    }
    let params = config.tree_params();
    let trees = (0..config.trees as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(config.seed, Domain::Tree, i);
            let part = partition(dataset, config.partition_rate, &mut rng)?;
            let mut tree = build_tree(dataset, &part.structure, &part.estimation, &params, &mut rng);
            tree.seed = Some((config.seed, i));
            Ok(tree)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| match e {
            Error::Size(m) | Error::Domain(m) => Error::Config(m),
            other => other,
        })?;
    Ok(Forest {
        format_version: FORMAT_VERSION,
        variant: config.variant(),
        config: ForestConfig::Mrf(config.clone()),
        feature_names: dataset.feature_names().to_vec(),
        class_names: dataset.class_names().to_vec(),
        trees,
    })
}

/// Trains the greedy bootstrap baseline.
pub fn train_baseline_rf(dataset: &Dataset, config: &BaselineConfig) -> Result<Forest> {
    if config.trees == 0 {
        return Err(Error::Config("trees must be at least 1".into()));
    }
    if config.min_node == 0 {
        return Err(Error::Config("min_node must be at least 1".into()));
    }
    if config.mtry == Some(0) {
        return Err(Error::Config("mtry must be at least 1".into()));
    }
    let n = dataset.n_samples();
    let params = TreeParams::Greedy {
        min_node: config.min_node,
        mtry: config.resolved_mtry(dataset.n_features()),
        max_depth: config.max_depth,
        criterion: config.criterion,
    };
    let trees = (0..config.trees as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(config.seed, Domain::Tree, i);
            let sample: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut tree = build_greedy_tree(dataset, &sample, &params, &mut rng);
            tree.seed = Some((config.seed, i));
            tree
        })
        .collect();
    Ok(Forest {
        format_version: FORMAT_VERSION,
        variant: Variant::Breiman,
        config: ForestConfig::Baseline(config.clone()),
        feature_names: dataset.feature_names().to_vec(),
        class_names: dataset.class_names().to_vec(),
        trees,
    })
}

/// Majority vote; ties go to the lowest class index.
pub fn majority(votes: &[usize], n_classes: usize) -> usize {
    let mut tally = vec![0usize; n_classes];
    for &v in votes {
        tally[v] += 1;
    }
    argmax_lowest(tally)
}

fn tree_votes<R: Rng + ?Sized>(forest: &Forest, x: &[f64], rng: &mut R) -> Vec<usize> {
    let b3 = forest.vote_scale();
    forest
        .trees
        .iter()
        .map(|t| sample_label(t.leaf(x).1, b3, rng))
        .collect()
}

/// Predicts one row. Trees vote in order, drawing from `rng` only when the
/// label-selection scale is finite.
pub fn predict<R: Rng + ?Sized>(forest: &Forest, x: &[f64], rng: &mut R) -> usize {
    majority(&tree_votes(forest, x, rng), forest.n_classes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPrediction {
    pub classes: Vec<usize>,
    /// `votes[tree][row]`.
    pub votes: Vec<Vec<usize>>,
}

/// Predicts every row. Row `i` uses stream `i` of the prediction domain
/// under `seed`, so `predict_batch(f, &[x], s)` equals
/// `predict(f, x, &mut stream(s, Domain::Predict, 0))`.
pub fn predict_batch<X: AsRef<[f64]> + Sync>(forest: &Forest, rows: &[X], seed: u64) -> BatchPrediction {
    let per_row: Vec<Vec<usize>> = rows
        .par_iter()
        .enumerate()
        .map(|(i, x)| tree_votes(forest, x.as_ref(), &mut stream(seed, Domain::Predict, i as u64)))
        .collect();
    let k = forest.n_classes();
    let classes = per_row.iter().map(|v| majority(v, k)).collect();
    let votes = (0..forest.n_trees())
        .map(|t| per_row.iter().map(|v| v[t]).collect())
        .collect();
    BatchPrediction { classes, votes }
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::Node;

    fn separable(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let labels = (0..n).map(|i| usize::from(i >= n / 2)).collect();
        Dataset::new(rows, labels, 2).unwrap()
    }

    #[test]
    fn majority_examples() {
        assert_eq!(majority(&[1, 1, 2], 3), 1);
        assert_eq!(majority(&[0, 1], 2), 0);
        assert_eq!(majority(&[1, 0], 2), 0);
    }

    #[test]
    fn greedy_single_tree_fits_separable_data() {
        let ds = separable(20);
        let config = MrfConfig {
            b1: Scale::Infinite,
            b2: Scale::Infinite,
            trees: 1,
            min_leaf: 1,
            ..MrfConfig::default()
        };
        let forest = train_mrf(&ds, &config).unwrap();
        let rows: Vec<&[f64]> = ds.rows().collect();
        let pred = predict_batch(&forest, &rows, 0);
        assert_eq!(accuracy(&pred.classes, ds.labels()), 1.0);
    }

    #[test]
    fn same_seed_same_bytes() {
        let ds = separable(60);
        let config = MrfConfig {
            trees: 3,
            seed: 42,
            ..MrfConfig::default()
        };
        let a = train_mrf(&ds, &config).unwrap().to_json().unwrap();
        let b = train_mrf(&ds, &config).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let c = train_mrf(&ds, &MrfConfig { seed: 43, ..config })
            .unwrap()
            .to_json()
            .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_rows_is_a_config_error() {
        let ds = separable(9);
        assert!(matches!(train_mrf(&ds, &MrfConfig::default()), Err(Error::Config(_))));
        assert!(train_mrf(&separable(10), &MrfConfig::default()).is_ok());
    }

    #[test]
    fn config_validation() {
        let ds = separable(40);
        for bad in [
            MrfConfig {
                trees: 0,
                ..MrfConfig::default()
            },
            MrfConfig {
                min_leaf: 0,
                ..MrfConfig::default()
            },
            MrfConfig {
                partition_rate: 0.0,
                ..MrfConfig::default()
            },
            MrfConfig {
                b1: Scale::Finite(-1.0),
                ..MrfConfig::default()
            },
        ] {
            assert!(matches!(train_mrf(&ds, &bad), Err(Error::Config(_))));
        }
        let bad = BaselineConfig {
            trees: 0,
            ..BaselineConfig::default()
        };
        assert!(matches!(train_baseline_rf(&ds, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn variants() {
        let ds = separable(40);
        let cr = MrfConfig {
            trees: 2,
            ..MrfConfig::default()
        }
        .completely_random();
        assert_eq!(train_mrf(&ds, &cr).unwrap().variant, Variant::CompletelyRandom);
        let base = BaselineConfig {
            trees: 2,
            ..BaselineConfig::default()
        };
        assert_eq!(train_baseline_rf(&ds, &base).unwrap().variant, Variant::Breiman);
        assert_eq!(
            "completely-random".parse::<Variant>().unwrap(),
            Variant::CompletelyRandom
        );
    }

    #[test]
    fn baseline_without_bootstrap_is_reproducible() {
        let ds = separable(50);
        let config = BaselineConfig {
            trees: 1,
            bootstrap: false,
            seed: 1,
            ..BaselineConfig::default()
        };
        let a = train_baseline_rf(&ds, &config).unwrap();
        let b = train_baseline_rf(
            &ds,
            &BaselineConfig {
                seed: 1,
                ..config.clone()
            },
        )
        .unwrap();
        assert_eq!(a.trees, b.trees);
    }

    #[test]
    fn baseline_xor_reaches_full_accuracy_at_depth_two() {
        let ds = Dataset::new(
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            vec![0, 1, 1, 0],
            2,
        )
        .unwrap();
        let config = BaselineConfig {
            trees: 1,
            min_node: 1,
            mtry: Some(2),
            bootstrap: false,
            ..BaselineConfig::default()
        };
        let forest = train_baseline_rf(&ds, &config).unwrap();
        let rows: Vec<&[f64]> = ds.rows().collect();
        assert_eq!(accuracy(&predict_batch(&forest, &rows, 0).classes, ds.labels()), 1.0);
        assert_eq!(forest.trees[0].depth(), 2);
    }

    #[test]
    fn baseline_full_mtry_matches_exhaustive_root_split() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![((i * 11) % 17) as f64, ((i * 5) % 13) as f64])
            .collect();
        let labels: Vec<usize> = rows.iter().map(|r| usize::from(r[1] > 6.0)).collect();
        let ds = Dataset::new(rows, labels, 2).unwrap();
        let config = BaselineConfig {
            trees: 1,
            min_node: 1,
            mtry: Some(2),
            bootstrap: false,
            ..BaselineConfig::default()
        };
        let forest = train_baseline_rf(&ds, &config).unwrap();
        match forest.trees[0].root() {
            Node::Split { feature, threshold, .. } => assert_eq!((*feature, *threshold), (1, 6.5)),
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn batch_prediction_shapes_and_consistency() {
        let ds = separable(100);
        let config = MrfConfig {
            trees: 10,
            b3: Scale::Finite(2.0),
            seed: 3,
            ..MrfConfig::default()
        };
        let forest = train_mrf(&ds, &config).unwrap();
        let empty: Vec<Vec<f64>> = Vec::new();
        let out = predict_batch(&forest, &empty, 0);
        assert!(out.classes.is_empty() && out.votes.iter().all(Vec::is_empty));

        let rows: Vec<&[f64]> = ds.rows().collect();
        let out = predict_batch(&forest, &rows, 9);
        assert_eq!(out.votes.len(), 10);
        assert!(out.votes.iter().all(|v| v.len() == 100));
        for (i, &c) in out.classes.iter().enumerate() {
            let column: Vec<usize> = out.votes.iter().map(|v| v[i]).collect();
            assert_eq!(majority(&column, 2), c);
        }

        let x = ds.row(17);
        let single = predict_batch(&forest, &[x], 5);
        assert_eq!(
            single.classes[0],
            predict(&forest, x, &mut stream(5, Domain::Predict, 0))
        );
    }

    #[test]
    fn unanimous_pure_forest() {
        let pure = Dataset::new((0..30).map(|i| vec![i as f64]).collect(), vec![2; 30], 3).unwrap();
        let forest = train_mrf(&pure, &MrfConfig::default()).unwrap();
        assert_eq!(predict(&forest, &[3.0], &mut stream(0, Domain::Predict, 0)), 2);
    }

    #[test]
    fn json_round_trip_preserves_predictions() {
        let ds = separable(80);
        let forest = train_mrf(
            &ds,
            &MrfConfig {
                trees: 5,
                b3: Scale::Finite(1.5),
                ..MrfConfig::default()
            },
        )
        .unwrap();
        let back = Forest::from_json(&forest.to_json().unwrap()).unwrap();
        assert_eq!(back, forest);
        let rows: Vec<&[f64]> = ds.rows().collect();
        assert_eq!(predict_batch(&back, &rows, 4), predict_batch(&forest, &rows, 4));
    }

    #[test]
    fn unknown_format_version_is_rejected() {
        let ds = separable(20);
        let forest = train_mrf(
            &ds,
            &MrfConfig {
                trees: 1,
                ..MrfConfig::default()
            },
        )
        .unwrap();
        let text = forest
            .to_json()
            .unwrap()
            .replacen("\"format_version\":1", "\"format_version\":99", 1);
        assert!(matches!(Forest::from_json(&text), Err(Error::Schema(_))));
    }
}
