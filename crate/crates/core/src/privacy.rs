//! Privacy budget allocation and exhaustive auditing of the three
//! exponential mechanisms (feature choice, split-value choice, leaf label).
//!
//! The auditors enumerate every neighbor of a micro dataset (each record
//! replaced by every point of a finite grid, or removed), compute the exact
//! selection probabilities on both sides, and report the largest ratio.
//! The output space is pinned to the original dataset: all features for the
//! feature mechanism, the original candidate thresholds for the value
//! mechanism. Neighbors whose own candidate set differs are counted in
//! `candidate_set_changes` rather than excluded.

use serde::{Deserialize, Serialize};

use crate::data::{structure_size, Dataset};
use crate::error::{Error, Result};
use crate::forest::MrfConfig;
use crate::impurity::{impurity_decrease, midpoint, ClassCounts, Criterion};
use crate::splitsel::{normalize, softmax_scaled, Scale};

/// Largest dataset the auditors will enumerate.
pub const MAX_AUDIT_ROWS: usize = 32;
/// Largest number of replacement rows the neighbor grid may expand to.
pub const MAX_GRID_ROWS: usize = 1 << 16;
/// Relative slack allowed on `exp(B)` for floating-point error.
pub const AUDIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub trees: usize,
    /// Depth cap, `ceil(|E| / k)`.
    pub depth: usize,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl PrivacyBudget {
    /// Applies the budget to a forest configuration: sets `B1`, `B2`, `B3`
    /// and the depth cap.
    pub fn apply(&self, config: &MrfConfig) -> MrfConfig {
        MrfConfig {
            b1: Scale::Finite(self.b1),
            b2: Scale::Finite(self.b2),
            b3: Scale::Finite(self.b3),
            trees: self.trees,
            max_depth: Some(self.depth),
            ..config.clone()
        }
    }
}

/// Splits a total budget `epsilon` over `trees` trees of depth at most
/// `ceil(estimation_size / k)`, giving a fraction `split` of each layer's
/// share to feature selection.
pub fn allocate_budget(
    epsilon: f64,
    trees: usize,
    estimation_size: usize,
    k: usize,
    split: f64,
) -> Result<PrivacyBudget> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    if trees == 0 || estimation_size == 0 || k == 0 {
        return Err(Error::Domain(format!(
            "trees, estimation size and k must be positive, got {trees}, {estimation_size}, {k}"
        )));
    }
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::Domain(format!("split must lie in (0, 1), got {split}")));
    }
    let depth = estimation_size.div_ceil(k);
    let layer = epsilon / (depth as f64 * trees as f64);
    Ok(PrivacyBudget {
        epsilon,
        trees,
        depth,
        b1: split * layer,
        b2: (1.0 - split) * layer,
        b3: epsilon / trees as f64,
    })
}

/// Budget for a forest trained on `n_train` rows under `config`.
pub fn allocate_for(config: &MrfConfig, n_train: usize, epsilon: f64, split: f64) -> Result<PrivacyBudget> {
    let estimation = n_train - structure_size(n_train, config.partition_rate).min(n_train);
    allocate_budget(epsilon, config.trees, estimation, config.min_leaf, split)
}

/// Total epsilon spent: `t * max(d * (B1 + B2), B3)`.
pub fn compose_budget(per_layer: f64, depth: usize, b3: f64, trees: usize) -> f64 {
    trees as f64 * (depth as f64 * per_layer).max(b3)
}

/// The neighbor and output at which the worst ratio was attained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub change: String,
    pub output: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub mechanism: String,
    pub budget: f64,
    pub worst_ratio: f64,
    pub bound: f64,
    pub pass: bool,
    pub witness: Option<Witness>,
    pub neighbors: usize,
    /// Neighbors whose own candidate set differs from the pinned one.
    pub candidate_set_changes: usize,
}

/// Replacement values for the neighbor enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborGrid {
    /// Candidate values per feature; a replacement row takes one from each.
    pub values: Vec<Vec<f64>>,
    /// Replacement labels.
    pub labels: Vec<usize>,
}

impl NeighborGrid {
    /// Per feature: up to four of the observed values spread over their
    /// range, plus one value below the minimum and one above the maximum.
    /// Labels: the classes present in the data.
    pub fn from_dataset(micro: &Dataset) -> Self {
        let values = (0..micro.n_features())
            .map(|j| {
                let mut seen: Vec<f64> = (0..micro.n_samples()).map(|i| micro.value(i, j)).collect();
                seen.sort_by(f64::total_cmp);
                seen.dedup();
                let m = seen.len();
                let mut grid: Vec<f64> = if m <= 4 {
                    seen.clone()
                } else {
                    (0..4).map(|q| seen[(q * (m - 1) + 1) / 3]).collect()
                };
                grid.push(seen[0] - 1.0);
                grid.push(seen[m - 1] + 1.0);
                grid.sort_by(f64::total_cmp);
                grid.dedup();
                grid
            })
            .collect();
        let mut labels = micro.labels().to_vec();
        labels.sort_unstable();
        labels.dedup();
        Self { values, labels }
    }

    /// Number of replacement rows, `None` on overflow.
    pub fn n_rows(&self) -> Option<usize> {
        self.values.iter().try_fold(1usize, |acc, c| acc.checked_mul(c.len()))
    }

    fn rows(&self) -> Result<Vec<Vec<f64>>> {
        match self.n_rows() {
            Some(m) if m <= MAX_GRID_ROWS => {}
            _ => {
                return Err(Error::Size(format!(
                    "neighbor grid expands to more than {MAX_GRID_ROWS} replacement rows; audit fewer features"
                )))
            }
        }
        let mut out = vec![Vec::new()];
        for column in &self.values {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    column.iter().map(move |&v| {
                        let mut row = prefix.clone();
                        row.push(v);
                        row
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

/// One record changed relative to the audited dataset.
#[derive(Clone, Copy)]
enum Change<'a> {
    Replace {
        row: usize,
        values: &'a [f64],
        label: usize,
    },
    Remove {
        row: usize,
    },
}

impl Change<'_> {
    fn describe(&self) -> String {
        match self {
            Change::Replace { row, values, label } => format!("replace row {row} with {values:?} label {label}"),
            Change::Remove { row } => format!("remove row {row}"),
        }
    }
}

/// The audited dataset, optionally with one record changed.
#[derive(Clone, Copy)]
struct View<'a> {
    base: &'a Dataset,
    change: Option<Change<'a>>,
}

impl View<'_> {
    fn records(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        (0..self.base.n_samples()).filter_map(move |i| match self.change {
            Some(Change::Remove { row }) if row == i => None,
            Some(Change::Replace { row, values, label }) if row == i => Some((values, label)),
            _ => Some((self.base.row(i), self.base.label(i))),
        })
    }

    fn labels(&self) -> ClassCounts {
        ClassCounts::from_labels(self.records().map(|(_, y)| y), self.base.n_classes())
    }

    /// `(threshold, decrease)` for every gap between adjacent distinct values.
    fn candidates(&self, feature: usize, criterion: Criterion) -> Vec<(f64, f64)> {
        let mut pairs: Vec<(f64, usize)> = self.records().map(|(x, y)| (x[feature], y)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let parent = self.labels();
        let mut left = ClassCounts::zeros(parent.n_classes());
        let mut right = parent.clone();
        let mut out = Vec::new();
        for w in 1..pairs.len() {
            left.add(pairs[w - 1].1);
            right.remove(pairs[w - 1].1);
            let (lo, hi) = (pairs[w - 1].0, pairs[w].0);
            if lo < hi {
                let d = impurity_decrease(&parent, &left, &right, criterion).expect("both sides are non-empty");
                out.push((midpoint(lo, hi), d));
            }
        }
        out
    }

    /// Best decrease per feature (0 when constant) and which features have
    /// any candidate.
    fn feature_scores(&self, criterion: Criterion) -> (Vec<f64>, Vec<bool>) {
        (0..self.base.n_features())
            .map(|j| {
                let c = self.candidates(j, criterion);
                (c.iter().map(|&(_, d)| d).fold(0.0, f64::max), !c.is_empty())
            })
            .unzip()
    }

    /// Decrease at each fixed threshold; a threshold leaving one side empty
    /// scores 0.
    fn threshold_scores(&self, feature: usize, thresholds: &[f64], criterion: Criterion) -> Vec<f64> {
        let parent = self.labels();
        thresholds
            .iter()
            .map(|&t| {
                let mut left = ClassCounts::zeros(parent.n_classes());
                for (x, y) in self.records() {
                    if x[feature] <= t {
                        left.add(y);
                    }
                }
                let right = parent.minus(&left);
                impurity_decrease(&parent, &left, &right, criterion).unwrap_or(0.0)
            })
            .collect()
    }
}

/// Calls `visit` on every neighbor of `micro`; returns how many there were.
fn for_each_neighbor<'a>(
    micro: &'a Dataset,
    grid: &NeighborGrid,
    rows: &'a [Vec<f64>],
    mut visit: impl FnMut(View<'a>),
) -> Result<usize> {
    if micro.n_samples() > MAX_AUDIT_ROWS {
        return Err(Error::Size(format!(
            "exhaustive audit supports at most {MAX_AUDIT_ROWS} rows, got {}",
            micro.n_samples()
        )));
    }
    if grid.values.len() != micro.n_features() {
        return Err(Error::Schema(format!(
            "grid has {} feature columns, dataset has {}",
            grid.values.len(),
            micro.n_features()
        )));
    }
    let k = micro.n_classes();
    if let Some(&bad) = grid.labels.iter().find(|&&c| c >= k) {
        return Err(Error::Schema(format!("grid label {bad} is not below {k}")));
    }
    let n = micro.n_samples();
    let mut count = 0;
    for row in 0..n {
        for values in rows {
            for &label in &grid.labels {
                if values.as_slice() == micro.row(row) && label == micro.label(row) {
                    continue;
                }
                count += 1;
                visit(View {
                    base: micro,
                    change: Some(Change::Replace { row, values, label }),
                });
            }
        }
        if n > 1 {
            count += 1;
            visit(View {
                base: micro,
                change: Some(Change::Remove { row }),
            });
        }
    }
    Ok(count)
}

struct Worst {
    ratio: f64,
    witness: Option<Witness>,
}

impl Worst {
    fn new() -> Self {
        Self {
            ratio: 1.0,
            witness: None,
        }
    }

    fn observe(&mut self, p: &[f64], q: &[f64], change: impl FnOnce() -> String) {
        let mut hit = None;
        for (a, (&x, &y)) in p.iter().zip(q).enumerate() {
            let r = if x == y { 1.0 } else { (x / y).max(y / x) };
            if r > self.ratio || self.witness.is_none() && hit.is_none() {
                self.ratio = self.ratio.max(r);
                hit = Some(a);
            }
        }
        if let Some(output) = hit {
            self.witness = Some(Witness {
                change: change(),
                output,
            });
        }
    }

    fn report(self, mechanism: &str, budget: f64, neighbors: usize, changes: usize) -> AuditReport {
        let bound = budget.exp();
        AuditReport {
            mechanism: mechanism.into(),
            budget,
            worst_ratio: self.ratio,
            bound,
            pass: self.ratio <= bound * (1.0 + AUDIT_TOLERANCE),
            witness: self.witness,
            neighbors,
            candidate_set_changes: changes,
        }
    }
}

fn check_budget(b: f64, name: &str) -> Result<()> {
    if b.is_finite() && b >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} must be finite and non-negative, got {b}"
        )))
    }
}

/// Audits root feature selection at scale `b1`.
pub fn audit_feature_mechanism(
    micro: &Dataset,
    b1: f64,
    grid: &NeighborGrid,
    criterion: Criterion,
) -> Result<AuditReport> {
    check_budget(b1, "B1")?;
    let probs = |scores: &[f64]| softmax_scaled(&normalize(scores), Scale::Finite(b1));
    let (scores, open) = View {
        base: micro,
        change: None,
    }
    .feature_scores(criterion);
    let p = probs(&scores);
    let rows = grid.rows()?;
    let mut worst = Worst::new();
    let mut changes = 0;
    let neighbors = for_each_neighbor(micro, grid, &rows, |nb| {
        let (s, o) = nb.feature_scores(criterion);
        changes += usize::from(o != open);
        worst.observe(&p, &probs(&s), || nb.change.map(|c| c.describe()).unwrap_or_default());
    })?;
    Ok(worst.report("feature", b1, neighbors, changes))
}

/// Audits split-value selection on `feature` at scale `b2`, over the
/// candidate thresholds of `micro`.
pub fn audit_value_mechanism(
    micro: &Dataset,
    feature: usize,
    b2: f64,
    grid: &NeighborGrid,
    criterion: Criterion,
) -> Result<AuditReport> {
    check_budget(b2, "B2")?;
    if feature >= micro.n_features() {
        return Err(Error::Schema(format!("feature {feature} out of range")));
    }
    let original = View {
        base: micro,
        change: None,
    };
    let thresholds: Vec<f64> = original.candidates(feature, criterion).iter().map(|c| c.0).collect();
    if thresholds.is_empty() {
        return Err(Error::NoChoices);
    }
    let probs = |scores: &[f64]| softmax_scaled(&normalize(scores), Scale::Finite(b2));
    let p = probs(&original.threshold_scores(feature, &thresholds, criterion));
    let rows = grid.rows()?;
    let mut worst = Worst::new();
    let mut changes = 0;
    let neighbors = for_each_neighbor(micro, grid, &rows, |nb| {
        let own = nb.candidates(feature, criterion);
        changes += usize::from(!own.iter().map(|c| c.0).eq(thresholds.iter().copied()));
        let q = probs(&nb.threshold_scores(feature, &thresholds, criterion));
        worst.observe(&p, &q, || nb.change.map(|c| c.describe()).unwrap_or_default());
    })?;
    Ok(worst.report("value", b2, neighbors, changes))
}

/// Audits leaf label selection at scale `b3` over every leaf that differs
/// from `counts` by one changed or removed record.
pub fn audit_label_mechanism(counts: &ClassCounts, b3: f64) -> Result<AuditReport> {
    check_budget(b3, "B3")?;
    let probs = |c: &ClassCounts| -> Result<Vec<f64>> {
        let eta = c
            .distribution()
            .ok_or_else(|| Error::Domain("leaf has no records".into()))?;
        Ok(softmax_scaled(&eta, Scale::Finite(b3)))
    };
    let p = probs(counts)?;
    let k = counts.n_classes();
    let mut worst = Worst::new();
    let mut seen = 0;
    for from in 0..k {
        if counts.as_slice()[from] == 0 {
            continue;
        }
        let mut reduced = counts.clone();
        reduced.remove(from);
        if reduced.total() > 0 {
            seen += 1;
            worst.observe(&p, &probs(&reduced)?, || format!("remove one label {from}"));
        }
        for to in (0..k).filter(|&c| c != from) {
            let mut moved = reduced.clone();
            moved.add(to);
            seen += 1;
            worst.observe(&p, &probs(&moved)?, || format!("change one label {from} to {to}"));
        }
    }
    Ok(worst.report("label", b3, seen, 0))
}
