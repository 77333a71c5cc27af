//! Impurity criteria, impurity decrease and candidate split enumeration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Decreases this far below zero are rounding noise and are clamped to zero.
pub const DECREASE_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Gini,
    Entropy,
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gini" => Ok(Criterion::Gini),
            "entropy" => Ok(Criterion::Entropy),
            other => Err(Error::Config(format!("unknown impurity criterion {other:?}"))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Gini => "gini",
            Criterion::Entropy => "entropy",
        })
    }
}

/// Per-class tallies of the samples at a node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    counts: Vec<u64>,
    total: u64,
}

impl ClassCounts {
    pub fn zeros(classes: usize) -> Self {
        Self {
            counts: vec![0; classes],
            total: 0,
        }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn from_labels<I: IntoIterator<Item = usize>>(labels: I, classes: usize) -> Self {
        let mut out = Self::zeros(classes);
        for y in labels {
            out.add(y);
        }
        out
    }

    #[inline]
    pub fn add(&mut self, class: usize) {
        self.counts[class] += 1;
        self.total += 1;
    }

    #[inline]
    pub fn remove(&mut self, class: usize) {
        self.counts[class] -= 1;
        self.total -= 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn is_pure(&self) -> bool {
        self.counts.iter().filter(|&&c| c > 0).count() <= 1
    }

    /// Empirical class distribution, or `None` for an empty node.
    pub fn distribution(&self) -> Option<Vec<f64>> {
        (self.total > 0).then(|| {
            let n = self.total as f64;
            self.counts.iter().map(|&c| c as f64 / n).collect()
        })
    }

    /// Most frequent class; ties go to the lowest class index.
    pub fn majority(&self) -> usize {
        argmax_lowest(self.counts.iter().copied())
    }

    /// `self - other`, elementwise. Panics if `other` exceeds `self`.
    pub fn minus(&self, other: &ClassCounts) -> ClassCounts {
        let counts: Vec<u64> = self.counts.iter().zip(&other.counts).map(|(a, b)| a - b).collect();
        ClassCounts::from_counts(counts)
    }
}

pub(crate) fn argmax_lowest<T: PartialOrd, I: IntoIterator<Item = T>>(values: I) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match &best {
            Some((_, b)) if v.partial_cmp(b) != Some(std::cmp::Ordering::Greater) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map_or(0, |(i, _)| i)
}

#[inline]
fn impurity_of(counts: &[u64], total: u64, criterion: Criterion) -> f64 {
    let n = total as f64;
    match criterion {
        Criterion::Gini => {
            let sq: f64 = counts
                .iter()
                .map(|&c| {
                    let p = c as f64 / n;
                    p * p
                })
                .sum();
            1.0 - sq
        }
        Criterion::Entropy => -counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.log2()
            })
            .sum::<f64>(),
    }
}

/// Gini index `1 - sum p_c^2` or Shannon entropy in bits.
pub fn impurity(counts: &ClassCounts, criterion: Criterion) -> Result<f64> {
    if counts.total == 0 {
        return Err(Error::EmptyNode);
    }
    Ok(impurity_of(&counts.counts, counts.total, criterion))
}

#[inline]
fn clamp_decrease(d: f64) -> f64 {
    if d < 0.0 && d > -DECREASE_CLAMP {
        0.0
    } else {
        d
    }
}

/// Parent impurity minus the size-weighted impurities of the two children.
pub fn impurity_decrease(
    parent: &ClassCounts,
    left: &ClassCounts,
    right: &ClassCounts,
    criterion: Criterion,
) -> Result<f64> {
    let consistent = parent.counts.len() == left.counts.len()
        && parent.counts.len() == right.counts.len()
        && parent
            .counts
            .iter()
            .zip(left.counts.iter().zip(&right.counts))
            .all(|(p, (l, r))| *p == l + r);
    if !consistent {
        return Err(Error::Mismatch {
            parent: parent.total,
            left: left.total,
            right: right.total,
        });
    }
    if left.total == 0 || right.total == 0 {
        return Err(Error::EmptyChild);
    }
    let parent_impurity = impurity_of(&parent.counts, parent.total, criterion);
    Ok(decrease_unchecked(
        parent_impurity,
        parent.total,
        left,
        right,
        criterion,
    ))
}

#[inline]
fn decrease_unchecked(
    parent_impurity: f64,
    parent_total: u64,
    left: &ClassCounts,
    right: &ClassCounts,
    criterion: Criterion,
) -> f64 {
    let n = parent_total as f64;
    let wl = left.total as f64 / n;
    let wr = right.total as f64 / n;
    clamp_decrease(
        parent_impurity
            - wl * impurity_of(&left.counts, left.total, criterion)
            - wr * impurity_of(&right.counts, right.total, criterion),
    )
}

/// One way to split a node: send rows with `feature <= threshold` left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub decrease: f64,
}

/// Midpoint of two adjacent distinct values, nudged down to `lo` in the rare
/// case rounding would land it on `hi`.
#[inline]
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Single sorted sweep over rows already ordered by `feature`, appending one
/// candidate per gap between adjacent distinct values.
pub(crate) fn sweep_sorted(
    dataset: &Dataset,
    sorted: &[usize],
    feature: usize,
    parent: &ClassCounts,
    criterion: Criterion,
    out: &mut Vec<SplitCandidate>,
) {
    if sorted.len() < 2 {
        return;
    }
    let parent_impurity = impurity_of(&parent.counts, parent.total, criterion);
    let mut left = ClassCounts::zeros(parent.n_classes());
    let mut right = parent.clone();
    for w in 0..sorted.len() - 1 {
        let i = sorted[w];
        let y = dataset.label(i);
        left.add(y);
        right.remove(y);
        let v = dataset.value(i, feature);
        let next = dataset.value(sorted[w + 1], feature);
        if v < next {
            out.push(SplitCandidate {
                feature,
                threshold: midpoint(v, next),
                decrease: decrease_unchecked(parent_impurity, parent.total, &left, &right, criterion),
            });
        }
    }
}

/// Enumerates every split of `rows` on `feature`, thresholds at midpoints
/// between adjacent distinct values, each with its exact impurity decrease.
/// A feature that is constant on `rows` yields no candidates.
pub fn candidate_splits(
    dataset: &Dataset,
    rows: &[usize],
    feature: usize,
    criterion: Criterion,
) -> Vec<SplitCandidate> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|&a, &b| dataset.value(a, feature).total_cmp(&dataset.value(b, feature)));
    let parent = ClassCounts::from_labels(rows.iter().map(|&i| dataset.label(i)), dataset.n_classes());
    let mut out = Vec::new();
    sweep_sorted(dataset, &sorted, feature, &parent, criterion, &mut out);
    out
}

/// Tallies for the two sides of `threshold`, for checks outside the sweep.
pub fn split_counts(dataset: &Dataset, rows: &[usize], feature: usize, threshold: f64) -> (ClassCounts, ClassCounts) {
    let k = dataset.n_classes();
    let mut left = ClassCounts::zeros(k);
    let mut right = ClassCounts::zeros(k);
    for &i in rows {
        if dataset.value(i, feature) <= threshold {
            left.add(dataset.label(i));
        } else {
            right.add(dataset.label(i));
        }
    }
    (left, right)
}
