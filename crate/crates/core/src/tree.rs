//! Tree construction and per-tree prediction.
//!
//! A node keeps, for every feature, its structure rows sorted by that
//! feature. The lists are sorted once at the root and filtered (stably) into
//! the children, so every node can run an exact sorted sweep per feature
//! without re-sorting.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::impurity::{argmax_lowest, sweep_sorted, ClassCounts, Criterion, SplitCandidate};
use crate::splitsel::{sample_index, select_feature, select_value, softmax_scaled, Scale};

/// Feature draws per node before giving up and emitting a leaf.
pub const FEATURE_DRAWS: usize = 2;
/// Value draws per feature draw.
pub const VALUE_DRAWS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: ClassCounts,
        eta: Vec<f64>,
        depth: usize,
    },
}

/// Hyper-parameters a tree was grown with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TreeParams {
    /// Multinomial feature/value selection on structure points, leaves
    /// estimated from estimation points.
    Multinomial {
        b1: Scale,
        b2: Scale,
        min_leaf: usize,
        max_depth: Option<usize>,
        criterion: Criterion,
    },
    /// Greedy CART over `mtry` random features, leaves from the same sample.
    Greedy {
        min_node: usize,
        mtry: usize,
        max_depth: Option<usize>,
        criterion: Criterion,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
    depth: usize,
    n_features: usize,
    n_classes: usize,
    params: TreeParams,
    /// Master seed and stream index the tree was grown from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<(u64, u64)>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Depth of the deepest leaf; a root-only tree has depth 0.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    pub fn leaves(&self) -> impl Iterator<Item = (&ClassCounts, &[f64], usize)> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { counts, eta, depth } => Some((counts, eta.as_slice(), *depth)),
            Node::Split { .. } => None,
        })
    }

    /// Index of the leaf `x` falls in (`x` goes left iff value <= threshold).
    pub fn route(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return at,
            }
        }
    }

    /// Class tallies and label distribution of the leaf containing `x`.
    pub fn leaf(&self, x: &[f64]) -> (&ClassCounts, &[f64]) {
        match &self.nodes[self.route(x)] {
            Node::Leaf { counts, eta, .. } => (counts, eta),
            Node::Split { .. } => unreachable!("route always ends at a leaf"),
        }
    }
}

pub fn tree_depth(tree: &Tree) -> usize {
    tree.depth()
}

/// Draws a label from the leaf distribution with probability proportional
/// to `exp(B3 * eta_c / 2)`. An infinite `B3` returns the most probable label,
/// lowest index on ties, without consuming randomness.
pub fn predict_tree<R: Rng + ?Sized>(tree: &Tree, x: &[f64], b3: Scale, rng: &mut R) -> usize {
    let (_, eta) = tree.leaf(x);
    sample_label(eta, b3, rng)
}

pub(crate) fn sample_label<R: Rng + ?Sized>(eta: &[f64], b3: Scale, rng: &mut R) -> usize {
    match b3 {
        Scale::Infinite => argmax_lowest(eta.iter().copied()),
        Scale::Finite(_) => sample_index(&softmax_scaled(eta, b3), rng),
    }
}

/// Label distribution of `rows`. An empty set inherits `parent`, or the
/// uniform distribution when there is no parent.
pub fn leaf_distribution(dataset: &Dataset, rows: &[usize], parent: Option<&[f64]>) -> Vec<f64> {
    let k = dataset.n_classes();
    ClassCounts::from_labels(rows.iter().map(|&i| dataset.label(i)), k)
        .distribution()
        .unwrap_or_else(|| parent.map_or_else(|| vec![1.0 / k as f64; k], <[f64]>::to_vec))
}

/// Per-feature row lists sorted by feature value (ties by row index).
fn presort(dataset: &Dataset, rows: &[usize]) -> Vec<Vec<usize>> {
    (0..dataset.n_features())
        .map(|j| {
            let mut sorted = rows.to_vec();
            sorted.sort_by(|&a, &b| dataset.value(a, j).total_cmp(&dataset.value(b, j)).then(a.cmp(&b)));
            sorted
        })
        .collect()
}

fn split_sorted(
    dataset: &Dataset,
    sorted: Vec<Vec<usize>>,
    feature: usize,
    threshold: f64,
) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut left = Vec::with_capacity(sorted.len());
    let mut right = Vec::with_capacity(sorted.len());
    for list in sorted {
        let (l, r): (Vec<usize>, Vec<usize>) = list.into_iter().partition(|&i| dataset.value(i, feature) <= threshold);
        left.push(l);
        right.push(r);
    }
    (left, right)
}

fn is_constant(dataset: &Dataset, sorted: &[usize], feature: usize) -> bool {
    match (sorted.first(), sorted.last()) {
        (Some(&a), Some(&b)) => dataset.value(a, feature) == dataset.value(b, feature),
        _ => true,
    }
}

struct Work {
    slot: usize,
    depth: usize,
    sorted: Vec<Vec<usize>>,
    estimation: Vec<usize>,
    parent_eta: Option<Vec<f64>>,
}

struct Arena {
    nodes: Vec<Node>,
    depth: usize,
}

impl Arena {
    fn new() -> Self {
        Self {
            nodes: vec![placeholder()],
            depth: 0,
        }
    }

    fn leaf(&mut self, slot: usize, counts: ClassCounts, eta: Vec<f64>, depth: usize) {
        self.depth = self.depth.max(depth);
        self.nodes[slot] = Node::Leaf { counts, eta, depth };
    }

    fn split(&mut self, slot: usize, feature: usize, threshold: f64) -> (usize, usize) {
        let left = self.nodes.len();
        self.nodes.push(placeholder());
        self.nodes.push(placeholder());
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right: left + 1,
        };
        (left, left + 1)
    }
}

fn placeholder() -> Node {
    Node::Leaf {
        counts: ClassCounts::zeros(0),
        eta: Vec::new(),
        depth: 0,
    }
}

/// Grows one multinomial tree: split choices come from `structure`, leaf
/// distributions from `estimation`.
///
/// A node is split while it holds more than `min_leaf` estimation points and
/// is above `max_depth`. A sampled split is accepted only if both children
/// receive at least `min_leaf` estimation points; otherwise the value is
/// redrawn (up to [`VALUE_DRAWS`] times per feature draw) and then the
/// feature (up to [`FEATURE_DRAWS`] times) before the node becomes a leaf.
/// Features that are constant on the node's structure points are excluded
/// before normalization.
pub fn build_tree<R: Rng + ?Sized>(
    dataset: &Dataset,
    structure: &[usize],
    estimation: &[usize],
    params: &TreeParams,
    rng: &mut R,
) -> Tree {
    let TreeParams::Multinomial {
        b1,
        b2,
        min_leaf,
        max_depth,
        criterion,
    } = *params
    else {
        panic!("build_tree needs multinomial parameters");
    };
    let k = dataset.n_classes();
    let d = dataset.n_features();
    let mut arena = Arena::new();
    let mut stack = vec![Work {
        slot: 0,
        depth: 0,
        sorted: presort(dataset, structure),
        estimation: estimation.to_vec(),
        parent_eta: None,
    }];
    let mut per_feature: Vec<Vec<SplitCandidate>> = vec![Vec::new(); d];

    while let Some(work) = stack.pop() {
        let est_counts = ClassCounts::from_labels(work.estimation.iter().map(|&i| dataset.label(i)), k);
        let eta = est_counts
            .distribution()
            .or_else(|| work.parent_eta.clone())
            .unwrap_or_else(|| vec![1.0 / k as f64; k]);

        let may_split = work.estimation.len() > min_leaf && max_depth.is_none_or(|m| work.depth < m);
        let chosen = if may_split {
            choose_multinomial(dataset, &work, &mut per_feature, b1, b2, min_leaf, criterion, rng)
        } else {
            None
        };

        match chosen {
            None => arena.leaf(work.slot, est_counts, eta, work.depth),
            Some(split) => {
                let (left_slot, right_slot) = arena.split(work.slot, split.feature, split.threshold);
                let (left_sorted, right_sorted) = split_sorted(dataset, work.sorted, split.feature, split.threshold);
                let (left_est, right_est): (Vec<usize>, Vec<usize>) = work
                    .estimation
                    .into_iter()
                    .partition(|&i| dataset.value(i, split.feature) <= split.threshold);
                // right is pushed first so the left subtree is grown first
                stack.push(Work {
                    slot: right_slot,
                    depth: work.depth + 1,
                    sorted: right_sorted,
                    estimation: right_est,
                    parent_eta: Some(eta.clone()),
                });
                stack.push(Work {
                    slot: left_slot,
                    depth: work.depth + 1,
                    sorted: left_sorted,
                    estimation: left_est,
                    parent_eta: Some(eta),
                });
            }
        }
    }

    Tree {
        nodes: arena.nodes,
        depth: arena.depth,
        n_features: d,
        n_classes: k,
        params: params.clone(),
        seed: None,
    }
}

#[allow(clippy::too_many_arguments)]
fn choose_multinomial<R: Rng + ?Sized>(
    dataset: &Dataset,
    work: &Work,
    per_feature: &mut [Vec<SplitCandidate>],
    b1: Scale,
    b2: Scale,
    min_leaf: usize,
    criterion: Criterion,
    rng: &mut R,
) -> Option<SplitCandidate> {
    let structure = &work.sorted[0];
    if structure.len() < 2 {
        return None;
    }
    let parent = ClassCounts::from_labels(structure.iter().map(|&i| dataset.label(i)), dataset.n_classes());
    let mut features = Vec::new();
    let mut best = Vec::new();
    for (j, cands) in per_feature.iter_mut().enumerate() {
        cands.clear();
        sweep_sorted(dataset, &work.sorted[j], j, &parent, criterion, cands);
        if let Some(max) = cands.iter().map(|c| c.decrease).reduce(f64::max) {
            features.push(j);
            best.push(max);
        }
    }
    if features.is_empty() {
        return None;
    }
    for _ in 0..FEATURE_DRAWS {
        let feature = features[select_feature(&best, b1, rng).ok()?];
        let cands = &per_feature[feature];
        let decreases: Vec<f64> = cands.iter().map(|c| c.decrease).collect();
        for _ in 0..VALUE_DRAWS {
            let cand = cands[select_value(&decreases, b2, rng).ok()?];
            let left = work
                .estimation
                .iter()
                .filter(|&&i| dataset.value(i, feature) <= cand.threshold)
                .count();
            if left >= min_leaf && work.estimation.len() - left >= min_leaf {
                return Some(cand);
            }
        }
    }
    None
}

/// Grows one greedy CART tree on `sample` (which may repeat rows).
///
/// At each node `mtry` features are drawn without replacement from those not
/// constant on the node, and the split with the largest impurity decrease is
/// taken; ties go to the lowest feature index, then the lowest threshold.
/// A node with at most `min_node` samples, or a pure node, becomes a leaf
/// whose distribution is that of its samples.
pub fn build_greedy_tree<R: Rng + ?Sized>(
    dataset: &Dataset,
    sample: &[usize],
    params: &TreeParams,
    rng: &mut R,
) -> Tree {
    let TreeParams::Greedy {
        min_node,
        mtry,
        max_depth,
        criterion,
    } = *params
    else {
        panic!("build_greedy_tree needs greedy parameters");
    };
    let k = dataset.n_classes();
    let d = dataset.n_features();
    let mut arena = Arena::new();
    let mut stack = vec![Work {
        slot: 0,
        depth: 0,
        sorted: presort(dataset, sample),
        estimation: Vec::new(),
        parent_eta: None,
    }];
    let mut cands = Vec::new();

    while let Some(work) = stack.pop() {
        let rows = &work.sorted[0];
        let counts = ClassCounts::from_labels(rows.iter().map(|&i| dataset.label(i)), k);
        let eta = counts
            .distribution()
            .or_else(|| work.parent_eta.clone())
            .unwrap_or_else(|| vec![1.0 / k as f64; k]);

        let may_split = rows.len() > min_node && !counts.is_pure() && max_depth.is_none_or(|m| work.depth < m);
        let mut chosen: Option<SplitCandidate> = None;
        if may_split {
            let open: Vec<usize> = (0..d).filter(|&j| !is_constant(dataset, &work.sorted[j], j)).collect();
            if !open.is_empty() {
                let take = mtry.clamp(1, open.len());
                let mut drawn: Vec<usize> = index::sample(rng, open.len(), take)
                    .into_iter()
                    .map(|p| open[p])
                    .collect();
                drawn.sort_unstable();
                for j in drawn {
                    cands.clear();
                    sweep_sorted(dataset, &work.sorted[j], j, &counts, criterion, &mut cands);
                    for c in &cands {
                        if chosen.is_none_or(|b| c.decrease > b.decrease) {
                            chosen = Some(*c);
                        }
                    }
                }
            }
        }

        match chosen {
            None => arena.leaf(work.slot, counts, eta, work.depth),
            Some(split) => {
                let (left_slot, right_slot) = arena.split(work.slot, split.feature, split.threshold);
                let (left_sorted, right_sorted) = split_sorted(dataset, work.sorted, split.feature, split.threshold);
                stack.push(Work {
                    slot: right_slot,
                    depth: work.depth + 1,
                    sorted: right_sorted,
                    estimation: Vec::new(),
                    parent_eta: Some(eta.clone()),
                });
                stack.push(Work {
                    slot: left_slot,
                    depth: work.depth + 1,
                    sorted: left_sorted,
                    estimation: Vec::new(),
                    parent_eta: Some(eta),
                });
            }
        }
    }

    Tree {
        nodes: arena.nodes,
        depth: arena.depth,
        n_features: d,
        n_classes: k,
        params: params.clone(),
        seed: None,
    }
}
