//! Random Forest on the same flattened window features as the sLDA:
//! bootstrapped trees, Gini-impurity splits over random feature subsets,
//! majority-vote prediction.

use crate::data::{ClassLabel, EpochSet, SplitPlan};
use crate::rng::{ns, stream_id, stream_rng};
use crate::slda::{flatten_window, scan_windows, select_rows, SldaError, Window, WindowScan};
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RfError {
    #[error("mtry {mtry} outside 1..={d}")]
    InvalidMtry { mtry: usize, d: usize },
    #[error("need at least 2 trials, got {0}")]
    TooFewTrials(usize),
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("feature vector has length {got}, forest expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("window scan failed: {0}")]
    Scan(String),
}

/// Binary decision-tree node in a flat array; children are indices into
/// the same array.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Bootstrap-sample count per class; sums to the samples that
        /// reached the leaf.
        counts: Vec<u64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Leaf reached by `x`.
    pub fn leaf(&self, x: &[f64]) -> &Node {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                leaf => return leaf,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfModel {
    pub trees: Vec<Tree>,
    pub n_trees: usize,
    pub mtry: usize,
    pub seed: u64,
    pub n_features: usize,
    pub classes: Vec<ClassLabel>,
    pub window: Option<Window>,
}

pub const DEFAULT_N_TREES: usize = 50;

/// `round(sqrt(d))`, the classification default when mtry is not given.
pub fn default_mtry(d: usize) -> usize {
    ((d as f64).sqrt().round() as usize).clamp(1, d)
}

/// Bootstrap sample: `n` draws with replacement from `0..n`.
pub fn bootstrap_indices<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// Grow `n_trees` bootstrapped Gini trees. Trees are independent: tree `t`
/// draws from stream `(seed, RF_TREE, t)` and may be grown in parallel
/// with results identical to sequential growth.
pub fn fit_rf(
    features: ArrayView2<f64>,
    labels: &[ClassLabel],
    n_trees: usize,
    mtry: usize,
    seed: u64,
) -> Result<RfModel, RfError> {
    Ok(fit_rf_oob(features, labels, n_trees, mtry, seed)?.0)
}

/// As [`fit_rf`], also reporting out-of-bag accuracy (majority vote over
/// the trees that did not draw each trial).
pub fn fit_rf_oob(
    features: ArrayView2<f64>,
    labels: &[ClassLabel],
    n_trees: usize,
    mtry: usize,
    seed: u64,
) -> Result<(RfModel, f64), RfError> {
    let n = features.nrows();
    let d = features.ncols();
    if n < 2 {
        return Err(RfError::TooFewTrials(n));
    }
    if mtry == 0 || mtry > d {
        return Err(RfError::InvalidMtry { mtry, d });
    }
    let classes: Vec<ClassLabel> = ClassLabel::ALL
        .iter()
        .copied()
        .filter(|c| labels.contains(c))
        .collect();
    if classes.len() < 2 {
        return Err(RfError::TooFewClasses(classes.len()));
    }
    let class_idx: Vec<usize> = labels
        .iter()
        .map(|l| classes.iter().position(|c| c == l).unwrap())
        .collect();

    let grown: Vec<(Tree, Vec<usize>)> = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, stream_id(ns::RF_TREE, t as u32));
            let sample = bootstrap_indices(&mut rng, n);
            let mut in_bag = vec![false; n];
            for &i in &sample {
                in_bag[i] = true;
            }
            let oob: Vec<usize> = (0..n).filter(|&i| !in_bag[i]).collect();
            let tree = grow_tree(
                &features,
                &class_idx,
                classes.len(),
                sample,
                mtry,
                &mut rng,
            );
            (tree, oob)
        })
        .collect();

    // OOB vote per trial over the trees that held it out.
    let mut votes = vec![vec![0u64; classes.len()]; n];
    for (tree, oob) in &grown {
        for &i in oob {
            let x = features.row(i);
            if let Node::Leaf { counts } = tree.leaf(x.as_slice().unwrap()) {
                votes[i][leaf_majority(counts)] += 1;
            }
        }
    }
    let mut correct = 0usize;
    let mut voted = 0usize;
    for i in 0..n {
        if votes[i].iter().sum::<u64>() == 0 {
            continue;
        }
        voted += 1;
        let best = votes[i]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .unwrap()
            .0;
        if best == class_idx[i] {
            correct += 1;
        }
    }
    let oob_accuracy = if voted > 0 {
        correct as f64 / voted as f64
    } else {
        f64::NAN
    };

    Ok((
        RfModel {
            trees: grown.into_iter().map(|(t, _)| t).collect(),
            n_trees,
            mtry,
            seed,
            n_features: d,
            classes,
            window: None,
        },
        oob_accuracy,
    ))
}

fn leaf_majority(counts: &[u64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Majority vote across trees: each tree votes its leaf's majority class.
/// Ties break toward the lowest class index. Returns the class and the
/// per-class vote counts.
pub fn predict_rf(m: &RfModel, x: &[f64]) -> Result<(ClassLabel, Vec<u64>), RfError> {
    if x.len() != m.n_features {
        return Err(RfError::DimensionMismatch {
            got: x.len(),
            expected: m.n_features,
        });
    }
    let mut votes = vec![0u64; m.classes.len()];
    for tree in &m.trees {
        if let Node::Leaf { counts } = tree.leaf(x) {
            votes[leaf_majority(counts)] += 1;
        }
    }
    Ok((m.classes[leaf_majority(&votes)], votes))
}

struct TreeBuilder<'a> {
    features: &'a ArrayView2<'a, f64>,
    class_idx: &'a [usize],
    n_classes: usize,
    mtry: usize,
    nodes: Vec<Node>,
}

/// Grow one tree on a bootstrap sample: Gini splits over `mtry` randomly
/// chosen features per node, thresholds at midpoints between consecutive
/// distinct values, stopping at pure nodes or when no split improves.
fn grow_tree(
    features: &ArrayView2<f64>,
    class_idx: &[usize],
    n_classes: usize,
    mut sample: Vec<usize>,
    mtry: usize,
    rng: &mut impl Rng,
) -> Tree {
    let mut b = TreeBuilder {
        features,
        class_idx,
        n_classes,
        mtry,
        nodes: Vec::new(),
    };
    let len = sample.len();
    b.grow(&mut sample, 0, len, rng);
    Tree { nodes: b.nodes }
}

impl TreeBuilder<'_> {
    /// Build the node for `sample[lo..hi]`, partitioning that range in
    /// place; returns its index.
    fn grow(&mut self, sample: &mut [usize], lo: usize, hi: usize, rng: &mut impl Rng) -> usize {
        let mut counts = vec![0u64; self.n_classes];
        for &i in &sample[lo..hi] {
            counts[self.class_idx[i]] += 1;
        }
        let n_node = (hi - lo) as f64;
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || hi - lo < 2 {
            let idx = self.nodes.len();
            self.nodes.push(Node::Leaf { counts });
            return idx;
        }

        let parent_gini = gini(&counts, n_node);
        let candidates =
            rand::seq::index::sample(rng, self.features.ncols(), self.mtry).into_vec();
        let mut best: Option<(f64, usize, f64)> = None; // (gain, feature, threshold)
        let mut order: Vec<usize> = Vec::with_capacity(hi - lo);
        for &f in &candidates {
            order.clear();
            order.extend_from_slice(&sample[lo..hi]);
            order.sort_unstable_by(|&a, &b| {
                self.features[[a, f]]
                    .partial_cmp(&self.features[[b, f]])
                    .unwrap()
            });
            let mut left = vec![0u64; self.n_classes];
            let mut right = counts.clone();
            for k in 0..order.len() - 1 {
                let i = order[k];
                left[self.class_idx[i]] += 1;
                right[self.class_idx[i]] -= 1;
                let v = self.features[[i, f]];
                let v_next = self.features[[order[k + 1], f]];
                if v == v_next {
                    continue;
                }
                let n_l = (k + 1) as f64;
                let n_r = n_node - n_l;
                let gain =
                    parent_gini - (n_l * gini(&left, n_l) + n_r * gini(&right, n_r)) / n_node;
                if gain > best.map_or(1e-12, |b| b.0) {
                    best = Some((gain, f, 0.5 * (v + v_next)));
                }
            }
        }

        let Some((_, feature, threshold)) = best else {
            let idx = self.nodes.len();
            self.nodes.push(Node::Leaf { counts });
            return idx;
        };

        // Partition the range: left = values ≤ threshold.
        let slice = &mut sample[lo..hi];
        slice.sort_unstable_by(|&a, &b| {
            self.features[[a, feature]]
                .partial_cmp(&self.features[[b, feature]])
                .unwrap()
        });
        let mid = lo + slice.partition_point(|&i| self.features[[i, feature]] <= threshold);

        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: vec![] }); // placeholder
        let left = self.grow(sample, lo, mid, rng);
        let right = self.grow(sample, mid, hi, rng);
        self.nodes[idx] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        idx
    }
}

fn gini(counts: &[u64], n: f64) -> f64 {
    let mut g = 1.0;
    for &c in counts {
        let p = c as f64 / n;
        g -= p * p;
    }
    g
}

/// Sliding-window selection for the forest, mirroring the sLDA procedure:
/// one forest per candidate window scored by the plan's repeated folds,
/// refit on the full training set at the best start.
pub struct RfSelection {
    pub model: RfModel,
    pub scan: WindowScan,
}

pub fn sliding_window_select_rf(
    e: &EpochSet,
    win_len_s: f64,
    step: usize,
    plan: &SplitPlan,
    n_trees: usize,
    mtry: Option<usize>,
    seed: u64,
) -> Result<RfSelection, RfError> {
    let win_len = (win_len_s * e.fs).round() as usize;
    let scan = scan_windows(e, win_len, step, plan, |features, labels, train, test, stream| {
        let train_labels: Vec<ClassLabel> = train.iter().map(|&i| labels[i]).collect();
        let train_feats = select_rows(features, train);
        let m = mtry.unwrap_or_else(|| default_mtry(features.ncols()));
        let cell_seed = seed ^ ((stream as u64) << 20);
        let model = fit_rf(train_feats.view(), &train_labels, n_trees, m, cell_seed)
            .map_err(|e| e.to_string())?;
        let mut correct = 0;
        for &t in test {
            let (pred, _) =
                predict_rf(&model, features.row(t).as_slice().unwrap()).map_err(|e| e.to_string())?;
            if pred == labels[t] {
                correct += 1;
            }
        }
        Ok(correct as f64 / test.len().max(1) as f64)
    })
    .map_err(|e| RfError::Scan(e.to_string()))?;

    let start = scan.best_start();
    let features = flatten_window(e, start, win_len).map_err(|e| RfError::Scan(e.to_string()))?;
    let train_feats = select_rows(&features, &plan.train_indices);
    let train_labels: Vec<ClassLabel> = plan.train_indices.iter().map(|&i| e.labels[i]).collect();
    let m = mtry.unwrap_or_else(|| default_mtry(features.ncols()));
    let mut model = fit_rf(
        train_feats.view(),
        &train_labels,
        n_trees,
        m,
        seed ^ (u32::MAX as u64),
    )?;
    model.window = Some(Window {
        start,
        len: win_len,
    });
    Ok(RfSelection { model, scan })
}
