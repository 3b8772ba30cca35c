//! Bagged Gini decision trees.
//!
//! Every random choice inside a tree is seeded from the tree index and the
//! node's position in the tree, never from a shared stream. A forest of
//! `n` trees therefore equals the first `n` trees of a larger forest, and
//! a tree grown to depth `d` equals a deeper tree cut at depth `d`. Grid
//! search relies on both facts to share work across candidates.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::model::linear::balanced_weights;
use crate::seed;

const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ForestParams {
    pub min_samples_leaf: usize,
    pub n_estimators: usize,
    pub max_depth: usize,
}

impl ForestParams {
    fn validate(&self) -> Result<()> {
        if self.min_samples_leaf == 0 || self.n_estimators == 0 || self.max_depth == 0 {
            return Err(Error::InvalidArgument(format!(
                "forest parameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
    depth: u32,
    /// Class-weighted label distribution of the node's bootstrap samples.
    dist: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf_dist(&self, x: &[f64], max_depth: usize) -> &[f64] {
        let mut node = &self.nodes[0];
        while node.left != NO_CHILD && (node.depth as usize) < max_depth {
            node = if x[node.feature as usize] <= node.threshold {
                &self.nodes[node.left as usize]
            } else {
                &self.nodes[node.right as usize]
            };
        }
        &node.dist
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// A fitted forest, possibly a view onto a prefix of shared trees.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Arc<Vec<Tree>>,
    params: ForestParams,
    class_count: usize,
    dim: usize,
}

impl ForestModel {
    pub fn params(&self) -> ForestParams {
        self.params
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Same trees, fewer of them or cut shallower.
    pub(crate) fn view(&self, n_estimators: usize, max_depth: usize) -> ForestModel {
        debug_assert!(n_estimators <= self.trees.len());
        ForestModel {
            trees: Arc::clone(&self.trees),
            params: ForestParams {
                min_samples_leaf: self.params.min_samples_leaf,
                n_estimators,
                max_depth,
            },
            class_count: self.class_count,
            dim: self.dim,
        }
    }

    /// Mean leaf distribution over the active trees.
    pub fn score_row(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let trees = &self.trees[..self.params.n_estimators];
        for tree in trees {
            let dist = tree.leaf_dist(x, self.params.max_depth);
            out.iter_mut().zip(dist).for_each(|(o, d)| *o += d);
        }
        let k = trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
    }
}

struct Grower<'a> {
    features: &'a Matrix,
    labels: &'a [usize],
    class_weight: &'a [f64],
    class_count: usize,
    min_leaf: usize,
    max_depth: usize,
    max_features: usize,
}

struct Split {
    feature: usize,
    threshold: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl Grower<'_> {
    fn distribution(&self, samples: &[usize]) -> Vec<f64> {
        let mut d = vec![0.0; self.class_count];
        for &i in samples {
            d[self.labels[i]] += self.class_weight[i];
        }
        d
    }

    fn grow(&self, tree_seed: u64) -> Tree {
        let n = self.labels.len();
        let mut boot_rng = seed::rng(seed::derive(tree_seed, "bootstrap"));
        let samples: Vec<usize> = (0..n).map(|_| boot_rng.gen_range(0..n)).collect();

        let mut nodes: Vec<Node> = Vec::new();
        // (node slot, heap position, depth, samples)
        let mut stack = vec![(0usize, 1u64, 0usize, samples)];
        nodes.push(self.leaf(&stack[0].3, 0));
        while let Some((slot, path, depth, samples)) = stack.pop() {
            let dist = &nodes[slot].dist;
            let pure = dist.iter().filter(|&&w| w > 0.0).count() <= 1;
            if pure || depth >= self.max_depth || samples.len() < 2 * self.min_leaf {
                continue;
            }
            let mut node_rng = seed::rng(seed::derive_index(tree_seed, path));
            let Some(split) = self.best_split(&samples, &mut node_rng) else {
                continue;
            };
            let left_slot = nodes.len();
            nodes.push(self.leaf(&split.left, depth + 1));
            nodes.push(self.leaf(&split.right, depth + 1));
            let node = &mut nodes[slot];
            node.feature = split.feature as u32;
            node.threshold = split.threshold;
            node.left = left_slot as u32;
            node.right = (left_slot + 1) as u32;
            stack.push((left_slot + 1, 2 * path + 1, depth + 1, split.right));
            stack.push((left_slot, 2 * path, depth + 1, split.left));
        }
        Tree { nodes }
    }

    fn leaf(&self, samples: &[usize], depth: usize) -> Node {
        let mut dist = self.distribution(samples);
        let total: f64 = dist.iter().sum();
        if total > 0.0 {
            dist.iter_mut().for_each(|d| *d /= total);
        }
        Node {
            feature: 0,
            threshold: 0.0,
            left: NO_CHILD,
            right: NO_CHILD,
            depth: depth as u32,
            dist,
        }
    }

    /// Searches features in a random order; after `max_features` of them,
    /// stops at the first point where some valid split has been seen.
    fn best_split(&self, samples: &[usize], rng: &mut seed::Rng) -> Option<Split> {
        let dim = self.features.cols();
        let mut order: Vec<usize> = (0..dim).collect();
        order.shuffle(rng);

        let total = self.distribution(samples);
        let mut best: Option<(usize, f64, f64, usize)> = None; // feature, threshold, impurity, left count
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(samples.len());
        for (visited, &f) in order.iter().enumerate() {
            if visited >= self.max_features && best.is_some() {
                break;
            }
            sorted.clear();
            sorted.extend(samples.iter().map(|&i| (self.features.row(i)[f], i)));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let mut left = vec![0.0; self.class_count];
            let n = sorted.len();
            for pos in 0..n - 1 {
                let (v, i) = sorted[pos];
                left[self.labels[i]] += self.class_weight[i];
                let next = sorted[pos + 1].0;
                let left_n = pos + 1;
                if next <= v || left_n < self.min_leaf || n - left_n < self.min_leaf {
                    continue;
                }
                let impurity = split_impurity(&left, &total);
                if best.is_none_or(|b| impurity < b.2) {
                    let mut threshold = 0.5 * (v + next);
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some((f, threshold, impurity, left_n));
                }
            }
        }
        let (feature, threshold, _, _) = best?;
        let (left, right): (Vec<usize>, Vec<usize>) = samples
            .iter()
            .partition(|&&i| self.features.row(i)[feature] <= threshold);
        Some(Split {
            feature,
            threshold,
            left,
            right,
        })
    }
}

/// Weighted Gini impurity of a two-way partition (sum of child weight times
/// child impurity).
fn split_impurity(left: &[f64], total: &[f64]) -> f64 {
    let wl: f64 = left.iter().sum();
    let wt: f64 = total.iter().sum();
    let wr = wt - wl;
    let gini = |w: f64, counts: &mut dyn Iterator<Item = f64>| -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        let sq: f64 = counts.map(|c| (c / w) * (c / w)).sum();
        w * (1.0 - sq)
    };
    gini(wl, &mut left.iter().copied())
        + gini(wr, &mut left.iter().zip(total).map(|(l, t)| t - l))
}

fn check_inputs(features: &Matrix, labels: &[usize], class_count: usize) -> Result<()> {
    if features.rows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.rows(),
            right: labels.len(),
        });
    }
    if labels.iter().any(|&y| y >= class_count) {
        return Err(Error::InvalidArgument("label outside class range".into()));
    }
    let mut seen = vec![false; class_count];
    labels.iter().for_each(|&y| seen[y] = true);
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::TooFewClasses);
    }
    Ok(())
}

/// Fit a random forest; all randomness derives from `base_seed`.
pub fn fit_forest_seeded(
    features: &Matrix,
    labels: &[usize],
    class_count: usize,
    params: ForestParams,
    base_seed: u64,
) -> Result<ForestModel> {
    params.validate()?;
    check_inputs(features, labels, class_count)?;
    let class_weight = balanced_weights(labels, class_count);
    let dim = features.cols();
    let grower = Grower {
        features,
        labels,
        class_weight: &class_weight,
        class_count,
        min_leaf: params.min_samples_leaf,
        max_depth: params.max_depth,
        max_features: ((dim as f64).sqrt().floor() as usize).max(1),
    };
    let trees = (0..params.n_estimators)
        .map(|t| grower.grow(seed::derive_index(base_seed, t as u64)))
        .collect();
    Ok(ForestModel {
        trees: Arc::new(trees),
        params,
        class_count,
        dim,
    })
}

/// Fit a random forest with bootstrap bagging, Gini splits over
/// `floor(sqrt(d))` candidate features and balanced class weights.
pub fn fit_forest(
    features: &Matrix,
    labels: &[usize],
    class_count: usize,
    params: ForestParams,
    rng: &mut seed::Rng,
) -> Result<ForestModel> {
    let base_seed = rng.gen::<u64>();
    fit_forest_seeded(features, labels, class_count, params, base_seed)
}
