//! Greedy CART tree induction: the baseline learner and the sampling
//! engine behind threshold harvesting, plus the tuned-grid variant.
//!
//! Candidate thresholds are observed feature values (not midpoints) so
//! every split a CART tree emits lives in the same split universe the
//! path-based master model works over.

use std::collections::HashMap;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tree::{RowSet, Split};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    Gini,
    Entropy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassWeight {
    None,
    Balanced,
}

/// Growth parameters. The sample thresholds are fractions of the build
/// call's row count; the defaults resolve to the usual library minimums
/// (2 rows to split a node, 1 row per leaf).
#[derive(Clone, Debug, PartialEq)]
pub struct CartParams {
    pub max_depth: usize,
    pub criterion: Criterion,
    pub min_samples_split: f64,
    pub min_leaf_fraction: f64,
    pub class_weight: ClassWeight,
}

impl CartParams {
    pub fn with_depth(max_depth: usize) -> Self {
        CartParams {
            max_depth,
            criterion: Criterion::Gini,
            min_samples_split: 1e-9,
            min_leaf_fraction: 1e-9,
            class_weight: ClassWeight::None,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |f: f64| f > 0.0 && f <= 1.0;
        if !ok(self.min_samples_split) || !ok(self.min_leaf_fraction) {
            return Err(Error::Invalid("CART fractions must lie in (0, 1]".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Invalid("max_depth must be >= 1".into()));
        }
        Ok(())
    }
}

/// One node of a grown CART tree. `heap_pos` is the node's position in the
/// full binary topology of the requested depth (root = 0, children of `j`
/// at `2j+1` and `2j+2`), which is how sampling attributes splits to
/// master-model nodes.
#[derive(Clone, Debug)]
pub struct CartNode {
    pub heap_pos: usize,
    pub level: usize,
    pub split: Option<Split>,
    pub children: Option<(usize, usize)>,
    pub majority: usize,
    pub n_rows: usize,
}

/// A grown tree, possibly shallower than `max_depth` where growth stopped
/// early. Every present internal node has both children present.
#[derive(Clone, Debug)]
pub struct CartTree {
    nodes: Vec<CartNode>,
}

impl CartTree {
    pub fn nodes(&self) -> &[CartNode] {
        &self.nodes
    }

    pub fn root(&self) -> &CartNode {
        &self.nodes[0]
    }

    /// Deepest level present (0 for a single-leaf tree).
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut node = &self.nodes[0];
        while let (Some(split), Some((l, r))) = (node.split, node.children) {
            node = if split.test(row) {
                &self.nodes[l]
            } else {
                &self.nodes[r]
            };
        }
        node.majority
    }

    pub fn accuracy(&self, d: &Dataset, rows: &RowSet) -> Result<f64> {
        let total = rows.len();
        if total == 0 {
            return Err(Error::Invalid("accuracy over an empty row set".into()));
        }
        let correct = rows
            .iter()
            .filter(|&r| self.predict_row(d.row(r)) == d.target(r))
            .count();
        Ok(correct as f64 / total as f64)
    }

    /// Splits of all internal nodes keyed by heap position.
    pub fn splits_by_heap_pos(&self) -> HashMap<usize, Split> {
        self.nodes
            .iter()
            .filter_map(|n| n.split.map(|s| (n.heap_pos, s)))
            .collect()
    }

    /// Node lookup by heap position.
    pub fn node_at_heap_pos(&self, heap_pos: usize) -> Option<&CartNode> {
        self.nodes.iter().find(|n| n.heap_pos == heap_pos)
    }
}

/// Impurity of a class-count vector under per-class weights.
///
/// gini = 1 - sum((w_t n_t / W)^2), entropy = -sum(p log2 p) with
/// W = sum(w_t n_t). Errors when every weighted count is zero.
pub fn impurity(counts: &[usize], criterion: Criterion, weights: &[f64]) -> Result<f64> {
    let total: f64 = counts
        .iter()
        .zip(weights)
        .map(|(&n, &w)| n as f64 * w)
        .sum();
    if total <= 0.0 {
        return Err(Error::Invalid("impurity of an all-zero count vector".into()));
    }
    Ok(impurity_unchecked(counts, criterion, weights, total))
}

fn impurity_unchecked(counts: &[usize], criterion: Criterion, weights: &[f64], total: f64) -> f64 {
    match criterion {
        Criterion::Gini => {
            let mut sum_sq = 0.0;
            for (&n, &w) in counts.iter().zip(weights) {
                let p = n as f64 * w / total;
                sum_sq += p * p;
            }
            1.0 - sum_sq
        }
        Criterion::Entropy => {
            let mut h = 0.0;
            for (&n, &w) in counts.iter().zip(weights) {
                let p = n as f64 * w / total;
                if p > 0.0 {
                    h -= p * p.log2();
                }
            }
            h
        }
    }
}

fn class_weights(d: &Dataset, rows: &RowSet, mode: ClassWeight) -> Vec<f64> {
    match mode {
        ClassWeight::None => vec![1.0; d.n_classes()],
        ClassWeight::Balanced => {
            let counts = d.class_histogram(rows);
            let n = rows.len() as f64;
            let t = d.n_classes() as f64;
            counts
                .iter()
                .map(|&c| if c == 0 { 0.0 } else { n / (t * c as f64) })
                .collect()
        }
    }
}

fn weighted_majority(counts: &[usize], weights: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_w = f64::NEG_INFINITY;
    for (c, (&n, &w)) in counts.iter().zip(weights).enumerate() {
        let v = n as f64 * w;
        if v > best_w {
            best_w = v;
            best = c;
        }
    }
    best
}

/// Search state shared across one `build` call.
struct Grower<'a> {
    d: &'a Dataset,
    params: &'a CartParams,
    weights: Vec<f64>,
    min_split_count: usize,
    min_leaf_count: usize,
    nodes: Vec<CartNode>,
}

impl Grower<'_> {
    /// Locally best split by weighted child impurity over candidate
    /// thresholds, which are the observed values of each feature among the
    /// node's rows. Sorted scan with incremental class counts; ties go to
    /// the lowest feature index, then the lowest threshold.
    fn best_split(&self, rows: &RowSet) -> Option<Split> {
        let n = rows.len();
        if n < 2 || n < self.min_split_count {
            return None;
        }
        let counts = self.d.class_histogram(rows);
        let total_w: f64 = counts
            .iter()
            .zip(&self.weights)
            .map(|(&c, &w)| c as f64 * w)
            .sum();
        if total_w <= 0.0
            || impurity_unchecked(&counts, self.params.criterion, &self.weights, total_w) <= 0.0
        {
            return None; // pure node
        }

        let indices = rows.indices();
        let mut best: Option<(f64, Split)> = None;
        let mut sorted = indices.clone();
        for f in 0..self.d.n_features() {
            sorted.sort_by(|&a, &b| self.d.value(a, f).total_cmp(&self.d.value(b, f)));
            let mut left_counts = vec![0usize; self.d.n_classes()];
            let mut left_n = 0usize;
            let mut left_w = 0.0;
            let mut i = 0usize;
            while i < sorted.len() {
                let v = self.d.value(sorted[i], f);
                // absorb the whole group of equal values into the left side
                while i < sorted.len() && self.d.value(sorted[i], f) == v {
                    let t = self.d.target(sorted[i]);
                    left_counts[t] += 1;
                    left_n += 1;
                    left_w += self.weights[t];
                    i += 1;
                }
                if i == sorted.len() {
                    break; // threshold at the max value leaves the right child empty
                }
                let right_n = n - left_n;
                if left_n < self.min_leaf_count || right_n < self.min_leaf_count {
                    continue;
                }
                let right_w = total_w - left_w;
                if left_w <= 0.0 || right_w <= 0.0 {
                    continue;
                }
                let right_counts: Vec<usize> = counts
                    .iter()
                    .zip(&left_counts)
                    .map(|(&a, &b)| a - b)
                    .collect();
                let score = left_w
                    * impurity_unchecked(&left_counts, self.params.criterion, &self.weights, left_w)
                    + right_w
                        * impurity_unchecked(
                            &right_counts,
                            self.params.criterion,
                            &self.weights,
                            right_w,
                        );
                let candidate = Split::new(f, v);
                let better = match &best {
                    None => true,
                    Some((s, b)) => score < s - 1e-12 || ((score - s).abs() <= 1e-12 && candidate < *b),
                };
                if better {
                    best = Some((score, candidate));
                }
            }
        }
        best.map(|(_, s)| s)
    }

    fn grow(&mut self, rows: &RowSet, level: usize, heap_pos: usize) -> usize {
        let counts = self.d.class_histogram(rows);
        let majority = weighted_majority(&counts, &self.weights);
        let id = self.nodes.len();
        self.nodes.push(CartNode {
            heap_pos,
            level,
            split: None,
            children: None,
            majority,
            n_rows: rows.len(),
        });
        if level >= self.params.max_depth {
            return id;
        }
        let Some(split) = self.best_split(rows) else {
            return id;
        };
        let mut left = RowSet::empty(rows.capacity());
        let mut right = RowSet::empty(rows.capacity());
        for r in rows.iter() {
            if split.test(self.d.row(r)) {
                left.insert(r);
            } else {
                right.insert(r);
            }
        }
        let l = self.grow(&left, level + 1, 2 * heap_pos + 1);
        let r = self.grow(&right, level + 1, 2 * heap_pos + 2);
        self.nodes[id].split = Some(split);
        self.nodes[id].children = Some((l, r));
        id
    }
}

/// Locally best split for a node, or `None` when the node is pure, too
/// small to split, or no candidate leaves both children large enough.
pub fn best_split(d: &Dataset, rows: &RowSet, params: &CartParams) -> Result<Option<Split>> {
    params.validate()?;
    let n = rows.len();
    let grower = Grower {
        d,
        params,
        weights: class_weights(d, rows, params.class_weight),
        min_split_count: resolve_count(params.min_samples_split, n).max(2),
        min_leaf_count: resolve_count(params.min_leaf_fraction, n).max(1),
        nodes: Vec::new(),
    };
    Ok(grower.best_split(rows))
}

fn resolve_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).ceil() as usize
}

/// Grow a tree by recursive locally-best splitting until the depth cap,
/// purity, or the minimum-sample rules stop growth.
pub fn build(d: &Dataset, rows: &RowSet, params: &CartParams) -> Result<CartTree> {
    params.validate()?;
    let n = rows.len();
    if n == 0 {
        return Err(Error::Invalid("cannot grow a tree on zero rows".into()));
    }
    let mut grower = Grower {
        d,
        params,
        weights: class_weights(d, rows, params.class_weight),
        min_split_count: resolve_count(params.min_samples_split, n).max(2),
        min_leaf_count: resolve_count(params.min_leaf_fraction, n).max(1),
        nodes: Vec::new(),
    };
    grower.grow(rows, 0, 0);
    Ok(CartTree { nodes: grower.nodes })
}

/// The 80-cell hyperparameter grid, in tie-breaking order.
pub fn cart_star_grid(max_depth: usize) -> Vec<CartParams> {
    let mut grid = Vec::with_capacity(80);
    for criterion in [Criterion::Gini, Criterion::Entropy] {
        for &min_samples_split in &[0.02, 0.05, 0.1, 0.2] {
            for class_weight in [ClassWeight::None, ClassWeight::Balanced] {
                for &min_leaf_fraction in &[0.01, 0.05, 0.1, 0.2, 1.0] {
                    grid.push(CartParams {
                        max_depth,
                        criterion,
                        min_samples_split,
                        min_leaf_fraction,
                        class_weight,
                    });
                }
            }
        }
    }
    grid
}

/// Mean 10-fold cross-validated accuracy of one parameter cell. Folds are
/// assigned round-robin over the rows in ascending index order, so the
/// score is deterministic.
pub fn cv_score(d: &Dataset, rows: &RowSet, params: &CartParams) -> Result<f64> {
    let indices = rows.indices();
    let folds = 10usize;
    if indices.len() < folds {
        return Err(Error::Invalid(format!(
            "need at least {folds} rows for {folds}-fold cross validation, have {}",
            indices.len()
        )));
    }
    let mut total = 0.0;
    for fold in 0..folds {
        let mut train = RowSet::empty(d.n_rows());
        let mut held = RowSet::empty(d.n_rows());
        for (i, &r) in indices.iter().enumerate() {
            if i % folds == fold {
                held.insert(r);
            } else {
                train.insert(r);
            }
        }
        let tree = build(d, &train, params)?;
        total += tree.accuracy(d, &held)?;
    }
    Ok(total / folds as f64)
}

/// Exhaustive grid search scored by 10-fold cross validation; the best
/// cell (first in grid order on ties) is refit on all the given rows.
pub fn tune_cart_star(d: &Dataset, rows: &RowSet, max_depth: usize) -> Result<(CartParams, CartTree)> {
    if rows.len() < 20 {
        return Err(Error::Invalid(format!(
            "need at least 20 rows to tune, have {}",
            rows.len()
        )));
    }
    let mut best: Option<(f64, CartParams)> = None;
    for params in cart_star_grid(max_depth) {
        let score = cv_score(d, rows, &params)?;
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, params));
        }
    }
    let (_, params) = best.expect("grid is nonempty");
    let tree = build(d, rows, &params)?;
    Ok((params, tree))
}
