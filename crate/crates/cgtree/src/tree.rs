//! Binary tree topology, decision splits, decision paths, row routing and
//! the JSON model format.
//!
//! Node ids are heap-ordered: the root is 0 and the children of node `j`
//! are `2j+1` and `2j+2`. For depth `k` the internal nodes are
//! `0..2^k-1` and the leaves are `2^k-1..2^(k+1)-1`, so the path from the
//! root to a leaf, the set of left-child nodes on it and the set of
//! right-child nodes on it are all computable arithmetically.

use std::collections::HashMap;
use std::fmt;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Fixed-width bit set over row indices.
///
/// Routing and correct-prediction counts reduce to word-parallel
/// AND / AND-NOT / popcount passes over per-split row masks.
#[derive(Clone, PartialEq, Eq)]
pub struct RowSet {
    words: Vec<u64>,
    nbits: usize,
}

impl RowSet {
    pub fn empty(nbits: usize) -> Self {
        RowSet {
            words: vec![0; nbits.div_ceil(64)],
            nbits,
        }
    }

    pub fn full(nbits: usize) -> Self {
        let mut s = Self::empty(nbits);
        for i in 0..nbits {
            s.insert(i);
        }
        s
    }

    pub fn from_indices(nbits: usize, idx: &[usize]) -> Self {
        let mut s = Self::empty(nbits);
        for &i in idx {
            s.insert(i);
        }
        s
    }

    pub fn capacity(&self) -> usize {
        self.nbits
    }

    pub fn insert(&mut self, i: usize) {
        debug_assert!(i < self.nbits);
        self.words[i / 64] |= 1u64 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        debug_assert!(i < self.nbits);
        self.words[i / 64] &= !(1u64 << (i % 64));
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.nbits && self.words[i / 64] & (1u64 << (i % 64)) != 0
    }

    /// Number of set bits.
    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// In-place `self &= other`.
    pub fn intersect(&mut self, other: &RowSet) {
        debug_assert_eq!(self.nbits, other.nbits);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    /// In-place `self &= !other`.
    pub fn subtract(&mut self, other: &RowSet) {
        debug_assert_eq!(self.nbits, other.nbits);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    /// In-place `self |= other`.
    pub fn union_with(&mut self, other: &RowSet) {
        debug_assert_eq!(self.nbits, other.nbits);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn and(&self, other: &RowSet) -> RowSet {
        let mut out = self.clone();
        out.intersect(other);
        out
    }

    pub fn and_not(&self, other: &RowSet) -> RowSet {
        let mut out = self.clone();
        out.subtract(other);
        out
    }

    /// `|self & other|` without materializing the intersection.
    pub fn intersection_len(&self, other: &RowSet) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn is_disjoint(&self, other: &RowSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    pub fn is_subset(&self, other: &RowSet) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    /// Iterate set bit indices in ascending order.
    pub fn iter(&self) -> RowSetIter<'_> {
        RowSetIter {
            set: self,
            word_idx: 0,
            current: self.words.first().copied().unwrap_or(0),
        }
    }

    pub fn indices(&self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl fmt::Debug for RowSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RowSet({}/{}) {:?}", self.len(), self.nbits, self.indices())
    }
}

pub struct RowSetIter<'a> {
    set: &'a RowSet,
    word_idx: usize,
    current: u64,
}

impl Iterator for RowSetIter<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        loop {
            if self.current != 0 {
                let bit = self.current.trailing_zeros() as usize;
                self.current &= self.current - 1;
                return Some(self.word_idx * 64 + bit);
            }
            self.word_idx += 1;
            if self.word_idx >= self.set.words.len() {
                return None;
            }
            self.current = self.set.words[self.word_idx];
        }
    }
}

/// Univariate decision split: rows with `value(feature) <= threshold` go
/// left, the rest go right. Thresholds are always observed feature values.
#[derive(Clone, Copy, Debug)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
}

impl Split {
    pub fn new(feature: usize, threshold: f64) -> Self {
        Split { feature, threshold }
    }

    /// Split outcome for a row of encoded feature values.
    pub fn test(&self, row: &[f64]) -> bool {
        row[self.feature] <= self.threshold
    }
}

impl PartialEq for Split {
    fn eq(&self, other: &Self) -> bool {
        self.feature == other.feature && self.threshold.to_bits() == other.threshold.to_bits()
    }
}

impl Eq for Split {}

impl std::hash::Hash for Split {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.feature.hash(state);
        self.threshold.to_bits().hash(state);
    }
}

impl PartialOrd for Split {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Split {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.feature
            .cmp(&other.feature)
            .then_with(|| self.threshold.total_cmp(&other.threshold))
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(f{} <= {})", self.feature, self.threshold)
    }
}

/// Full binary tree topology of a given depth with heap-ordered node ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Topology {
    depth: usize,
}

impl Topology {
    pub fn new(depth: usize) -> Self {
        assert!(depth >= 1 && depth < 32, "depth must be in 1..32");
        Topology { depth }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_internal(&self) -> usize {
        (1 << self.depth) - 1
    }

    pub fn n_leaves(&self) -> usize {
        1 << self.depth
    }

    pub fn internal_ids(&self) -> std::ops::Range<usize> {
        0..self.n_internal()
    }

    pub fn leaf_ids(&self) -> std::ops::Range<usize> {
        self.n_internal()..self.n_internal() + self.n_leaves()
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        node >= self.n_internal()
    }

    pub fn left_child(&self, node: usize) -> usize {
        2 * node + 1
    }

    pub fn right_child(&self, node: usize) -> usize {
        2 * node + 2
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        if node == 0 {
            None
        } else {
            Some((node - 1) / 2)
        }
    }

    /// Leaf id -> dense index in `0..2^k`.
    pub fn leaf_index(&self, leaf: usize) -> usize {
        debug_assert!(self.is_leaf(leaf));
        leaf - self.n_internal()
    }

    pub fn leaf_id(&self, leaf_index: usize) -> usize {
        self.n_internal() + leaf_index
    }

    /// Internal nodes on the root-to-leaf path, level-ordered (root first).
    pub fn path_internal(&self, leaf: usize) -> Vec<usize> {
        debug_assert!(self.is_leaf(leaf));
        let mut nodes = Vec::with_capacity(self.depth);
        let mut n = leaf;
        while let Some(p) = self.parent(n) {
            nodes.push(p);
            n = p;
        }
        nodes.reverse();
        nodes
    }

    /// Partition of the path's internal nodes into `(LC(l), RC(l))`:
    /// nodes whose left (resp. right) child lies on the path.
    pub fn left_right_nodes(&self, leaf: usize) -> (Vec<usize>, Vec<usize>) {
        let mut lc = Vec::new();
        let mut rc = Vec::new();
        let mut n = leaf;
        while let Some(p) = self.parent(n) {
            if self.left_child(p) == n {
                lc.push(p);
            } else {
                rc.push(p);
            }
            n = p;
        }
        lc.reverse();
        rc.reverse();
        (lc, rc)
    }

    /// True if the left child of `node` leads towards `leaf`.
    pub fn goes_left(&self, node: usize, leaf: usize) -> bool {
        let mut n = leaf;
        while let Some(p) = self.parent(n) {
            if p == node {
                return self.left_child(p) == n;
            }
            n = p;
        }
        panic!("node {node} not on path to leaf {leaf}");
    }
}

/// A leaf, one split per internal node on its root-to-leaf route
/// (level-ordered) and a predicted target. The splits along the route are
/// pairwise distinct.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionPath {
    pub leaf: usize,
    pub splits: Vec<Split>,
    pub target: usize,
}

impl DecisionPath {
    /// Build a path, checking the split-distinctness condition.
    pub fn new(topo: &Topology, leaf: usize, splits: Vec<Split>, target: usize) -> Result<Self> {
        if !topo.is_leaf(leaf) || leaf >= topo.leaf_ids().end {
            return Err(Error::InvalidPath(format!("{leaf} is not a leaf id")));
        }
        if splits.len() != topo.depth() {
            return Err(Error::InvalidPath(format!(
                "expected {} splits, got {}",
                topo.depth(),
                splits.len()
            )));
        }
        for i in 0..splits.len() {
            for j in i + 1..splits.len() {
                if splits[i] == splits[j] {
                    return Err(Error::InvalidPath(format!(
                        "splits at levels {i} and {j} coincide: {}",
                        splits[i]
                    )));
                }
            }
        }
        Ok(DecisionPath { leaf, splits, target })
    }

    /// `R^l(p)`: rows from `rows` that pass the `<=` test at every left-child
    /// node and fail it at every right-child node along the path.
    pub fn rows_reaching(&self, topo: &Topology, d: &Dataset, rows: &RowSet) -> RowSet {
        let mut out = rows.clone();
        let path = topo.path_internal(self.leaf);
        for (level, &node) in path.iter().enumerate() {
            let split = self.splits[level];
            let goes_left = topo.goes_left(node, self.leaf);
            let mut keep = RowSet::empty(rows.capacity());
            for r in out.iter() {
                if split.test(d.row(r)) == goes_left {
                    keep.insert(r);
                }
            }
            out = keep;
        }
        out
    }

    /// Same as [`rows_reaching`](Self::rows_reaching) but through a
    /// precomputed mask cache.
    pub fn rows_reaching_masked(&self, topo: &Topology, masks: &SplitMasks, rows: &RowSet) -> RowSet {
        let mut out = rows.clone();
        let path = topo.path_internal(self.leaf);
        for (level, &node) in path.iter().enumerate() {
            let mask = masks.mask(&self.splits[level]);
            if topo.goes_left(node, self.leaf) {
                out.intersect(mask);
            } else {
                out.subtract(mask);
            }
        }
        out
    }

    /// `CP(p)`: rows reaching the leaf whose true target matches the path's.
    pub fn correct_predictions(&self, topo: &Topology, d: &Dataset, rows: &RowSet) -> usize {
        self.rows_reaching(topo, d, rows)
            .iter()
            .filter(|&r| d.target(r) == self.target)
            .count()
    }
}

/// A depth-`k` univariate binary decision tree: one split per internal
/// node, one target per leaf. Along every root-to-leaf path the splits
/// are pairwise distinct.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    topo: Topology,
    splits: Vec<Split>,   // indexed by internal node id
    targets: Vec<usize>,  // indexed by leaf index
}

impl DecisionTree {
    pub fn new(topo: Topology, splits: Vec<Split>, targets: Vec<usize>) -> Result<Self> {
        if splits.len() != topo.n_internal() || targets.len() != topo.n_leaves() {
            return Err(Error::Dimension(format!(
                "need {} splits and {} targets, got {} and {}",
                topo.n_internal(),
                topo.n_leaves(),
                splits.len(),
                targets.len()
            )));
        }
        let tree = DecisionTree { topo, splits, targets };
        for leaf in topo.leaf_ids() {
            let path = tree.path_to(leaf);
            // reuse the distinctness validation in DecisionPath::new
            DecisionPath::new(&topo, leaf, path.splits, path.target)?;
        }
        Ok(tree)
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn depth(&self) -> usize {
        self.topo.depth()
    }

    pub fn split_at(&self, node: usize) -> Split {
        self.splits[node]
    }

    pub fn target_at(&self, leaf: usize) -> usize {
        self.targets[self.topo.leaf_index(leaf)]
    }

    /// Route one encoded row from the root to its unique leaf. Ties on the
    /// threshold (`v == mu`) go left.
    pub fn route_row(&self, row: &[f64]) -> usize {
        let mut node = 0;
        while !self.topo.is_leaf(node) {
            node = if self.splits[node].test(row) {
                self.topo.left_child(node)
            } else {
                self.topo.right_child(node)
            };
        }
        node
    }

    /// Fraction of `rows` predicted correctly. Errors on an empty row set.
    pub fn accuracy(&self, d: &Dataset, rows: &RowSet) -> Result<f64> {
        let total = rows.len();
        if total == 0 {
            return Err(Error::Invalid("accuracy over an empty row set".into()));
        }
        let mut correct = 0usize;
        for r in rows.iter() {
            let leaf = self.route_row(d.row(r));
            if self.target_at(leaf) == d.target(r) {
                correct += 1;
            }
        }
        Ok(correct as f64 / total as f64)
    }

    fn path_to(&self, leaf: usize) -> DecisionPath {
        let nodes = self.topo.path_internal(leaf);
        DecisionPath {
            leaf,
            splits: nodes.iter().map(|&j| self.splits[j]).collect(),
            target: self.target_at(leaf),
        }
    }

    /// The tree's `2^k` decision paths, one per leaf, in leaf order.
    pub fn paths(&self) -> Vec<DecisionPath> {
        self.topo.leaf_ids().map(|l| self.path_to(l)).collect()
    }

    /// Reassemble a tree from exactly one path per leaf, verifying pairwise
    /// agreement on shared internal nodes.
    pub fn from_paths(topo: Topology, paths: &[DecisionPath]) -> Result<Self> {
        if paths.len() != topo.n_leaves() {
            return Err(Error::Dimension(format!(
                "need {} paths, got {}",
                topo.n_leaves(),
                paths.len()
            )));
        }
        let mut seen = vec![false; topo.n_leaves()];
        let mut splits: Vec<Option<Split>> = vec![None; topo.n_internal()];
        let mut targets = vec![0usize; topo.n_leaves()];
        for p in paths {
            if !topo.is_leaf(p.leaf) || p.leaf >= topo.leaf_ids().end {
                return Err(Error::InvalidPath(format!("{} is not a leaf id", p.leaf)));
            }
            let li = topo.leaf_index(p.leaf);
            if seen[li] {
                return Err(Error::InvalidPath(format!("two paths for leaf {}", p.leaf)));
            }
            seen[li] = true;
            targets[li] = p.target;
            for (level, &node) in topo.path_internal(p.leaf).iter().enumerate() {
                match splits[node] {
                    None => splits[node] = Some(p.splits[level]),
                    Some(existing) if existing == p.splits[level] => {}
                    Some(existing) => {
                        return Err(Error::PathDisagreement {
                            node,
                            left: existing,
                            right: p.splits[level],
                        })
                    }
                }
            }
        }
        let splits = splits
            .into_iter()
            .map(|s| s.expect("every internal node lies on some leaf path"))
            .collect();
        DecisionTree::new(topo, splits, targets)
    }

    /// Serialize to the model file format: JSON with fixed field order and
    /// reals printed with 17 significant digits so the roundtrip is exact.
    pub fn to_model_json(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{{\"depth\":{},\"nodes\":[", self.depth()));
        for node in self.topo.internal_ids() {
            if node > 0 {
                out.push(',');
            }
            let s = self.splits[node];
            out.push_str(&format!(
                "{{\"id\":{},\"feature\":{},\"threshold\":{:.16e}}}",
                node, s.feature, s.threshold
            ));
        }
        out.push_str("],\"leaves\":[");
        for leaf in self.topo.leaf_ids() {
            if leaf > self.topo.leaf_ids().start {
                out.push(',');
            }
            out.push_str(&format!("{{\"id\":{},\"target\":{}}}", leaf, self.target_at(leaf)));
        }
        out.push_str("]}");
        out
    }

    pub fn from_model_json(text: &str) -> Result<Self> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        let depth = v["depth"]
            .as_u64()
            .ok_or_else(|| Error::ModelFormat("missing depth".into()))? as usize;
        let topo = Topology::new(depth);
        let nodes = v["nodes"]
            .as_array()
            .ok_or_else(|| Error::ModelFormat("missing nodes".into()))?;
        let leaves = v["leaves"]
            .as_array()
            .ok_or_else(|| Error::ModelFormat("missing leaves".into()))?;
        let mut splits = vec![Split::new(0, 0.0); topo.n_internal()];
        let mut seen_nodes = vec![false; topo.n_internal()];
        for n in nodes {
            let id = n["id"].as_u64().ok_or_else(|| Error::ModelFormat("node id".into()))? as usize;
            if id >= topo.n_internal() {
                return Err(Error::ModelFormat(format!("node id {id} out of range")));
            }
            splits[id] = Split::new(
                n["feature"].as_u64().ok_or_else(|| Error::ModelFormat("feature".into()))? as usize,
                n["threshold"]
                    .as_f64()
                    .ok_or_else(|| Error::ModelFormat("threshold".into()))?,
            );
            seen_nodes[id] = true;
        }
        if !seen_nodes.iter().all(|&s| s) {
            return Err(Error::ModelFormat("missing internal node entries".into()));
        }
        let mut targets = vec![0usize; topo.n_leaves()];
        let mut seen_leaves = vec![false; topo.n_leaves()];
        for l in leaves {
            let id = l["id"].as_u64().ok_or_else(|| Error::ModelFormat("leaf id".into()))? as usize;
            if id < topo.n_internal() || id >= topo.leaf_ids().end {
                return Err(Error::ModelFormat(format!("leaf id {id} out of range")));
            }
            targets[topo.leaf_index(id)] =
                l["target"].as_u64().ok_or_else(|| Error::ModelFormat("target".into()))? as usize;
            seen_leaves[topo.leaf_index(id)] = true;
        }
        if !seen_leaves.iter().all(|&s| s) {
            return Err(Error::ModelFormat("missing leaf entries".into()));
        }
        DecisionTree::new(topo, splits, targets)
    }
}

/// Precomputed per-split row masks: bit `r` of `mask(s)` is set iff row `r`
/// of the dataset satisfies `s`. Built once per restricted split universe.
#[derive(Clone, Debug)]
pub struct SplitMasks {
    map: HashMap<Split, RowSet>,
    nbits: usize,
}

impl SplitMasks {
    pub fn build<I: IntoIterator<Item = Split>>(d: &Dataset, splits: I) -> Self {
        let nbits = d.n_rows();
        let mut map = HashMap::new();
        for s in splits {
            map.entry(s).or_insert_with(|| {
                let mut m = RowSet::empty(nbits);
                for r in 0..nbits {
                    if s.test(d.row(r)) {
                        m.insert(r);
                    }
                }
                m
            });
        }
        SplitMasks { map, nbits }
    }

    pub fn mask(&self, s: &Split) -> &RowSet {
        self.map
            .get(s)
            .unwrap_or_else(|| panic!("mask requested for unknown split {s}"))
    }

    pub fn contains(&self, s: &Split) -> bool {
        self.map.contains_key(s)
    }

    pub fn n_rows(&self) -> usize {
        self.nbits
    }
}
