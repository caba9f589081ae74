//! Threshold sampling: harvest restricted per-node split sets and
//! warm-start columns from repeated CART runs on subsamples.
//!
//! Each iteration draws a uniform subsample of the training rows, grows a
//! depth-capped CART tree and records which split appeared at which node
//! position. The loop stops once the root split has failed to be new for
//! a full stall window. Per node, the highest-frequency splits survive,
//! always joined by the split the full-data CART chose there; the
//! full-data CART's decision paths become the master's warm start.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cart::{self, CartParams, CartTree};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tree::{DecisionPath, DecisionTree, RowSet, Split, Topology};

/// Parameters of the sampling loop.
#[derive(Clone, Debug)]
pub struct SamplingParams {
    /// Subsample fraction per iteration.
    pub alpha: f64,
    /// Stall threshold: consecutive iterations whose root split was
    /// already known before the loop exits.
    pub tau: usize,
    /// Per-internal-node retention counts.
    pub q: Vec<usize>,
    pub seed: u64,
}

impl SamplingParams {
    pub fn defaults(depth: usize, seed: u64) -> Self {
        SamplingParams {
            alpha: 0.9,
            tau: 300,
            q: default_q(depth),
            seed,
        }
    }

    fn validate(&self, depth: usize) -> Result<()> {
        let n_int = Topology::new(depth).n_internal();
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Invalid("alpha must lie in (0, 1]".into()));
        }
        if self.tau == 0 {
            return Err(Error::Invalid("tau must be >= 1".into()));
        }
        if self.q.len() != n_int {
            return Err(Error::Invalid(format!(
                "q must have one entry per internal node ({n_int}), got {}",
                self.q.len()
            )));
        }
        if self.q.iter().any(|&q| q == 0) {
            return Err(Error::Invalid("every q_j must be >= 1".into()));
        }
        Ok(())
    }
}

/// Retention counts: `floor(150/|N_int|)` at the root, `floor(100/|N_int|)`
/// elsewhere.
pub fn default_q(depth: usize) -> Vec<usize> {
    let n_int = Topology::new(depth).n_internal();
    let mut q = vec![(100 / n_int).max(1); n_int];
    q[0] = (150 / n_int).max(1);
    q
}

/// Observation counts `w_(j,a)` accumulated over the sampling loop.
#[derive(Clone, Debug, Default)]
pub struct SplitFrequencies {
    counts: HashMap<(usize, Split), u64>,
}

impl SplitFrequencies {
    pub fn count(&self, node: usize, split: &Split) -> u64 {
        self.counts.get(&(node, *split)).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Split, u64)> + '_ {
        self.counts.iter().map(|(&(j, s), &c)| (j, s, c))
    }

    fn bump(&mut self, node: usize, split: Split) {
        *self.counts.entry((node, split)).or_insert(0) += 1;
    }
}

/// Per-internal-node restricted split sets `S_j`, each sorted ascending by
/// (feature, threshold) and nonempty.
#[derive(Clone, Debug, PartialEq)]
pub struct RestrictedSplits {
    depth: usize,
    per_node: Vec<Vec<Split>>,
}

impl RestrictedSplits {
    pub fn new(depth: usize, per_node: Vec<Vec<Split>>) -> Result<Self> {
        let topo = Topology::new(depth);
        if per_node.len() != topo.n_internal() {
            return Err(Error::Invalid(format!(
                "expected {} split sets, got {}",
                topo.n_internal(),
                per_node.len()
            )));
        }
        let mut per_node = per_node;
        for (j, s) in per_node.iter_mut().enumerate() {
            if s.is_empty() {
                return Err(Error::Invalid(format!("S_{j} must be nonempty")));
            }
            s.sort();
            s.dedup();
        }
        Ok(RestrictedSplits { depth, per_node })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn topology(&self) -> Topology {
        Topology::new(self.depth)
    }

    pub fn splits_at(&self, node: usize) -> &[Split] {
        &self.per_node[node]
    }

    pub fn contains(&self, node: usize, split: &Split) -> bool {
        self.per_node[node].binary_search(split).is_ok()
    }

    /// All distinct splits across nodes.
    pub fn universe(&self) -> Vec<Split> {
        let set: BTreeSet<Split> = self.per_node.iter().flatten().copied().collect();
        set.into_iter().collect()
    }

    /// Number of split-tuple candidates for the path to each leaf.
    pub fn tuples_per_leaf(&self, leaf: usize) -> u128 {
        let topo = self.topology();
        topo.path_internal(leaf)
            .iter()
            .map(|&j| self.per_node[j].len() as u128)
            .product()
    }
}

/// Everything the sampling phase hands to the master: restricted sets,
/// the warm-start tree (aligned full-data CART) and the raw frequency log.
#[derive(Clone, Debug)]
pub struct SamplingOutput {
    pub restricted: RestrictedSplits,
    pub warm_tree: DecisionTree,
    pub full_cart: CartTree,
    pub frequencies: SplitFrequencies,
    /// Total sampling iterations the stall rule allowed.
    pub iterations: usize,
}

impl SamplingOutput {
    pub fn warm_paths(&self) -> Vec<DecisionPath> {
        self.warm_tree.paths()
    }

    /// Text dump: one line per (node, feature, threshold, frequency).
    pub fn dump_splits(&self) -> String {
        let mut out = String::new();
        for (j, splits) in self.restricted.per_node.iter().enumerate() {
            for s in splits {
                out.push_str(&format!(
                    "{}\t{}\t{:.16e}\t{}\n",
                    j,
                    s.feature,
                    s.threshold,
                    self.frequencies.count(j, s)
                ));
            }
        }
        out
    }
}

/// Run the sampling loop and construct the restricted sets plus warm start.
pub fn run_threshold_sampling(
    d: &Dataset,
    train: &RowSet,
    depth: usize,
    params: &SamplingParams,
) -> Result<SamplingOutput> {
    params.validate(depth)?;
    let n_train = train.len();
    if n_train == 0 {
        return Err(Error::Invalid("no training rows".into()));
    }
    let topo = Topology::new(depth);
    let n_sub = ((params.alpha * n_train as f64).ceil() as usize).clamp(1, n_train);
    let cart_params = CartParams::with_depth(depth);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut seen: Vec<BTreeSet<Split>> = vec![BTreeSet::new(); topo.n_internal()];
    let mut freqs = SplitFrequencies::default();
    let train_indices = train.indices();
    let mut stall = 0usize;
    let mut iterations = 0usize;

    while stall < params.tau {
        iterations += 1;
        let mut pool = train_indices.clone();
        let (chosen, _) = pool.partial_shuffle(&mut rng, n_sub);
        let sub = RowSet::from_indices(d.n_rows(), chosen);
        let tree = cart::build(d, &sub, &cart_params)?;
        let root_known = match tree.root().split {
            Some(s) => seen[0].contains(&s),
            // a pure subsample yields no root split and cannot be new
            None => true,
        };
        for (heap_pos, split) in tree.splits_by_heap_pos() {
            freqs.bump(heap_pos, split);
            seen[heap_pos].insert(split);
        }
        stall = if root_known { stall + 1 } else { 0 };
    }

    let full_cart = cart::build(d, train, &cart_params)?;
    let full_splits = full_cart.splits_by_heap_pos();

    let mut per_node: Vec<Vec<Split>> = Vec::with_capacity(topo.n_internal());
    for j in topo.internal_ids() {
        let mut ranked: Vec<(u64, Split)> = seen[j]
            .iter()
            .map(|s| (freqs.count(j, s), *s))
            .collect();
        // highest frequency first, ties by ascending (feature, threshold)
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let mut kept: Vec<Split> = ranked.iter().take(params.q[j]).map(|&(_, s)| s).collect();
        if let Some(s) = full_splits.get(&j) {
            if !kept.contains(s) {
                kept.push(*s);
            }
        }
        // warm-start padding needs a split distinct from up to `depth`
        // path ancestors at every node, so top sparse sets up to depth+1
        // candidates from the global ranking
        let min_needed = depth + 1;
        if kept.len() < min_needed {
            for s in fallback_splits(&freqs, d, train, min_needed + kept.len()) {
                if kept.len() >= min_needed {
                    break;
                }
                if !kept.contains(&s) {
                    kept.push(s);
                }
            }
        }
        if kept.is_empty() {
            return Err(Error::Invalid(format!(
                "no candidate splits available for node {j}"
            )));
        }
        per_node.push(kept);
    }
    let restricted = RestrictedSplits::new(depth, per_node)?;
    let warm_tree = align_cart_to_topology(&full_cart, depth, &restricted)?;

    Ok(SamplingOutput {
        restricted,
        warm_tree,
        full_cart,
        frequencies: freqs,
        iterations,
    })
}

/// Candidates for a node position no sampled tree ever reached: globally
/// frequent splits first, observed values as a last resort.
fn fallback_splits(freqs: &SplitFrequencies, d: &Dataset, train: &RowSet, want: usize) -> Vec<Split> {
    let mut global: BTreeMap<Split, u64> = BTreeMap::new();
    for (_, s, c) in freqs.iter() {
        *global.entry(s).or_insert(0) += c;
    }
    let mut ranked: Vec<(u64, Split)> = global.into_iter().map(|(s, c)| (c, s)).collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let mut out: Vec<Split> = ranked.into_iter().take(want).map(|(_, s)| s).collect();
    if out.len() < want {
        'scan: for f in 0..d.n_features() {
            let mut values: Vec<f64> = train.iter().map(|r| d.value(r, f)).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for v in values {
                let s = Split::new(f, v);
                if !out.contains(&s) {
                    out.push(s);
                    if out.len() >= want {
                        break 'scan;
                    }
                }
            }
        }
    }
    out
}

/// Embed a possibly-shallow CART tree into the full depth-`k` topology.
///
/// Present nodes keep their splits. Where CART stopped early, nodes are
/// padded with the lowest-index split from `S_j` that keeps the splits
/// along the path distinct, and every leaf below predicts the stopped
/// node's majority target, so training accuracy is preserved exactly.
pub fn align_cart_to_topology(
    c: &CartTree,
    depth: usize,
    restricted: &RestrictedSplits,
) -> Result<DecisionTree> {
    if c.depth() > depth {
        return Err(Error::Invalid(format!(
            "CART depth {} exceeds target depth {depth}",
            c.depth()
        )));
    }
    let topo = Topology::new(depth);

    struct Rec<'a> {
        c: &'a CartTree,
        topo: Topology,
        restricted: &'a RestrictedSplits,
        splits: Vec<Option<Split>>,
        targets: Vec<usize>,
    }

    impl Rec<'_> {
        fn go(
            &mut self,
            cart_node: Option<usize>,
            heap_pos: usize,
            majority: usize,
            path: &mut Vec<Split>,
        ) -> Result<()> {
            if self.topo.is_leaf(heap_pos) {
                let m = cart_node.map_or(majority, |i| self.c.nodes()[i].majority);
                self.targets[self.topo.leaf_index(heap_pos)] = m;
                return Ok(());
            }
            let node = cart_node.map(|i| &self.c.nodes()[i]);
            let majority = node.map_or(majority, |n| n.majority);
            let (split, children) = match node.and_then(|n| n.split.zip(n.children)) {
                Some((s, (l, r))) => (s, Some((l, r))),
                None => {
                    let pad = self
                        .restricted
                        .splits_at(heap_pos)
                        .iter()
                        .find(|s| !path.contains(s))
                        .copied()
                        .ok_or(Error::PaddingExhausted { node: heap_pos })?;
                    (pad, None)
                }
            };
            self.splits[heap_pos] = Some(split);
            path.push(split);
            let (lc, rc) = match children {
                Some((l, r)) => (Some(l), Some(r)),
                None => (None, None),
            };
            self.go(lc, self.topo.left_child(heap_pos), majority, path)?;
            self.go(rc, self.topo.right_child(heap_pos), majority, path)?;
            path.pop();
            Ok(())
        }
    }

    let mut rec = Rec {
        c,
        topo,
        restricted,
        splits: vec![None; topo.n_internal()],
        targets: vec![0usize; topo.n_leaves()],
    };
    let root_majority = c.root().majority;
    rec.go(Some(0), 0, root_majority, &mut Vec::new())?;
    let splits = rec
        .splits
        .into_iter()
        .map(|s| s.expect("all internal nodes visited"))
        .collect();
    DecisionTree::new(topo, splits, rec.targets)
}
