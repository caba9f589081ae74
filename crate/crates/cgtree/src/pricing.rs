//! Pricing: find decision paths whose reduced cost against the master's
//! duals is positive.
//!
//! The reduced cost of a path `p` ending in leaf `l` with target `t` is
//!
//! ```text
//! CP(p) - alpha_l - sum_{j on path} gamma_{l,j,s(j)} - sum_{r in R^l(p)} beta_r
//! ```
//!
//! Three generators are provided: a randomized constructor that keeps a
//! bounded pool of candidate columns, an exact enumerator over the
//! restricted split tuples of each (leaf, target) subproblem, and a MILP
//! formulation of the same subproblem. The exact routes certify LP
//! optimality when no subproblem prices positive.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::master::{Column, ColumnKey, DualValues, MasterModel};
use crate::sampling::RestrictedSplits;
use crate::solver::{solve_milp_with, LinearProgram, MilpSpec, MilpStatus};
use crate::tree::{DecisionPath, RowSet, Split, SplitMasks, Topology};

/// Positive-reduced-cost certification threshold.
pub const PRICE_TOL: f64 = 1e-6;

const LEAF_WEIGHT_FLOOR: f64 = 1e-3;

/// Read-only snapshot everything in this module prices against.
pub struct PricingContext<'m, 'a> {
    master: &'m MasterModel<'a>,
    duals: &'m DualValues,
    topo: Topology,
}

impl<'m, 'a> PricingContext<'m, 'a> {
    pub fn new(master: &'m MasterModel<'a>, duals: &'m DualValues) -> Self {
        let topo = *master.index().topology();
        PricingContext { master, duals, topo }
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn n_classes(&self) -> usize {
        self.master.dataset().n_classes()
    }

    fn alpha(&self, leaf: usize) -> f64 {
        self.duals.alpha[self.topo.leaf_index(leaf)]
    }

    fn gamma(&self, leaf: usize, node: usize, split: &Split) -> Result<f64> {
        let idx = self
            .master
            .index()
            .gamma_index(self.master.restricted(), leaf, node, split)?;
        Ok(self.duals.gamma[idx])
    }

    fn beta_sum(&self, rows: &RowSet) -> f64 {
        rows.iter().map(|r| self.duals.beta[r]).sum()
    }

    /// Rows from the training set that follow `splits` to `leaf`.
    fn rows_for(&self, leaf: usize, splits: &[Split]) -> RowSet {
        let mut mask = self.master.train_rows().clone();
        for (level, &node) in self.topo.path_internal(leaf).iter().enumerate() {
            let split_mask = self.master.masks().mask(&splits[level]);
            if self.topo.goes_left(node, leaf) {
                mask.intersect(split_mask);
            } else {
                mask.subtract(split_mask);
            }
        }
        mask
    }

    /// Exact reduced cost of a path under the snapshot duals.
    pub fn reduced_cost_of(&self, path: &DecisionPath) -> Result<f64> {
        let rows = self.rows_for(path.leaf, &path.splits);
        let cp = rows.intersection_len(&self.master.class_masks()[path.target]);
        self.reduced_cost_from_parts(path, cp, &rows)
    }

    fn reduced_cost_from_parts(&self, path: &DecisionPath, cp: usize, rows: &RowSet) -> Result<f64> {
        let mut gamma_sum = 0.0;
        for (level, &node) in self.topo.path_internal(path.leaf).iter().enumerate() {
            gamma_sum += self.gamma(path.leaf, node, &path.splits[level])?;
        }
        Ok(cp as f64 - self.alpha(path.leaf) - gamma_sum - self.beta_sum(rows))
    }

    /// Package a path with its rows, count and exact reduced cost.
    pub fn priced(&self, path: DecisionPath) -> Result<PricedPath> {
        let rows = self.rows_for(path.leaf, &path.splits);
        let cp = rows.intersection_len(&self.master.class_masks()[path.target]);
        let reduced_cost = self.reduced_cost_from_parts(&path, cp, &rows)?;
        Ok(PricedPath {
            column: Column { path, cp, rows },
            reduced_cost,
        })
    }
}

/// A candidate column together with its reduced cost under the duals it
/// was priced against.
#[derive(Clone, Debug)]
pub struct PricedPath {
    pub column: Column,
    pub reduced_cost: f64,
}

/// Knobs of the randomized constructor.
#[derive(Clone, Debug)]
pub struct HeuristicParams {
    /// Fixed capacity of the candidate pool.
    pub pool_capacity: usize,
    /// Leaf draws per invocation.
    pub n_leaf_draws: usize,
    /// Columns emitted per invocation.
    pub n_emit: usize,
    /// Consecutive empty invocations before the caller switches to exact
    /// pricing.
    pub failure_threshold: usize,
}

impl Default for HeuristicParams {
    fn default() -> Self {
        HeuristicParams {
            pool_capacity: 500,
            n_leaf_draws: 200,
            n_emit: 100,
            failure_threshold: 3,
        }
    }
}

/// Pool, per-leaf selection weights and failure counter of the randomized
/// pricer. Persists across CG iterations.
pub struct HeuristicState {
    params: HeuristicParams,
    pool: Vec<PricedPath>,
    pool_keys: HashMap<ColumnKey, usize>,
    weights: Vec<f64>,
    consecutive_failures: usize,
    rng: ChaCha8Rng,
}

impl HeuristicState {
    pub fn new(n_leaves: usize, params: HeuristicParams, seed: u64) -> Self {
        HeuristicState {
            params,
            pool: Vec::new(),
            pool_keys: HashMap::new(),
            weights: vec![1.0; n_leaves],
            consecutive_failures: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn pool_len(&self) -> usize {
        self.pool.len()
    }

    pub fn pool_capacity(&self) -> usize {
        self.params.pool_capacity
    }

    /// Smallest reduced cost currently held in the pool.
    pub fn pool_min_reduced_cost(&self) -> Option<f64> {
        self.pool
            .iter()
            .map(|p| p.reduced_cost)
            .min_by(f64::total_cmp)
    }

    pub fn consecutive_failures(&self) -> usize {
        self.consecutive_failures
    }

    pub fn failure_threshold(&self) -> usize {
        self.params.failure_threshold
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Clear the pool and prioritize leaves by the best reduced cost an
    /// exact round found there.
    pub fn clear_and_reweight(&mut self, best_rc_per_leaf: &[f64]) {
        self.pool.clear();
        self.pool_keys.clear();
        for (w, &rc) in self.weights.iter_mut().zip(best_rc_per_leaf) {
            *w = rc.max(LEAF_WEIGHT_FLOOR);
        }
        self.consecutive_failures = 0;
    }

    fn draw_leaf(&mut self, topo: &Topology) -> usize {
        let total: f64 = self.weights.iter().sum();
        let mut ticket = self.rng.gen_range(0.0..total);
        for (i, &w) in self.weights.iter().enumerate() {
            if ticket < w {
                return topo.leaf_id(i);
            }
            ticket -= w;
        }
        topo.leaf_id(self.weights.len() - 1)
    }

    /// One randomized pricing round: draw leaves with replacement (weighted),
    /// build a random distinct split tuple per draw, pick each tuple's best
    /// target, merge into the pool and emit the highest positive reduced
    /// costs. An empty emission bumps the failure counter.
    pub fn generate(&mut self, ctx: &PricingContext<'_, '_>) -> Result<Vec<PricedPath>> {
        let topo = *ctx.topology();
        let restricted = ctx.master.restricted();
        // refresh pooled reduced costs against the current duals
        for entry in &mut self.pool {
            entry.reduced_cost = ctx.reduced_cost_from_parts(
                &entry.column.path,
                entry.column.cp,
                &entry.column.rows,
            )?;
        }

        for _ in 0..self.params.n_leaf_draws {
            let leaf = self.draw_leaf(&topo);
            let nodes = topo.path_internal(leaf);
            // uniform split per node, rejecting non-distinct combinations
            let mut splits: Option<Vec<Split>> = None;
            'attempt: for _ in 0..20 {
                let mut tuple = Vec::with_capacity(nodes.len());
                for &node in &nodes {
                    let s = restricted.splits_at(node);
                    tuple.push(s[self.rng.gen_range(0..s.len())]);
                }
                for i in 0..tuple.len() {
                    for j in i + 1..tuple.len() {
                        if tuple[i] == tuple[j] {
                            continue 'attempt;
                        }
                    }
                }
                splits = Some(tuple);
                break;
            }
            let Some(splits) = splits else { continue };
            let rows = ctx.rows_for(leaf, &splits);
            // only CP depends on the target, so the best target maximizes
            // it; ties go to the lowest class id
            let mut best_t = 0usize;
            let mut best_cp = 0usize;
            for (t, mask) in ctx.master.class_masks().iter().enumerate() {
                let cp = rows.intersection_len(mask);
                if cp > best_cp {
                    best_cp = cp;
                    best_t = t;
                }
            }
            let path = DecisionPath::new(&topo, leaf, splits, best_t)?;
            let key = ColumnKey::of_path(&path);
            if self.pool_keys.contains_key(&key) {
                continue;
            }
            let reduced_cost = ctx.reduced_cost_from_parts(&path, best_cp, &rows)?;
            self.pool_keys.insert(key, self.pool.len());
            self.pool.push(PricedPath {
                column: Column {
                    path,
                    cp: best_cp,
                    rows,
                },
                reduced_cost,
            });
        }

        // highest reduced cost first, deterministic tie order
        self.pool.sort_by(|a, b| {
            b.reduced_cost
                .total_cmp(&a.reduced_cost)
                .then_with(|| ColumnKey::of_path(&a.column.path).cmp(&ColumnKey::of_path(&b.column.path)))
        });
        let emitted: Vec<PricedPath> = self
            .pool
            .iter()
            .take(self.params.n_emit)
            .filter(|p| p.reduced_cost > PRICE_TOL)
            .cloned()
            .collect();
        // evict the lowest reduced costs to restore capacity
        if self.pool.len() > self.params.pool_capacity {
            self.pool.truncate(self.params.pool_capacity);
        }
        self.pool_keys = self
            .pool
            .iter()
            .enumerate()
            .map(|(i, p)| (p.column.key(), i))
            .collect();

        if emitted.is_empty() {
            self.consecutive_failures += 1;
        } else {
            self.consecutive_failures = 0;
            // leaves that produced a positive column keep priority
            let mut hot = vec![false; self.weights.len()];
            for p in &emitted {
                hot[topo.leaf_index(p.column.path.leaf)] = true;
            }
            for (w, h) in self.weights.iter_mut().zip(hot) {
                *w = if h { 1.0 } else { LEAF_WEIGHT_FLOOR };
            }
        }
        Ok(emitted)
    }
}

/// Best path for one (leaf, target) subproblem.
#[derive(Clone, Debug)]
pub struct SubproblemBest {
    pub leaf: usize,
    pub target: usize,
    pub best: Option<PricedPath>,
    /// False when a solver limit stopped the search before optimality.
    pub proven: bool,
}

/// Exact subproblem optimum by enumeration over all distinct split tuples
/// on the leaf's path; ties go to the lexicographically smallest tuple.
pub fn exact_enumerate(
    ctx: &PricingContext<'_, '_>,
    leaf: usize,
    target: usize,
) -> Result<Option<PricedPath>> {
    let per_target = enumerate_leaf(ctx, leaf)?;
    Ok(per_target.into_iter().nth(target).flatten())
}

/// One DFS over the leaf's split tuples, collecting the best tuple per
/// target simultaneously. Prefix row masks are shared down the recursion.
fn enumerate_leaf(ctx: &PricingContext<'_, '_>, leaf: usize) -> Result<Vec<Option<PricedPath>>> {
    let topo = *ctx.topology();
    let nodes = topo.path_internal(leaf);
    let goes_left: Vec<bool> = nodes.iter().map(|&j| topo.goes_left(j, leaf)).collect();
    let mut best: Vec<Option<(f64, Vec<Split>, usize, RowSet)>> = vec![None; ctx.n_classes()];

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        ctx: &PricingContext<'_, '_>,
        leaf: usize,
        nodes: &[usize],
        goes_left: &[bool],
        restricted: &RestrictedSplits,
        masks: &SplitMasks,
        class_masks: &[RowSet],
        alpha: f64,
        level: usize,
        chosen: &mut Vec<Split>,
        gamma_sum: f64,
        mask: &RowSet,
        best: &mut [Option<(f64, Vec<Split>, usize, RowSet)>],
    ) -> Result<()> {
        if level == nodes.len() {
            let beta_sum = ctx.beta_sum(mask);
            for (t, slot) in best.iter_mut().enumerate() {
                let cp = mask.intersection_len(&class_masks[t]);
                let rc = cp as f64 - alpha - gamma_sum - beta_sum;
                // strictly-greater keeps the first (lexicographically
                // smallest) tuple on ties
                if slot.as_ref().is_none_or(|(b, ..)| rc > *b + 1e-12) {
                    *slot = Some((rc, chosen.clone(), cp, mask.clone()));
                }
            }
            return Ok(());
        }
        let node = nodes[level];
        for split in restricted.splits_at(node) {
            if chosen.contains(split) {
                continue;
            }
            let g = ctx.gamma(leaf, node, split)?;
            let split_mask = masks.mask(split);
            let next_mask = if goes_left[level] {
                mask.and(split_mask)
            } else {
                mask.and_not(split_mask)
            };
            chosen.push(*split);
            dfs(
                ctx, leaf, nodes, goes_left, restricted, masks, class_masks, alpha,
                level + 1, chosen, gamma_sum + g, &next_mask, best,
            )?;
            chosen.pop();
        }
        Ok(())
    }

    let train = ctx.master.train_rows().clone();
    dfs(
        ctx,
        leaf,
        &nodes,
        &goes_left,
        ctx.master.restricted(),
        ctx.master.masks(),
        ctx.master.class_masks(),
        ctx.alpha(leaf),
        0,
        &mut Vec::new(),
        0.0,
        &train,
        &mut best,
    )?;
    best.into_iter()
        .enumerate()
        .map(|(t, b)| {
            b.map(|(rc, splits, cp, rows)| {
                let path = DecisionPath::new(&topo, leaf, splits, t)?;
                Ok(PricedPath {
                    column: Column { path, cp, rows },
                    reduced_cost: rc,
                })
            })
            .transpose()
        })
        .collect()
}

/// Exact subproblem optimum through the MILP formulation: binary
/// split-choice variables `u`, relaxed reach indicators `y`, one-split-per-
/// node rows, routing-consistency rows, a per-row lower bound and split-
/// distinctness rows.
pub fn milp_price(
    ctx: &PricingContext<'_, '_>,
    leaf: usize,
    target: usize,
    time_limit: Option<Duration>,
) -> Result<SubproblemBest> {
    let topo = *ctx.topology();
    let restricted = ctx.master.restricted();
    let d = ctx.master.dataset();
    let train_rows: Vec<usize> = ctx.master.train_rows().indices();
    let n = train_rows.len();
    let nodes = topo.path_internal(leaf);
    let k = nodes.len();
    let goes_left: Vec<bool> = nodes.iter().map(|&j| topo.goes_left(j, leaf)).collect();

    // row layout: one-split-per-node | per (node, row) routing caps |
    // per-row lower bounds | distinctness for splits shared by nodes
    let route_row_base = k;
    let lb_row_base = route_row_base + k * n;
    let duplicated: Vec<Split> = {
        let mut counts: HashMap<Split, usize> = HashMap::new();
        for &j in &nodes {
            for s in restricted.splits_at(j) {
                *counts.entry(*s).or_insert(0) += 1;
            }
        }
        let mut dups: Vec<Split> = counts
            .into_iter()
            .filter_map(|(s, c)| (c > 1).then_some(s))
            .collect();
        dups.sort();
        dups
    };
    let dup_row_base = lb_row_base + n;

    let mut rhs = vec![0.0; dup_row_base + duplicated.len()];
    for r in rhs.iter_mut().take(k) {
        *r = 1.0;
    }
    for i in 0..n {
        rhs[lb_row_base + i] = (k - 1) as f64;
    }
    for i in 0..duplicated.len() {
        rhs[dup_row_base + i] = 1.0;
    }
    let mut program = LinearProgram::new(rhs)?;

    let mut u_vars: Vec<Vec<usize>> = Vec::with_capacity(k);
    for (level, &node) in nodes.iter().enumerate() {
        let mut vars = Vec::new();
        for split in restricted.splits_at(node) {
            let gamma = ctx.gamma(leaf, node, split)?;
            let split_mask = ctx.master.masks().mask(split);
            let mut entries: Vec<(usize, f64)> = vec![(level, 1.0)];
            for (i, &r) in train_rows.iter().enumerate() {
                // the row passes this node iff its test outcome matches
                // the branch direction
                if split_mask.contains(r) == goes_left[level] {
                    entries.push((route_row_base + level * n + i, -1.0));
                    entries.push((lb_row_base + i, 1.0));
                }
            }
            if let Ok(pos) = duplicated.binary_search(split) {
                entries.push((dup_row_base + pos, 1.0));
            }
            vars.push(program.add_variable(-gamma, &entries, 1.0)?);
        }
        u_vars.push(vars);
    }
    // reach indicators, relaxed to y >= 0
    for (i, &r) in train_rows.iter().enumerate() {
        let coeff = f64::from(d.target(r) == target) - ctx.duals.beta[r];
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        for level in 0..k {
            entries.push((route_row_base + level * n + i, 1.0));
        }
        entries.push((lb_row_base + i, -1.0));
        program.add_variable(coeff, &entries, f64::INFINITY)?;
    }
    // slacks for the three <= families
    for level in 0..k {
        for i in 0..n {
            program.add_variable(0.0, &[(route_row_base + level * n + i, 1.0)], f64::INFINITY)?;
        }
    }
    for i in 0..n {
        program.add_variable(0.0, &[(lb_row_base + i, 1.0)], f64::INFINITY)?;
    }
    for i in 0..duplicated.len() {
        program.add_variable(0.0, &[(dup_row_base + i, 1.0)], f64::INFINITY)?;
    }

    let mut spec = MilpSpec::new(program, u_vars.iter().flatten().copied().collect());
    spec.time_limit = time_limit;
    let sol = solve_milp_with(&spec, ctx.master.config())?;
    match sol.status {
        MilpStatus::Infeasible => Ok(SubproblemBest {
            leaf,
            target,
            best: None,
            proven: true,
        }),
        status => {
            let Some(x) = sol.primal else {
                // limit hit before any feasible assignment was found
                return Ok(SubproblemBest {
                    leaf,
                    target,
                    best: None,
                    proven: false,
                });
            };
            let mut splits = Vec::with_capacity(k);
            for (level, &node) in nodes.iter().enumerate() {
                let s_j = restricted.splits_at(node);
                let chosen = (0..s_j.len())
                    .find(|&si| x[u_vars[level][si]] > 0.5)
                    .ok_or_else(|| Error::Invalid("milp chose no split at a node".into()))?;
                splits.push(s_j[chosen]);
            }
            let path = DecisionPath::new(&topo, leaf, splits, target)?;
            // keep the exact recomputed reduced cost, not the LP objective
            let priced = ctx.priced(path)?;
            debug_assert!(
                (sol.objective - ctx.alpha(leaf) - priced.reduced_cost).abs() <= 1e-6,
                "milp objective {} (minus alpha {}) disagrees with recomputed {}",
                sol.objective,
                ctx.alpha(leaf),
                priced.reduced_cost
            );
            Ok(SubproblemBest {
                leaf,
                target,
                best: Some(priced),
                proven: status == MilpStatus::Optimal,
            })
        }
    }
}

/// Which exact engine certifies subproblem optimality.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExactEngine {
    Enumerate,
    Milp,
}

/// Outcome of one exact pricing sweep over all (leaf, target) subproblems.
#[derive(Debug)]
pub struct ExactRound {
    pub subproblems: Vec<SubproblemBest>,
    pub timed_out: bool,
}

impl ExactRound {
    /// Maximum reduced cost over all solved subproblems.
    pub fn max_reduced_cost(&self) -> f64 {
        self.subproblems
            .iter()
            .filter_map(|s| s.best.as_ref().map(|p| p.reduced_cost))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// The master LP is proven optimal: the sweep completed, every
    /// subproblem was solved to optimality, and none priced positive.
    pub fn certifies_optimality(&self) -> bool {
        !self.timed_out
            && self.subproblems.iter().all(|s| s.proven)
            && self.max_reduced_cost() <= PRICE_TOL
    }

    /// Positive columns to install, best-first.
    pub fn positive_columns(&self) -> Vec<PricedPath> {
        let mut cols: Vec<PricedPath> = self
            .subproblems
            .iter()
            .filter_map(|s| s.best.clone())
            .filter(|p| p.reduced_cost > PRICE_TOL)
            .collect();
        cols.sort_by(|a, b| b.reduced_cost.total_cmp(&a.reduced_cost));
        cols
    }

    /// Best reduced cost seen per leaf index.
    pub fn best_per_leaf(&self, topo: &Topology) -> Vec<f64> {
        let mut best = vec![f64::NEG_INFINITY; topo.n_leaves()];
        for s in &self.subproblems {
            if let Some(p) = &s.best {
                let li = topo.leaf_index(s.leaf);
                best[li] = best[li].max(p.reduced_cost);
            }
        }
        best
    }
}

/// Solve every (leaf, target) subproblem exactly. The deadline is checked
/// every ten subproblems; a partial sweep is flagged `timed_out`.
pub fn price_all_exact(
    ctx: &PricingContext<'_, '_>,
    engine: ExactEngine,
    deadline: Option<Instant>,
) -> Result<ExactRound> {
    let topo = *ctx.topology();
    let n_classes = ctx.n_classes();
    let mut subproblems = Vec::with_capacity(topo.n_leaves() * n_classes);
    let mut since_check = 0usize;
    for leaf in topo.leaf_ids() {
        for target in 0..n_classes {
            if since_check >= 10 {
                since_check = 0;
                if deadline.is_some_and(|dl| Instant::now() >= dl) {
                    return Ok(ExactRound {
                        subproblems,
                        timed_out: true,
                    });
                }
            }
            since_check += 1;
            match engine {
                ExactEngine::Enumerate => {
                    // one DFS per leaf covers every target; reuse it
                    if target == 0 {
                        let per_target = enumerate_leaf(ctx, leaf)?;
                        for (t, best) in per_target.into_iter().enumerate() {
                            subproblems.push(SubproblemBest {
                                leaf,
                                target: t,
                                best,
                                proven: true,
                            });
                        }
                    }
                }
                ExactEngine::Milp => {
                    let remaining = deadline.map(|dl| dl.saturating_duration_since(Instant::now()));
                    subproblems.push(milp_price(ctx, leaf, target, remaining)?);
                }
            }
        }
    }
    Ok(ExactRound {
        subproblems,
        timed_out: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::sampling::RestrictedSplits;
    use crate::solver::SolverConfig;
    use approx::assert_relative_eq;
    use rand_chacha::ChaCha8Rng;

    fn tiny_dataset(rng: &mut ChaCha8Rng, n: usize, f: usize, t: usize) -> Dataset {
        let values: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..f).map(|_| rng.gen_range(0..5) as f64).collect())
            .collect();
        let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..t)).collect();
        Dataset::from_parts(values, targets).unwrap()
    }

    fn random_restriction(
        rng: &mut ChaCha8Rng,
        d: &Dataset,
        depth: usize,
        max_per_node: usize,
    ) -> RestrictedSplits {
        let topo = Topology::new(depth);
        let per_node = (0..topo.n_internal())
            .map(|_| {
                let want = rng.gen_range(2..=max_per_node);
                let mut s = Vec::new();
                let mut guard = 0;
                while s.len() < want && guard < 200 {
                    guard += 1;
                    let f = rng.gen_range(0..d.n_features());
                    let v = d.value(rng.gen_range(0..d.n_rows()), f);
                    let split = Split::new(f, v);
                    if !s.contains(&split) {
                        s.push(split);
                    }
                }
                s
            })
            .collect();
        RestrictedSplits::new(depth, per_node).unwrap()
    }

    /// Model warm-started from a single-leaf CART aligned into the
    /// restriction (all splits padded, so the warm paths stay inside it).
    fn model_for<'a>(
        d: &'a Dataset,
        restricted: &RestrictedSplits,
    ) -> Option<MasterModel<'a>> {
        let cart = crate::cart::build(
            d,
            &d.all_rows(),
            &crate::cart::CartParams {
                min_leaf_fraction: 1.0,
                ..crate::cart::CartParams::with_depth(restricted.depth())
            },
        )
        .ok()?;
        let warm = crate::sampling::align_cart_to_topology(&cart, restricted.depth(), restricted).ok()?;
        MasterModel::build(
            restricted.clone(),
            &warm.paths(),
            d,
            &d.all_rows(),
            SolverConfig::default(),
        )
        .ok()
    }

    fn zero_duals(m: &MasterModel<'_>) -> DualValues {
        DualValues {
            alpha: vec![0.0; m.index().topology().n_leaves()],
            beta: vec![0.0; m.dataset().n_rows()],
            gamma: vec![0.0; m.index().n_consistency_rows()],
        }
    }

    fn perturbed_duals(m: &MasterModel<'_>, rng: &mut ChaCha8Rng) -> DualValues {
        let mut duals = zero_duals(m);
        for a in duals.alpha.iter_mut() {
            *a = rng.gen_range(-2.0..2.0);
        }
        for r in m.train_rows().indices() {
            duals.beta[r] = rng.gen_range(-1.0..1.0);
        }
        for g in duals.gamma.iter_mut() {
            *g = rng.gen_range(-1.0..1.0);
        }
        duals
    }

    #[test]
    fn reduced_cost_reference_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = tiny_dataset(&mut rng, 20, 2, 2);
        let restricted = random_restriction(&mut rng, &d, 2, 3);
        let model = model_for(&d, &restricted).unwrap();
        let duals = zero_duals(&model);
        let ctx = PricingContext::new(&model, &duals);
        let path = model.columns()[0].path.clone();
        let cp = model.columns()[0].cp;
        // zero duals: reduced cost equals CP
        assert_relative_eq!(ctx.reduced_cost_of(&path).unwrap(), cp as f64);
        // alpha_l = CP: reduced cost 0
        let mut duals2 = zero_duals(&model);
        duals2.alpha[ctx.topology().leaf_index(path.leaf)] = cp as f64;
        let ctx2 = PricingContext::new(&model, &duals2);
        assert_relative_eq!(ctx2.reduced_cost_of(&path).unwrap(), 0.0);
    }

    #[test]
    fn basic_columns_price_to_zero_at_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let d = tiny_dataset(&mut rng, 25, 3, 2);
            let restricted = random_restriction(&mut rng, &d, 2, 4);
            let Some(mut model) = model_for(&d, &restricted) else {
                continue;
            };
            let relax = model.solve_relaxation().unwrap();
            let ctx = PricingContext::new(&model, &relax.duals);
            for (i, col) in model.columns().iter().enumerate() {
                if relax.x[i] > 1e-6 {
                    let rc = ctx.reduced_cost_of(&col.path).unwrap();
                    assert!(
                        rc.abs() <= 1e-6,
                        "basic column {i} has reduced cost {rc}"
                    );
                }
            }
        }
    }

    #[test]
    fn heuristic_emits_nothing_under_hostile_duals() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = tiny_dataset(&mut rng, 20, 2, 2);
        let restricted = random_restriction(&mut rng, &d, 2, 3);
        let model = model_for(&d, &restricted).unwrap();
        let mut duals = zero_duals(&model);
        for r in model.train_rows().indices() {
            duals.beta[r] = 1e6;
        }
        let ctx = PricingContext::new(&model, &duals);
        let mut state = HeuristicState::new(4, HeuristicParams::default(), 3);
        let emitted = state.generate(&ctx).unwrap();
        assert!(emitted.is_empty());
        assert_eq!(state.consecutive_failures(), 1);
    }

    #[test]
    fn heuristic_zero_duals_emits_positive_cp_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = tiny_dataset(&mut rng, 30, 3, 2);
        let restricted = random_restriction(&mut rng, &d, 2, 4);
        let model = model_for(&d, &restricted).unwrap();
        let duals = zero_duals(&model);
        let ctx = PricingContext::new(&model, &duals);
        let params = HeuristicParams {
            n_emit: 10,
            ..HeuristicParams::default()
        };
        let mut state = HeuristicState::new(4, params, 3);
        let emitted = state.generate(&ctx).unwrap();
        assert!(!emitted.is_empty());
        assert!(emitted.len() <= 10);
        for p in &emitted {
            assert!(p.reduced_cost > 0.0);
            assert_relative_eq!(p.reduced_cost, p.column.cp as f64);
            // stored reduced cost always matches a recomputation
            assert_relative_eq!(
                ctx.reduced_cost_of(&p.column.path).unwrap(),
                p.reduced_cost,
                epsilon = 1e-9
            );
        }
        assert_eq!(state.consecutive_failures(), 0);
    }

    #[test]
    fn heuristic_replay_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = tiny_dataset(&mut rng, 25, 2, 3);
        let restricted = random_restriction(&mut rng, &d, 2, 4);
        let model = model_for(&d, &restricted).unwrap();
        let duals = perturbed_duals(&model, &mut rng);
        let ctx = PricingContext::new(&model, &duals);
        let run = |seed: u64| {
            let mut state = HeuristicState::new(4, HeuristicParams::default(), seed);
            let a = state.generate(&ctx).unwrap();
            let b = state.generate(&ctx).unwrap();
            (
                a.iter().map(|p| p.column.key()).collect::<Vec<_>>(),
                b.iter().map(|p| p.column.key()).collect::<Vec<_>>(),
            )
        };
        assert_eq!(run(42), run(42));
    }

    #[test]
    fn pool_respects_capacity_and_evicts_lowest() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = tiny_dataset(&mut rng, 30, 3, 2);
        let restricted = random_restriction(&mut rng, &d, 2, 4);
        let model = model_for(&d, &restricted).unwrap();
        let duals = zero_duals(&model);
        let ctx = PricingContext::new(&model, &duals);
        let params = HeuristicParams {
            pool_capacity: 12,
            n_leaf_draws: 100,
            n_emit: 5,
            failure_threshold: 3,
        };
        let mut state = HeuristicState::new(4, params, 17);
        for _ in 0..4 {
            let _ = state.generate(&ctx).unwrap();
            assert!(state.pool_len() <= 12);
        }
        // everything left in the pool beats anything evicted: with zero
        // duals rc = CP, so the pool minimum must be the capacity cutoff
        let kept_min = state.pool_min_reduced_cost().unwrap();
        assert!(kept_min >= 0.0);
    }

    #[test]
    fn subproblem_count_is_leaves_times_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let d = tiny_dataset(&mut rng, 24, 2, 3);
        let restricted = random_restriction(&mut rng, &d, 2, 3);
        let model = model_for(&d, &restricted).unwrap();
        let duals = zero_duals(&model);
        let ctx = PricingContext::new(&model, &duals);
        let round = price_all_exact(&ctx, ExactEngine::Enumerate, None).unwrap();
        assert_eq!(round.subproblems.len(), 4 * 3);
    }

    #[test]
    fn depth1_single_split_reference() {
        // k=1, one split, zero duals: reduced cost is the per-side count
        // of target rows
        let values: Vec<Vec<f64>> = vec![
            vec![0.0],
            vec![1.0],
            vec![2.0],
            vec![3.0],
        ];
        let targets = vec![0, 0, 1, 1];
        let d = Dataset::from_parts(values, targets).unwrap();
        let restricted = RestrictedSplits::new(1, vec![vec![Split::new(0, 1.0)]]).unwrap();
        let model = model_for(&d, &restricted).unwrap();
        let duals = zero_duals(&model);
        let ctx = PricingContext::new(&model, &duals);
        // left leaf (id 1): rows 0,1 -> two target-0 rows
        let left = exact_enumerate(&ctx, 1, 0).unwrap().unwrap();
        assert_relative_eq!(left.reduced_cost, 2.0);
        // right leaf (id 2): rows 2,3 -> two target-1 rows
        let right = exact_enumerate(&ctx, 2, 1).unwrap().unwrap();
        assert_relative_eq!(right.reduced_cost, 2.0);
    }

    /// Maskless oracle: route every row through the tuple by hand.
    fn maskless_best(
        ctx: &PricingContext<'_, '_>,
        restricted: &RestrictedSplits,
        leaf: usize,
        target: usize,
    ) -> Option<f64> {
        let topo = *ctx.topology();
        let nodes = topo.path_internal(leaf);
        let mut best: Option<f64> = None;
        let mut stack: Vec<Vec<Split>> = vec![vec![]];
        for &node in &nodes {
            let mut next = Vec::new();
            for prefix in &stack {
                for s in restricted.splits_at(node) {
                    if !prefix.contains(s) {
                        let mut p = prefix.clone();
                        p.push(*s);
                        next.push(p);
                    }
                }
            }
            stack = next;
        }
        for splits in stack {
            let path = DecisionPath::new(&topo, leaf, splits, target).unwrap();
            let rc = ctx.reduced_cost_of(&path).unwrap();
            if best.is_none_or(|b| rc > b) {
                best = Some(rc);
            }
        }
        best
    }

    #[test]
    fn enumeration_matches_maskless_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let d = tiny_dataset(&mut rng, 20, 2, 2);
            let restricted = random_restriction(&mut rng, &d, 2, 3);
            let Some(model) = model_for(&d, &restricted) else {
                continue;
            };
            let duals = perturbed_duals(&model, &mut rng);
            let ctx = PricingContext::new(&model, &duals);
            for leaf in ctx.topology().leaf_ids() {
                for target in 0..d.n_classes() {
                    let got = exact_enumerate(&ctx, leaf, target).unwrap();
                    let want = maskless_best(&ctx, &restricted, leaf, target);
                    match (got, want) {
                        (None, None) => {}
                        (Some(p), Some(w)) => {
                            assert_relative_eq!(p.reduced_cost, w, epsilon = 1e-9);
                            assert_relative_eq!(
                                ctx.reduced_cost_of(&p.column.path).unwrap(),
                                p.reduced_cost,
                                epsilon = 1e-9
                            );
                        }
                        (g, w) => panic!("mismatch: {g:?} vs {w:?}"),
                    }
                }
            }
        }
    }

    #[test]
    fn milp_agrees_with_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut checked = 0;
        for _ in 0..8 {
            let d = tiny_dataset(&mut rng, 14, 2, 2);
            let restricted = random_restriction(&mut rng, &d, 2, 3);
            let Some(model) = model_for(&d, &restricted) else {
                continue;
            };
            let duals = perturbed_duals(&model, &mut rng);
            let ctx = PricingContext::new(&model, &duals);
            for leaf in ctx.topology().leaf_ids() {
                for target in 0..d.n_classes() {
                    let enum_best = exact_enumerate(&ctx, leaf, target).unwrap();
                    let milp_best = milp_price(&ctx, leaf, target, None).unwrap();
                    assert!(milp_best.proven);
                    match (enum_best, milp_best.best) {
                        (None, None) => {}
                        (Some(a), Some(b)) => {
                            assert!(
                                (a.reduced_cost - b.reduced_cost).abs() <= 1e-6,
                                "leaf {leaf} target {target}: enum {} vs milp {}",
                                a.reduced_cost,
                                b.reduced_cost
                            );
                            checked += 1;
                        }
                        (a, b) => panic!("feasibility mismatch: {a:?} vs {b:?}"),
                    }
                }
            }
        }
        assert!(checked >= 20, "only {checked} subproblems compared");
    }

    #[test]
    fn optimal_master_prices_nonpositive() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..5 {
            let d = tiny_dataset(&mut rng, 16, 2, 2);
            let restricted = random_restriction(&mut rng, &d, 2, 3);
            let Some(mut model) = model_for(&d, &restricted) else {
                continue;
            };
            // run CG to optimality with exact pricing
            loop {
                let relax = model.solve_relaxation().unwrap();
                let round = {
                    let ctx = PricingContext::new(&model, &relax.duals);
                    price_all_exact(&ctx, ExactEngine::Enumerate, None).unwrap()
                };
                if round.max_reduced_cost() <= PRICE_TOL {
                    assert!(round.certifies_optimality());
                    break;
                }
                let cols: Vec<Column> =
                    round.positive_columns().into_iter().map(|p| p.column).collect();
                let added = model.add_columns(cols).unwrap();
                assert!(added > 0, "positive columns must be new");
            }
        }
    }
}
