//! The path-based master problem: one selection variable per generated
//! decision path, one split-assignment variable per (node, split), and
//! three constraint families — exactly one path per leaf, every training
//! row covered exactly once, and per-(leaf, node, split) consistency rows
//! that force all chosen paths to agree on shared nodes.
//!
//! Consistency rows are kept per (leaf, node, split) exactly as the
//! formulation states them rather than aggregated across leaves, so their
//! duals can be read off directly during pricing.

use std::collections::HashMap;
use std::time::Duration;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::solver::{
    solve_lp_with, solve_milp_with, Basis, LinearProgram, LpStatus, MilpSpec, MilpStatus,
    SolverConfig,
};
use crate::sampling::RestrictedSplits;
use crate::tree::{DecisionPath, DecisionTree, RowSet, Split, SplitMasks, Topology};

/// Canonical identity of a generated column.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnKey {
    leaf: usize,
    splits: Vec<(usize, u64)>,
    target: usize,
}

impl ColumnKey {
    pub fn of_path(path: &DecisionPath) -> Self {
        ColumnKey {
            leaf: path.leaf,
            splits: path
                .splits
                .iter()
                .map(|s| (s.feature, s.threshold.to_bits()))
                .collect(),
            target: path.target,
        }
    }
}

/// A priced decision path, its covered training rows and correct-prediction
/// count.
#[derive(Clone, Debug)]
pub struct Column {
    pub path: DecisionPath,
    pub cp: usize,
    pub rows: RowSet,
}

impl Column {
    pub fn build(
        path: DecisionPath,
        topo: &Topology,
        d: &Dataset,
        masks: &SplitMasks,
        train: &RowSet,
    ) -> Self {
        let rows = path.rows_reaching_masked(topo, masks, train);
        let cp = rows.iter().filter(|&r| d.target(r) == path.target).count();
        Column { path, cp, rows }
    }

    pub fn key(&self) -> ColumnKey {
        ColumnKey::of_path(&self.path)
    }
}

/// Duals of the master constraints, unpacked by role. `beta` is indexed by
/// dataset row id and is zero outside the training rows; `gamma` follows
/// the master's consistency-row order (see [`MasterIndex`]).
#[derive(Clone, Debug)]
pub struct DualValues {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// Fixed layout of the master's rows and split-assignment variables.
#[derive(Clone, Debug)]
pub struct MasterIndex {
    topo: Topology,
    n_train: usize,
    /// Row position (within the training block) of each dataset row.
    train_pos: Vec<Option<usize>>,
    /// Per leaf index, per level: first consistency row of the
    /// (leaf, node-at-level) block, as an offset into the gamma vector.
    cons_offset: Vec<Vec<usize>>,
    n_cons: usize,
}

impl MasterIndex {
    fn new(restricted: &RestrictedSplits, d: &Dataset, train: &RowSet) -> Self {
        let topo = restricted.topology();
        let mut train_pos = vec![None; d.n_rows()];
        for (pos, r) in train.iter().enumerate() {
            train_pos[r] = Some(pos);
        }
        let mut cons_offset = Vec::with_capacity(topo.n_leaves());
        let mut next = 0usize;
        for leaf in topo.leaf_ids() {
            let mut levels = Vec::with_capacity(topo.depth());
            for &node in &topo.path_internal(leaf) {
                levels.push(next);
                next += restricted.splits_at(node).len();
            }
            cons_offset.push(levels);
        }
        MasterIndex {
            topo,
            n_train: train.len(),
            train_pos,
            cons_offset,
            n_cons: next,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn n_constraints(&self) -> usize {
        self.topo.n_leaves() + self.n_train + self.n_cons
    }

    pub fn n_consistency_rows(&self) -> usize {
        self.n_cons
    }

    fn leaf_row(&self, leaf: usize) -> usize {
        self.topo.leaf_index(leaf)
    }

    fn train_row(&self, dataset_row: usize) -> Option<usize> {
        self.train_pos[dataset_row].map(|p| self.topo.n_leaves() + p)
    }

    /// Offset of the (leaf, node, split) entry within the gamma vector.
    pub fn gamma_index(
        &self,
        restricted: &RestrictedSplits,
        leaf: usize,
        node: usize,
        split: &Split,
    ) -> Result<usize> {
        let level = self
            .topo
            .path_internal(leaf)
            .iter()
            .position(|&j| j == node)
            .ok_or(Error::MissingDual {
                leaf,
                node,
                split: *split,
            })?;
        let split_idx = restricted.splits_at(node).binary_search(split).map_err(|_| {
            Error::MissingDual {
                leaf,
                node,
                split: *split,
            }
        })?;
        Ok(self.cons_offset[self.topo.leaf_index(leaf)][level] + split_idx)
    }

    fn cons_row(&self, gamma_index: usize) -> usize {
        self.topo.n_leaves() + self.n_train + gamma_index
    }
}

/// Result of one LP relaxation solve.
#[derive(Clone, Debug)]
pub struct Relaxation {
    pub objective: f64,
    pub duals: DualValues,
    /// Primal value per generated column, in insertion order.
    pub x: Vec<f64>,
    /// True iff every path variable is within tolerance of 0 or 1.
    pub integral: bool,
}

/// Result of the integer recovery solve.
#[derive(Clone, Debug)]
pub struct IntegerOutcome {
    pub tree: DecisionTree,
    pub objective: f64,
    pub bound: f64,
    pub proven: bool,
    pub nodes_explored: usize,
}

pub struct MasterModel<'a> {
    d: &'a Dataset,
    train: RowSet,
    restricted: RestrictedSplits,
    index: MasterIndex,
    masks: SplitMasks,
    program: LinearProgram,
    columns: Vec<Column>,
    col_vars: Vec<usize>,
    keys: HashMap<ColumnKey, usize>,
    /// Split-assignment variable per (node, split index).
    rho_vars: Vec<Vec<usize>>,
    basis: Option<Basis>,
    warm_assignment: Vec<usize>,
    class_masks: Vec<RowSet>,
    cfg: SolverConfig,
}

impl<'a> MasterModel<'a> {
    /// Build the master over the restricted splits with the warm-start
    /// paths installed, so the initial LP is feasible by construction.
    pub fn build(
        restricted: RestrictedSplits,
        warm_paths: &[DecisionPath],
        d: &'a Dataset,
        train: &RowSet,
        cfg: SolverConfig,
    ) -> Result<Self> {
        let topo = restricted.topology();
        // reject disagreeing or out-of-restriction warm paths before any solve
        DecisionTree::from_paths(topo, warm_paths)
            .map_err(|e| Error::InfeasibleWarmStart(e.to_string()))?;
        for p in warm_paths {
            for (level, &node) in topo.path_internal(p.leaf).iter().enumerate() {
                if !restricted.contains(node, &p.splits[level]) {
                    return Err(Error::SplitOutsideRestriction {
                        node,
                        split: p.splits[level],
                    });
                }
            }
        }

        let index = MasterIndex::new(&restricted, d, train);
        let masks = SplitMasks::build(d, restricted.universe().into_iter());

        let mut rhs = vec![1.0; topo.n_leaves() + train.len()];
        rhs.extend(std::iter::repeat_n(0.0, index.n_cons));
        let mut program = LinearProgram::new(rhs)?;

        // split-assignment variables, -1 in every consistency row of their
        // (node, split) pair
        let mut rho_vars: Vec<Vec<usize>> = Vec::with_capacity(topo.n_internal());
        for node in topo.internal_ids() {
            let mut vars = Vec::with_capacity(restricted.splits_at(node).len());
            for split in restricted.splits_at(node) {
                let mut entries = Vec::new();
                for leaf in topo.leaf_ids() {
                    if topo.path_internal(leaf).contains(&node) {
                        let g = index.gamma_index(&restricted, leaf, node, split)?;
                        entries.push((index.cons_row(g), -1.0));
                    }
                }
                vars.push(program.add_variable(0.0, &entries, f64::INFINITY)?);
            }
            rho_vars.push(vars);
        }

        let mut class_masks = vec![RowSet::empty(d.n_rows()); d.n_classes()];
        for r in train.iter() {
            class_masks[d.target(r)].insert(r);
        }
        let mut model = MasterModel {
            d,
            train: train.clone(),
            restricted,
            index,
            masks,
            program,
            columns: Vec::new(),
            col_vars: Vec::new(),
            keys: HashMap::new(),
            rho_vars,
            basis: None,
            warm_assignment: Vec::new(),
            class_masks,
            cfg,
        };
        let warm_cols: Vec<Column> = warm_paths
            .iter()
            .map(|p| model.make_column(p.clone()))
            .collect();
        let added = model.add_columns(warm_cols)?;
        if added != topo.n_leaves() {
            return Err(Error::InfeasibleWarmStart(format!(
                "expected {} distinct warm paths, installed {added}",
                topo.n_leaves()
            )));
        }
        model.warm_assignment = (0..topo.n_leaves()).collect();
        Ok(model)
    }

    pub fn make_column(&self, path: DecisionPath) -> Column {
        Column::build(path, self.index.topology(), self.d, &self.masks, &self.train)
    }

    pub fn restricted(&self) -> &RestrictedSplits {
        &self.restricted
    }

    pub fn index(&self) -> &MasterIndex {
        &self.index
    }

    pub fn masks(&self) -> &SplitMasks {
        &self.masks
    }

    pub fn train_rows(&self) -> &RowSet {
        &self.train
    }

    /// Training rows of each class.
    pub fn class_masks(&self) -> &[RowSet] {
        &self.class_masks
    }

    pub fn dataset(&self) -> &Dataset {
        self.d
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn program(&self) -> &LinearProgram {
        &self.program
    }

    /// Install new columns, deduplicated by canonical key. Returns how many
    /// were actually added.
    pub fn add_columns(&mut self, cols: Vec<Column>) -> Result<usize> {
        let topo = *self.index.topology();
        let mut added = 0usize;
        for col in cols {
            let key = col.key();
            if self.keys.contains_key(&key) {
                continue;
            }
            self.validate_column(&col)?;
            let mut entries: Vec<(usize, f64)> =
                vec![(self.index.leaf_row(col.path.leaf), 1.0)];
            for r in col.rows.iter() {
                let row = self
                    .index
                    .train_row(r)
                    .expect("column rows are training rows");
                entries.push((row, 1.0));
            }
            for (level, &node) in topo.path_internal(col.path.leaf).iter().enumerate() {
                let g = self.index.gamma_index(
                    &self.restricted,
                    col.path.leaf,
                    node,
                    &col.path.splits[level],
                )?;
                entries.push((self.index.cons_row(g), 1.0));
            }
            let var = self
                .program
                .add_variable(col.cp as f64, &entries, f64::INFINITY)?;
            self.keys.insert(key, self.columns.len());
            self.columns.push(col);
            self.col_vars.push(var);
            added += 1;
        }
        Ok(added)
    }

    fn validate_column(&self, col: &Column) -> Result<()> {
        let topo = self.index.topology();
        for (level, &node) in topo.path_internal(col.path.leaf).iter().enumerate() {
            let split = col.path.splits[level];
            if !self.restricted.contains(node, &split) {
                return Err(Error::SplitOutsideRestriction { node, split });
            }
        }
        if col.path.target >= self.d.n_classes() {
            return Err(Error::InvalidPath(format!(
                "target {} out of range",
                col.path.target
            )));
        }
        if !col.rows.is_subset(&self.train) {
            return Err(Error::Invalid("column covers non-training rows".into()));
        }
        Ok(())
    }

    /// Solve the LP relaxation warm-started from the previous basis and
    /// unpack the duals by constraint role.
    pub fn solve_relaxation(&mut self) -> Result<Relaxation> {
        let sol = solve_lp_with(&self.program, self.basis.as_ref(), &self.cfg)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                return Err(Error::Invalid("master LP infeasible".into()))
            }
            LpStatus::Unbounded => return Err(Error::UnexpectedUnbounded),
        }
        self.basis = Some(sol.basis.clone());
        let topo = self.index.topology();
        let n_leaves = topo.n_leaves();
        let alpha = sol.duals[..n_leaves].to_vec();
        let mut beta = vec![0.0; self.d.n_rows()];
        for (r, pos) in self.index.train_pos.iter().enumerate() {
            if let Some(p) = pos {
                beta[r] = sol.duals[n_leaves + p];
            }
        }
        let gamma = sol.duals[n_leaves + self.index.n_train..].to_vec();
        let x: Vec<f64> = self.col_vars.iter().map(|&v| sol.primal[v]).collect();
        let integral = x
            .iter()
            .all(|&v| (v - v.round()).abs() <= self.cfg.int_tol && v.round() <= 1.0);
        Ok(Relaxation {
            objective: sol.objective,
            duals: DualValues { alpha, beta, gamma },
            x,
            integral,
        })
    }

    /// Extract the tree encoded by an integral LP solution.
    pub fn extract_tree(&self, x: &[f64]) -> Result<(DecisionTree, f64)> {
        let topo = *self.index.topology();
        let mut selected: Vec<&Column> = Vec::new();
        for (i, &v) in x.iter().enumerate() {
            if v > 0.5 {
                selected.push(&self.columns[i]);
            }
        }
        if selected.len() != topo.n_leaves() {
            return Err(Error::Invalid(format!(
                "integral solution selects {} paths for {} leaves",
                selected.len(),
                topo.n_leaves()
            )));
        }
        let paths: Vec<DecisionPath> = selected.iter().map(|c| c.path.clone()).collect();
        // agreement is enforced by the consistency rows; verify anyway
        let tree = DecisionTree::from_paths(topo, &paths)?;
        let objective: f64 = selected.iter().map(|c| c.cp as f64).sum();
        Ok((tree, objective))
    }

    /// Solve the master as an ILP over the generated columns, branching on
    /// path variables only (split-assignment integrality is implied). The
    /// warm-start tree provides the incumbent.
    pub fn solve_integer(&mut self, time_limit: Option<Duration>) -> Result<IntegerOutcome> {
        let mut spec = MilpSpec::new(self.program.clone(), self.col_vars.clone());
        spec.time_limit = time_limit;
        spec.incumbent = Some(self.warm_incumbent_assignment());
        let sol = solve_milp_with(&spec, &self.cfg)?;
        match sol.status {
            MilpStatus::Infeasible => Err(Error::Invalid(
                "master ILP infeasible despite warm start".into(),
            )),
            status => {
                let x_full = sol.primal.expect("incumbent guarantees a solution");
                let x: Vec<f64> = self.col_vars.iter().map(|&v| x_full[v]).collect();
                let (tree, objective) = self.extract_tree(&x)?;
                Ok(IntegerOutcome {
                    tree,
                    objective,
                    bound: sol.bound,
                    proven: status == MilpStatus::Optimal,
                    nodes_explored: sol.nodes_explored,
                })
            }
        }
    }

    /// Full variable assignment of the warm-start tree (paths plus their
    /// split-assignment variables).
    fn warm_incumbent_assignment(&self) -> Vec<f64> {
        let topo = self.index.topology();
        let mut x = vec![0.0; self.program.n_vars()];
        for &ci in &self.warm_assignment {
            x[self.col_vars[ci]] = 1.0;
        }
        // rho consistent with the warm paths
        for &ci in &self.warm_assignment {
            let col = &self.columns[ci];
            for (level, &node) in topo.path_internal(col.path.leaf).iter().enumerate() {
                let split = col.path.splits[level];
                let idx = self
                    .restricted
                    .splits_at(node)
                    .binary_search(&split)
                    .expect("warm split inside restriction");
                x[self.rho_vars[node][idx]] = 1.0;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling;
    use approx::assert_relative_eq;
    use rand::{Rng as _, SeedableRng as _};
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
                let n = rng.gen_range(2..=max_per_node);
                let mut s = Vec::new();
                while s.len() < n {
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

    /// Greedy valid tree inside the restriction: first distinct split per
    /// node, majority targets.
    fn greedy_warm_tree(d: &Dataset, restricted: &RestrictedSplits) -> Option<DecisionTree> {
        let topo = restricted.topology();
        let mut splits = vec![Split::new(0, 0.0); topo.n_internal()];
        fn assign(
            topo: &Topology,
            restricted: &RestrictedSplits,
            node: usize,
            path: &mut Vec<Split>,
            splits: &mut Vec<Split>,
        ) -> bool {
            if topo.is_leaf(node) {
                return true;
            }
            for s in restricted.splits_at(node) {
                if path.contains(s) {
                    continue;
                }
                splits[node] = *s;
                path.push(*s);
                let ok = assign(topo, restricted, topo.left_child(node), path, splits)
                    && assign(topo, restricted, topo.right_child(node), path, splits);
                path.pop();
                if ok {
                    // both subtrees done with this split in place
                    return true;
                }
            }
            false
        }
        let mut path = Vec::new();
        if !assign(&topo, restricted, 0, &mut path, &mut splits) {
            return None;
        }
        let tree = DecisionTree::new(topo, splits.clone(), vec![0; topo.n_leaves()]).ok()?;
        // majority targets per leaf
        let rows = d.all_rows();
        let targets: Vec<usize> = topo
            .leaf_ids()
            .map(|leaf| {
                let mut reach = RowSet::empty(d.n_rows());
                for r in rows.iter() {
                    if tree.route_row(d.row(r)) == leaf {
                        reach.insert(r);
                    }
                }
                d.majority_class(&reach)
            })
            .collect();
        DecisionTree::new(topo, splits, targets).ok()
    }

    /// Exhaustive oracle over all split assignments with per-leaf optimal
    /// targets (depth 2: 3 internal nodes).
    fn brute_force_depth2(d: &Dataset, restricted: &RestrictedSplits, rows: &RowSet) -> f64 {
        let topo = Topology::new(2);
        let mut best = 0usize;
        for &s0 in restricted.splits_at(0) {
            for &s1 in restricted.splits_at(1) {
                if s1 == s0 {
                    continue;
                }
                for &s2 in restricted.splits_at(2) {
                    if s2 == s0 {
                        continue;
                    }
                    let tree =
                        DecisionTree::new(topo, vec![s0, s1, s2], vec![0; 4]).unwrap();
                    let mut per_leaf = vec![vec![0usize; d.n_classes()]; 4];
                    for r in rows.iter() {
                        let leaf = tree.route_row(d.row(r));
                        per_leaf[topo.leaf_index(leaf)][d.target(r)] += 1;
                    }
                    let total: usize = per_leaf
                        .iter()
                        .map(|c| c.iter().copied().max().unwrap_or(0))
                        .sum();
                    best = best.max(total);
                }
            }
        }
        best as f64
    }

    fn enumerate_all_columns(model: &MasterModel<'_>) -> Vec<Column> {
        let topo = *model.index.topology();
        let restricted = model.restricted().clone();
        let mut cols = Vec::new();
        for leaf in topo.leaf_ids() {
            let nodes = topo.path_internal(leaf);
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
                for t in 0..model.d.n_classes() {
                    let path = DecisionPath::new(&topo, leaf, splits.clone(), t).unwrap();
                    cols.push(model.make_column(path));
                }
            }
        }
        cols
    }

    #[test]
    fn constraint_counts_depth1() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = tiny_dataset(&mut rng, 10, 2, 2);
        let restricted =
            RestrictedSplits::new(1, vec![vec![Split::new(0, 1.0), Split::new(0, 3.0)]]).unwrap();
        let warm = sampling::align_cart_to_topology(
            &crate::cart::build(&d, &d.all_rows(), &crate::cart::CartParams::with_depth(1)).unwrap(),
            1,
            &restricted,
        )
        .unwrap();
        let model = MasterModel::build(
            restricted,
            &warm.paths(),
            &d,
            &d.all_rows(),
            SolverConfig::default(),
        )
        .unwrap();
        // 2 leaf rows + |R| row rows + 2 * |S_root| consistency rows
        assert_eq!(model.index().n_constraints(), 2 + 10 + 2 * 2);
    }

    #[test]
    fn warm_start_only_objective_is_cart_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = tiny_dataset(&mut rng, 30, 3, 2);
        let rows = d.all_rows();
        let out = sampling::run_threshold_sampling(
            &d,
            &rows,
            2,
            &sampling::SamplingParams {
                tau: 10,
                ..sampling::SamplingParams::defaults(2, 5)
            },
        )
        .unwrap();
        let cart_correct =
            (out.full_cart.accuracy(&d, &rows).unwrap() * rows.len() as f64).round();
        let mut model = MasterModel::build(
            out.restricted.clone(),
            &out.warm_paths(),
            &d,
            &rows,
            SolverConfig::default(),
        )
        .unwrap();
        let relax = model.solve_relaxation().unwrap();
        assert!(relax.integral);
        assert_relative_eq!(relax.objective, cart_correct, epsilon = 1e-6);
        // integral extraction returns the warm tree's objective
        let (tree, obj) = model.extract_tree(&relax.x).unwrap();
        assert_relative_eq!(obj, cart_correct, epsilon = 1e-9);
        assert_relative_eq!(
            tree.accuracy(&d, &rows).unwrap() * rows.len() as f64,
            cart_correct,
            epsilon = 1e-9
        );
    }

    #[test]
    fn disagreeing_warm_paths_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = tiny_dataset(&mut rng, 12, 2, 2);
        let topo = Topology::new(1);
        let s1 = Split::new(0, 1.0);
        let s2 = Split::new(0, 2.0);
        let restricted = RestrictedSplits::new(1, vec![vec![s1, s2]]).unwrap();
        let p1 = DecisionPath::new(&topo, 1, vec![s1], 0).unwrap();
        let p2 = DecisionPath::new(&topo, 2, vec![s2], 1).unwrap();
        match MasterModel::build(restricted, &[p1, p2], &d, &d.all_rows(), SolverConfig::default())
        {
            Err(Error::InfeasibleWarmStart(_)) => {}
            Err(other) => panic!("expected InfeasibleWarmStart, got {other:?}"),
            Ok(_) => panic!("expected InfeasibleWarmStart, got a model"),
        }
    }

    #[test]
    fn add_columns_dedupes_and_rejects_foreign_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = tiny_dataset(&mut rng, 20, 2, 2);
        let rows = d.all_rows();
        let restricted = random_restriction(&mut rng, &d, 2, 3);
        let warm = greedy_warm_tree(&d, &restricted).expect("restriction admits a tree");
        let mut model = MasterModel::build(
            restricted.clone(),
            &warm.paths(),
            &d,
            &rows,
            SolverConfig::default(),
        )
        .unwrap();
        let n0 = model.n_columns();
        // re-adding a warm path is a no-op
        let dup = model.make_column(warm.paths()[0].clone());
        assert_eq!(model.add_columns(vec![dup]).unwrap(), 0);
        assert_eq!(model.n_columns(), n0);
        // a path with a split outside S_j is rejected
        let topo = Topology::new(2);
        let foreign = Split::new(0, 4.75);
        assert!(!restricted.contains(0, &foreign));
        let other = restricted
            .splits_at(1)
            .iter()
            .find(|s| **s != foreign)
            .copied()
            .unwrap();
        let bad_path = DecisionPath::new(&topo, 3, vec![foreign, other], 0).unwrap();
        let masks = SplitMasks::build(&d, [foreign, other].into_iter());
        let bad = Column::build(bad_path, &topo, &d, &masks, &rows);
        match model.add_columns(vec![bad]) {
            Err(Error::SplitOutsideRestriction { node: 0, .. }) => {}
            other => panic!("expected SplitOutsideRestriction, got {other:?}"),
        }
    }

    #[test]
    fn full_enumeration_lp_bounds_brute_force_ilp() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..12 {
            let d = tiny_dataset(&mut rng, 12, 2, 2);
            let rows = d.all_rows();
            let restricted = random_restriction(&mut rng, &d, 2, 3);
            let Some(warm) = greedy_warm_tree(&d, &restricted) else {
                continue;
            };
            let mut model = MasterModel::build(
                restricted.clone(),
                &warm.paths(),
                &d,
                &rows,
                SolverConfig::default(),
            )
            .unwrap();
            let all = enumerate_all_columns(&model);
            model.add_columns(all).unwrap();
            let relax = model.solve_relaxation().unwrap();
            let oracle = brute_force_depth2(&d, &restricted, &rows);
            assert!(
                relax.objective >= oracle - 1e-6,
                "trial {trial}: LP {} < oracle {}",
                relax.objective,
                oracle
            );
            let integer = model.solve_integer(None).unwrap();
            assert!(integer.proven);
            assert_relative_eq!(integer.objective, oracle, epsilon = 1e-6);
            assert!(integer.objective <= relax.objective + 1e-6);
        }
    }

    #[test]
    fn objective_monotone_in_column_additions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = tiny_dataset(&mut rng, 25, 3, 3);
        let rows = d.all_rows();
        let restricted = random_restriction(&mut rng, &d, 2, 4);
        let Some(warm) = greedy_warm_tree(&d, &restricted) else {
            panic!("restriction admits a tree");
        };
        let mut model = MasterModel::build(
            restricted,
            &warm.paths(),
            &d,
            &rows,
            SolverConfig::default(),
        )
        .unwrap();
        let all = enumerate_all_columns(&model);
        let mut prev = model.solve_relaxation().unwrap().objective;
        for chunk in all.chunks(5) {
            model.add_columns(chunk.to_vec()).unwrap();
            let obj = model.solve_relaxation().unwrap().objective;
            assert!(obj >= prev - 1e-7, "objective dropped: {prev} -> {obj}");
            prev = obj;
        }
    }

    #[test]
    fn integer_recovery_never_below_warm_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..5 {
            let d = tiny_dataset(&mut rng, 18, 2, 2);
            let rows = d.all_rows();
            let restricted = random_restriction(&mut rng, &d, 2, 3);
            let Some(warm) = greedy_warm_tree(&d, &restricted) else {
                continue;
            };
            let warm_correct =
                (warm.accuracy(&d, &rows).unwrap() * rows.len() as f64).round();
            let mut model = MasterModel::build(
                restricted,
                &warm.paths(),
                &d,
                &rows,
                SolverConfig::default(),
            )
            .unwrap();
            let integer = model.solve_integer(None).unwrap();
            assert!(integer.objective >= warm_correct - 1e-9);
        }
    }
}
