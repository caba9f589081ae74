//! End-to-end training: threshold sampling, the column-generation loop,
//! optimality certification and integer recovery.
//!
//! The loop alternates the randomized pricer with the master LP until the
//! pricer comes up empty several times in a row, then switches to exact
//! pricing. If the exact round finds columns, the pool is cleared and
//! leaves are reprioritized by the best reduced cost found there; if it
//! does not, the LP is optimal. In big-data mode the exact rounds are
//! skipped entirely and the run stops when the heuristic is exhausted.
//! The final tree comes straight from the LP when it ends integral, and
//! from a branch-and-bound solve over the generated columns otherwise.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::master::{Column, MasterModel};
use crate::pricing::{
    price_all_exact, ExactEngine, HeuristicParams, HeuristicState, PricingContext, PRICE_TOL,
};
use crate::sampling::{self, RestrictedSplits, SamplingParams};
use crate::solver::SolverConfig;
use crate::tree::{DecisionPath, DecisionTree, RowSet, Split, Topology};

/// Everything one training run needs.
#[derive(Clone, Debug)]
pub struct CghConfig {
    pub depth: usize,
    /// Subsample fraction for threshold sampling.
    pub alpha: f64,
    /// Stall threshold for threshold sampling.
    pub tau: usize,
    /// Per-node retention counts; `None` uses the depth defaults.
    pub q: Option<Vec<usize>>,
    pub heuristic: HeuristicParams,
    pub time_limit: Duration,
    /// Skip exact pricing entirely; `None` auto-enables on datasets with
    /// more than 10000 rows.
    pub big_data: Option<bool>,
    pub seed: u64,
    /// Exact engine used for certification rounds.
    pub exact_engine: ExactEngine,
    pub solver: SolverConfig,
    /// When the LP ends fractional and the whole restricted column
    /// universe is at most this large, enumerate it before the final ILP
    /// so the recovered tree is exactly optimal for the restricted
    /// instance. Zero disables.
    pub exhaustive_recovery_limit: u128,
    /// Optional pricing trace: one line per exact-round subproblem.
    pub trace_path: Option<PathBuf>,
}

impl CghConfig {
    pub fn new(depth: usize, seed: u64) -> Self {
        CghConfig {
            depth,
            alpha: 0.9,
            tau: 300,
            q: None,
            heuristic: HeuristicParams::default(),
            time_limit: Duration::from_secs(600),
            big_data: None,
            seed,
            exact_engine: ExactEngine::Enumerate,
            solver: SolverConfig::default(),
            exhaustive_recovery_limit: 10_000,
            trace_path: None,
        }
    }

    fn sampling_params(&self) -> SamplingParams {
        SamplingParams {
            alpha: self.alpha,
            tau: self.tau,
            q: self
                .q
                .clone()
                .unwrap_or_else(|| sampling::default_q(self.depth)),
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Exact pricing certified the master LP optimal.
    LpOptimal,
    TimeLimit,
    /// Big-data mode: the randomized pricer hit its failure threshold.
    HeuristicExhausted,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Termination::LpOptimal => write!(f, "lp_optimal"),
            Termination::TimeLimit => write!(f, "time_limit"),
            Termination::HeuristicExhausted => write!(f, "heuristic_exhausted"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CghResult {
    pub tree: DecisionTree,
    pub train_accuracy: f64,
    /// Final master LP objective (an upper bound on the recovered ILP
    /// objective over the generated columns).
    pub lp_bound: f64,
    pub ilp_objective: f64,
    /// The LP relaxation was integral when column generation stopped.
    pub lp_was_integral: bool,
    /// Number of master LP solves.
    pub iterations: usize,
    pub columns_generated: usize,
    pub wall_time: Duration,
    pub termination: Termination,
    /// Training accuracy of the warm-start tree (the full-data CART when
    /// sampling ran), never above `train_accuracy`.
    pub warm_train_accuracy: f64,
    /// Per-iteration run log.
    pub log: Vec<String>,
}

/// Accuracy of the recovered tree on held-out rows.
pub fn evaluate(result: &CghResult, d: &Dataset, test_rows: &RowSet) -> Result<f64> {
    result.tree.accuracy(d, test_rows)
}

/// Greedy agreeing tree inside a restriction: lowest-index distinct split
/// per node, per-leaf majority targets. A valid warm start when no CART
/// tree is available.
pub fn warm_tree_from_restriction(
    d: &Dataset,
    train: &RowSet,
    restricted: &RestrictedSplits,
) -> Result<DecisionTree> {
    let topo = restricted.topology();

    fn assign(
        topo: &Topology,
        restricted: &RestrictedSplits,
        node: usize,
        path: &mut Vec<Split>,
        splits: &mut [Split],
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
                return true;
            }
        }
        false
    }

    let mut splits = vec![Split::new(0, 0.0); topo.n_internal()];
    if !assign(&topo, restricted, 0, &mut Vec::new(), &mut splits) {
        return Err(Error::Invalid(
            "restriction admits no distinct split assignment".into(),
        ));
    }
    let skeleton = DecisionTree::new(topo, splits.clone(), vec![0; topo.n_leaves()])?;
    let mut per_leaf = vec![RowSet::empty(d.n_rows()); topo.n_leaves()];
    for r in train.iter() {
        let leaf = skeleton.route_row(d.row(r));
        per_leaf[topo.leaf_index(leaf)].insert(r);
    }
    let targets: Vec<usize> = per_leaf.iter().map(|rows| d.majority_class(rows)).collect();
    DecisionTree::new(topo, splits, targets)
}

/// Full run: threshold sampling, column generation, integer recovery.
pub fn run_cgh(d: &Dataset, train: &RowSet, cfg: &CghConfig) -> Result<CghResult> {
    let started = Instant::now();
    let deadline = started + cfg.time_limit;
    if train.len() < (1 << cfg.depth) {
        return Err(Error::Invalid(format!(
            "need at least {} training rows for depth {}, have {}",
            1 << cfg.depth,
            cfg.depth,
            train.len()
        )));
    }
    if std::env::var("CGTREE_DBG").is_ok() { eprintln!("sampling..."); }
    let sampling_out = sampling::run_threshold_sampling(d, train, cfg.depth, &cfg.sampling_params())?;
    if std::env::var("CGTREE_DBG").is_ok() { eprintln!("sampling done after {} iters", sampling_out.iterations); }
    let mut log = vec![format!(
        "sampling: {} iterations, {} warm paths, elapsed {:.3}s",
        sampling_out.iterations,
        sampling_out.warm_paths().len(),
        started.elapsed().as_secs_f64()
    )];
    run_loop(
        d,
        train,
        sampling_out.restricted.clone(),
        &sampling_out.warm_paths(),
        cfg,
        started,
        deadline,
        log.drain(..).collect(),
    )
}

/// Column generation over externally supplied restricted splits and warm
/// paths (the sampling phase is skipped).
pub fn run_cgh_restricted(
    d: &Dataset,
    train: &RowSet,
    restricted: RestrictedSplits,
    warm_paths: &[DecisionPath],
    cfg: &CghConfig,
) -> Result<CghResult> {
    let started = Instant::now();
    let deadline = started + cfg.time_limit;
    run_loop(d, train, restricted, warm_paths, cfg, started, deadline, Vec::new())
}

#[allow(clippy::too_many_arguments)]
fn run_loop(
    d: &Dataset,
    train: &RowSet,
    restricted: RestrictedSplits,
    warm_paths: &[DecisionPath],
    cfg: &CghConfig,
    started: Instant,
    deadline: Instant,
    mut log: Vec<String>,
) -> Result<CghResult> {
    let big_data = cfg.big_data.unwrap_or(d.n_rows() > 10_000);
    let topo = restricted.topology();
    let mut master = MasterModel::build(
        restricted.clone(),
        warm_paths,
        d,
        train,
        cfg.solver.clone(),
    )?;
    let warm_train_accuracy = DecisionTree::from_paths(topo, warm_paths)
        .expect("validated by the master")
        .accuracy(d, train)?;
    let mut heuristic = HeuristicState::new(
        topo.n_leaves(),
        cfg.heuristic.clone(),
        cfg.seed.wrapping_add(0x9E37_79B9),
    );
    let mut trace: Vec<String> = Vec::new();

    if std::env::var("CGTREE_DBG").is_ok() { eprintln!("master built: {} rows, {} cols; solving...", master.index().n_constraints(), master.n_columns()); }
    let mut relax = master.solve_relaxation()?;
    if std::env::var("CGTREE_DBG").is_ok() { eprintln!("first relaxation done"); }
    let mut iterations = 1usize;
    let mut prev_objective = relax.objective;
    log.push(format!(
        "iter {iterations}: lp_objective={:.6} columns={} mode=warm elapsed={:.3}s",
        relax.objective,
        master.n_columns(),
        started.elapsed().as_secs_f64()
    ));

    let termination = 'cg: loop {
        if Instant::now() >= deadline {
            break 'cg Termination::TimeLimit;
        }
        // at full training accuracy no path can price positive (CP never
        // exceeds coverage, so beta = 1 on every row is a dual certificate)
        if relax.objective >= train.len() as f64 - PRICE_TOL {
            break 'cg Termination::LpOptimal;
        }
        // randomized pricing until it stalls
        let emitted = {
            let ctx = PricingContext::new(&master, &relax.duals);
            heuristic.generate(&ctx)?
        };
        if !emitted.is_empty() {
            let _pool_ok = heuristic.pool_len() <= heuristic.pool_capacity();
            debug_assert!(_pool_ok);
            let n = emitted.len();
            let added =
                master.add_columns(emitted.into_iter().map(|p| p.column).collect())?;
            relax = master.solve_relaxation()?;
            iterations += 1;
            debug_assert!(
                relax.objective >= prev_objective - 1e-6 * (1.0 + prev_objective.abs()),
                "master objective decreased: {prev_objective} -> {}",
                relax.objective
            );
            prev_objective = relax.objective;
            let line = format!(
                "iter {iterations}: lp_objective={:.6} columns=+{added}/{n} mode=heuristic elapsed={:.3}s",
                relax.objective,
                started.elapsed().as_secs_f64()
            );
            if std::env::var("CGTREE_DBG").is_ok() { eprintln!("{line}"); }
            log.push(line);
            continue;
        }
        if heuristic.consecutive_failures() < heuristic.failure_threshold() {
            continue;
        }
        if big_data {
            // stop without solving the exact pricing
            break 'cg Termination::HeuristicExhausted;
        }
        // exact certification round
        let round = {
            let ctx = PricingContext::new(&master, &relax.duals);
            price_all_exact(&ctx, cfg.exact_engine, Some(deadline))?
        };
        if cfg.trace_path.is_some() {
            for s in &round.subproblems {
                let rc = s
                    .best
                    .as_ref()
                    .map_or(f64::NEG_INFINITY, |p| p.reduced_cost);
                trace.push(format!("{iterations}\t{}\t{}\t{rc:.9}", s.leaf, s.target));
            }
        }
        if round.timed_out {
            break 'cg Termination::TimeLimit;
        }
        if round.certifies_optimality() {
            break 'cg Termination::LpOptimal;
        }
        let best_per_leaf = round.best_per_leaf(&topo);
        let cols: Vec<Column> = round
            .positive_columns()
            .into_iter()
            .map(|p| p.column)
            .collect();
        let n = cols.len();
        let added = master.add_columns(cols)?;
        heuristic.clear_and_reweight(&best_per_leaf);
        relax = master.solve_relaxation()?;
        iterations += 1;
        debug_assert!(relax.objective >= prev_objective - 1e-6 * (1.0 + prev_objective.abs()));
        prev_objective = relax.objective;
        let line = format!(
            "iter {iterations}: lp_objective={:.6} columns=+{added}/{n} mode=exact elapsed={:.3}s",
            relax.objective,
            started.elapsed().as_secs_f64()
        );
        if std::env::var("CGTREE_DBG").is_ok() { eprintln!("{line}"); }
        log.push(line);
    };

    let lp_was_integral = relax.integral;
    let mut lp_bound = relax.objective;
    let (tree, ilp_objective) = if lp_was_integral {
        master.extract_tree(&relax.x)?
    } else {
        let remaining = deadline.saturating_duration_since(Instant::now());
        let outcome = master.solve_integer(Some(remaining))?;
        let line = format!(
            "integer recovery: objective={:.6} bound={:.6} proven={} nodes={}",
            outcome.objective, outcome.bound, outcome.proven, outcome.nodes_explored
        );
        if std::env::var("CGTREE_DBG").is_ok() { eprintln!("{line}"); }
        log.push(line);
        let mut best = (outcome.tree, outcome.objective);
        // close the CG/ILP gap on small instances by enumerating the whole
        // restricted column universe
        let universe: u128 = topo
            .leaf_ids()
            .map(|l| restricted.tuples_per_leaf(l).saturating_mul(d.n_classes() as u128))
            .sum();
        let gap_open = best.1 + PRICE_TOL < lp_bound;
        if gap_open
            && termination == Termination::LpOptimal
            && cfg.exhaustive_recovery_limit > 0
            && universe <= cfg.exhaustive_recovery_limit
        {
            let all = enumerate_universe(&master);
            let added = master.add_columns(all)?;
            relax = master.solve_relaxation()?;
            lp_bound = lp_bound.max(relax.objective);
            let remaining = deadline.saturating_duration_since(Instant::now());
            let outcome = master.solve_integer(Some(remaining))?;
            log.push(format!(
                "exhaustive recovery: +{added} columns, objective={:.6} proven={}",
                outcome.objective, outcome.proven
            ));
            if outcome.objective > best.1 {
                best = (outcome.tree, outcome.objective);
            }
        }
        best
    };

    let train_accuracy = tree.accuracy(d, train)?;
    debug_assert!(
        (train_accuracy * train.len() as f64 - ilp_objective).abs() < 1e-6,
        "tree accuracy and ILP objective disagree"
    );
    if let Some(path) = &cfg.trace_path {
        std::fs::write(path, trace.join("\n") + "\n")?;
    }
    log.push(format!(
        "done: termination={termination} ilp={ilp_objective:.1} lp_bound={lp_bound:.6} elapsed={:.3}s",
        started.elapsed().as_secs_f64()
    ));
    Ok(CghResult {
        tree,
        train_accuracy,
        lp_bound,
        ilp_objective,
        lp_was_integral,
        iterations,
        columns_generated: master.n_columns(),
        wall_time: started.elapsed(),
        termination,
        warm_train_accuracy,
        log,
    })
}

/// Every valid column of the restricted instance (all distinct split
/// tuples per leaf, all targets).
fn enumerate_universe(master: &MasterModel<'_>) -> Vec<Column> {
    let topo = *master.index().topology();
    let restricted = master.restricted();
    let n_classes = master.dataset().n_classes();
    let mut cols = Vec::new();
    for leaf in topo.leaf_ids() {
        let nodes = topo.path_internal(leaf);
        let mut tuples: Vec<Vec<Split>> = vec![vec![]];
        for &node in &nodes {
            let mut next = Vec::new();
            for prefix in &tuples {
                for s in restricted.splits_at(node) {
                    if !prefix.contains(s) {
                        let mut p = prefix.clone();
                        p.push(*s);
                        next.push(p);
                    }
                }
            }
            tuples = next;
        }
        for splits in tuples {
            for t in 0..n_classes {
                let path = DecisionPath::new(&topo, leaf, splits.clone(), t)
                    .expect("distinct by construction");
                cols.push(master.make_column(path));
            }
        }
    }
    cols
}

#[cfg(test)]
mod tests {
    use super::*;
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
                let want = rng.gen_range(2..=max_per_node);
                let mut s = Vec::new();
                let mut guard = 0;
                while s.len() < want && guard < 100 {
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

    /// Oracle: every split assignment to the three internal nodes of a
    /// depth-2 tree, with per-leaf optimal targets.
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
                    let tree = DecisionTree::new(topo, vec![s0, s1, s2], vec![0; 4]).unwrap();
                    let mut per_leaf = vec![vec![0usize; d.n_classes()]; 4];
                    for r in rows.iter() {
                        per_leaf[topo.leaf_index(tree.route_row(d.row(r)))][d.target(r)] += 1;
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

    fn fast_config(depth: usize, seed: u64) -> CghConfig {
        let mut cfg = CghConfig::new(depth, seed);
        cfg.tau = 15;
        cfg.heuristic.n_leaf_draws = 50;
        cfg.heuristic.n_emit = 20;
        cfg
    }

    #[test]
    fn pure_dataset_terminates_immediately_at_optimum() {
        let values: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 5) as f64]).collect();
        let d = Dataset::from_parts(values, vec![0; 20]).unwrap();
        let cfg = fast_config(2, 1);
        let result = run_cgh(&d, &d.all_rows(), &cfg).unwrap();
        assert_eq!(result.termination, Termination::LpOptimal);
        assert_relative_eq!(result.train_accuracy, 1.0);
        assert_eq!(result.iterations, 1);
        assert!(result.lp_was_integral);
    }

    #[test]
    fn tiny_instances_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut checked = 0;
        for trial in 0..15 {
            let d = tiny_dataset(&mut rng, 20, 3, 2);
            let restricted = random_restriction(&mut rng, &d, 2, 4);
            let Ok(warm) = warm_tree_from_restriction(&d, &d.all_rows(), &restricted) else {
                continue;
            };
            let cfg = fast_config(2, trial);
            let result =
                run_cgh_restricted(&d, &d.all_rows(), restricted.clone(), &warm.paths(), &cfg)
                    .unwrap();
            let oracle = brute_force_depth2(&d, &restricted, &d.all_rows());
            assert_eq!(
                result.ilp_objective, oracle,
                "trial {trial}: ilp {} vs oracle {}",
                result.ilp_objective, oracle
            );
            assert!(result.lp_bound >= result.ilp_objective - 1e-6);
            assert!(result.train_accuracy >= result.warm_train_accuracy - 1e-12);
            checked += 1;
        }
        assert!(checked >= 10, "only {checked} instances checked");
    }

    #[test]
    fn fixed_seed_reproduces_identical_results() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = tiny_dataset(&mut rng, 40, 3, 3);
        let cfg = fast_config(2, 77);
        let a = run_cgh(&d, &d.all_rows(), &cfg).unwrap();
        let b = run_cgh(&d, &d.all_rows(), &cfg).unwrap();
        assert_eq!(a.tree, b.tree);
        assert_eq!(a.ilp_objective, b.ilp_objective);
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.columns_generated, b.columns_generated);
        assert_eq!(a.lp_was_integral, b.lp_was_integral);
        assert_eq!(a.log.len(), b.log.len());
    }

    #[test]
    fn cgh_never_trains_below_cart() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..6 {
            let d = tiny_dataset(&mut rng, 60, 3, 2);
            let cfg = fast_config(2, trial + 100);
            let result = run_cgh(&d, &d.all_rows(), &cfg).unwrap();
            let cart = crate::cart::build(
                &d,
                &d.all_rows(),
                &crate::cart::CartParams::with_depth(2),
            )
            .unwrap();
            let cart_acc = cart.accuracy(&d, &d.all_rows()).unwrap();
            assert!(
                result.train_accuracy >= cart_acc - 1e-12,
                "trial {trial}: cgh {} below cart {cart_acc}",
                result.train_accuracy
            );
            assert_relative_eq!(result.warm_train_accuracy, cart_acc, epsilon = 1e-12);
        }
    }

    #[test]
    fn evaluate_on_train_equals_train_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = tiny_dataset(&mut rng, 30, 2, 2);
        let cfg = fast_config(2, 5);
        let rows = d.all_rows();
        let result = run_cgh(&d, &rows, &cfg).unwrap();
        assert_relative_eq!(
            evaluate(&result, &d, &rows).unwrap(),
            result.train_accuracy
        );
    }

    #[test]
    fn undersized_training_set_is_rejected() {
        let values: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64]).collect();
        let d = Dataset::from_parts(values, vec![0, 1, 0]).unwrap();
        let cfg = CghConfig::new(2, 1);
        assert!(run_cgh(&d, &d.all_rows(), &cfg).is_err());
    }

    #[test]
    fn big_data_mode_skips_exact_pricing() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let d = tiny_dataset(&mut rng, 50, 3, 2);
        let mut cfg = fast_config(2, 9);
        cfg.big_data = Some(true);
        let result = run_cgh(&d, &d.all_rows(), &cfg).unwrap();
        assert!(matches!(
            result.termination,
            Termination::HeuristicExhausted | Termination::TimeLimit
        ));
        // the warm-start guarantee holds regardless of the stopping rule
        assert!(result.train_accuracy >= result.warm_train_accuracy - 1e-12);
    }

    #[test]
    fn objective_log_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let d = tiny_dataset(&mut rng, 50, 3, 3);
        let cfg = fast_config(2, 13);
        let result = run_cgh(&d, &d.all_rows(), &cfg).unwrap();
        let objectives: Vec<f64> = result
            .log
            .iter()
            .filter_map(|l| {
                l.split("lp_objective=")
                    .nth(1)?
                    .split_whitespace()
                    .next()?
                    .parse()
                    .ok()
            })
            .collect();
        assert!(!objectives.is_empty());
        for w in objectives.windows(2) {
            assert!(w[1] >= w[0] - 1e-6);
        }
    }
}
