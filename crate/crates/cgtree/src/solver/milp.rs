//! Branch-and-bound over LP relaxations.
//!
//! Node selection is best-bound; branching picks the designated variable
//! farthest from integrality (ties to the lowest index) and splits its
//! bounds at floor/ceil. Limits are reported, never swallowed.

use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use super::simplex::{solve_lp_bounded, Basis, LpStatus};
use super::{LinearProgram, SolverConfig};
use crate::error::{Error, Result};

/// A MILP: an LP plus the index set of integrality-constrained variables,
/// an optional warm incumbent, and search limits.
#[derive(Clone, Debug)]
pub struct MilpSpec {
    pub program: LinearProgram,
    /// Variables required to be integral (branching happens on these only).
    pub integral: Vec<usize>,
    /// Known feasible assignment and its objective, used for pruning and
    /// returned if nothing better is found.
    pub incumbent: Option<Vec<f64>>,
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
}

impl MilpSpec {
    pub fn new(program: LinearProgram, integral: Vec<usize>) -> Self {
        MilpSpec {
            program,
            integral,
            incumbent: None,
            node_limit: 1_000_000,
            time_limit: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MilpStatus {
    /// Search tree exhausted; the returned solution is proven optimal.
    Optimal,
    /// Node or time limit hit; the incumbent (if any) is returned.
    Limit,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub primal: Option<Vec<f64>>,
    pub objective: f64,
    /// Valid upper bound on the true optimum at termination.
    pub bound: f64,
    pub nodes_explored: usize,
}

struct Node {
    id: usize,
    bound: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    basis: Option<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.id == other.id
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // max-heap on bound, FIFO on ties
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

pub fn solve_milp(spec: &MilpSpec) -> Result<MilpSolution> {
    solve_milp_with(spec, &SolverConfig::default())
}

pub fn solve_milp_with(spec: &MilpSpec, cfg: &SolverConfig) -> Result<MilpSolution> {
    let p = &spec.program;
    let started = Instant::now();
    let root_lower = vec![0.0; p.n_vars()];
    let root_upper: Vec<f64> = (0..p.n_vars()).map(|j| p.upper_bound(j)).collect();

    let mut best_obj = f64::NEG_INFINITY;
    let mut best_x: Option<Vec<f64>> = None;
    if let Some(x) = &spec.incumbent {
        if x.len() != p.n_vars() {
            return Err(Error::Dimension("incumbent length mismatch".into()));
        }
        best_obj = p.objective_value(x);
        best_x = Some(x.clone());
    }

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    heap.push(Node {
        id: 0,
        bound: f64::INFINITY,
        lower: root_lower,
        upper: root_upper,
        basis: None,
    });
    let mut next_id = 1usize;
    let mut nodes_explored = 0usize;
    let mut root_bound = f64::INFINITY;

    let out_of_budget = |nodes: usize| -> bool {
        nodes >= spec.node_limit
            || spec
                .time_limit
                .is_some_and(|limit| started.elapsed() >= limit)
    };

    while let Some(node) = heap.pop() {
        if node.bound <= best_obj + cfg.int_tol {
            // best-bound order: nothing left can beat the incumbent
            heap.clear();
            break;
        }
        if out_of_budget(nodes_explored) {
            let remaining = node.bound.min(root_bound);
            return Ok(MilpSolution {
                status: MilpStatus::Limit,
                objective: best_obj,
                bound: remaining.max(best_obj),
                primal: best_x,
                nodes_explored,
            });
        }
        nodes_explored += 1;
        let sol = match solve_lp_bounded(p, &node.lower, &node.upper, node.basis.as_ref(), cfg) {
            Err(Error::Deadline) => {
                return Ok(MilpSolution {
                    status: MilpStatus::Limit,
                    objective: best_obj,
                    bound: node.bound.min(root_bound).max(best_obj),
                    primal: best_x,
                    nodes_explored,
                });
            }
            other => other?,
        };
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Err(Error::UnexpectedUnbounded);
            }
            LpStatus::Optimal => {}
        }
        if nodes_explored == 1 {
            root_bound = sol.objective;
        }
        if sol.objective <= best_obj + cfg.int_tol {
            continue;
        }
        // find the designated variable farthest from integrality
        let mut branch_var: Option<usize> = None;
        let mut worst_frac = cfg.int_tol;
        for &j in &spec.integral {
            let frac = (sol.primal[j] - sol.primal[j].round()).abs();
            if frac > worst_frac {
                worst_frac = frac;
                branch_var = Some(j);
            }
        }
        match branch_var {
            None => {
                // integral: snap designated variables exactly
                let mut x = sol.primal.clone();
                for &j in &spec.integral {
                    x[j] = x[j].round();
                }
                let obj = p.objective_value(&x);
                if obj > best_obj {
                    best_obj = obj;
                    best_x = Some(x);
                }
            }
            Some(j) => {
                let v = sol.primal[j];
                let mut down = Node {
                    id: next_id,
                    bound: sol.objective,
                    lower: node.lower.clone(),
                    upper: node.upper.clone(),
                    basis: Some(sol.basis.clone()),
                };
                next_id += 1;
                down.upper[j] = v.floor();
                if down.lower[j] <= down.upper[j] {
                    heap.push(down);
                }
                let mut up = Node {
                    id: next_id,
                    bound: sol.objective,
                    lower: node.lower,
                    upper: node.upper,
                    basis: Some(sol.basis),
                };
                next_id += 1;
                up.lower[j] = v.ceil();
                if up.lower[j] <= up.upper[j] {
                    heap.push(up);
                }
            }
        }
    }

    if best_x.is_none() {
        return Ok(MilpSolution {
            status: MilpStatus::Infeasible,
            primal: None,
            objective: f64::NEG_INFINITY,
            bound: f64::NEG_INFINITY,
            nodes_explored,
        });
    }
    Ok(MilpSolution {
        status: MilpStatus::Optimal,
        objective: best_obj,
        bound: best_obj.min(root_bound),
        primal: best_x,
        nodes_explored,
    })
}
