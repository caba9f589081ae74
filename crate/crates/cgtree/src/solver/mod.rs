//! Self-contained LP solver with duals plus a branch-and-bound MILP layer.
//!
//! Programs are equality-form maximization problems over nonnegative
//! variables with optional finite upper bounds:
//!
//! ```text
//! max c'x   s.t.   A x = b,   0 <= x <= u
//! ```
//!
//! Columns are stored sparse. The simplex keeps a dense inverse of the
//! structural part of the basis only, so the per-pivot cost scales with
//! the number of structural basic variables rather than with the full
//! constraint count.

mod milp;
mod simplex;

pub use milp::{solve_milp, solve_milp_with, MilpSolution, MilpSpec, MilpStatus};
pub use simplex::{solve_lp, solve_lp_with, Basis, LpSolution, LpStatus};

use std::io::Write;

use crate::error::{Error, Result};

/// Numerical tolerances and simplex policy knobs.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Primal feasibility tolerance, relative to `1 + |b|_inf`.
    pub feas_tol: f64,
    /// Reduced-cost tolerance for optimality.
    pub dual_tol: f64,
    /// Minimum admissible pivot magnitude.
    pub pivot_tol: f64,
    /// Integrality tolerance (branch-and-bound).
    pub int_tol: f64,
    /// Rebuild the basis inverse every this many pivots.
    pub refactor_interval: usize,
    /// Consecutive degenerate pivots before Bland's rule engages.
    pub bland_threshold: usize,
    /// Safety valve on total simplex iterations per solve.
    pub max_iterations: usize,
    /// Hard wall-clock cutoff; a solve past it aborts with
    /// [`Error::Deadline`](crate::Error::Deadline).
    pub deadline: Option<std::time::Instant>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            feas_tol: 1e-7,
            dual_tol: 1e-7,
            pivot_tol: 1e-9,
            int_tol: 1e-6,
            refactor_interval: 100,
            bland_threshold: 500,
            max_iterations: 1_000_000,
            deadline: None,
        }
    }
}

/// Equality-form maximization LP with sparse columns.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    n_rows: usize,
    rhs: Vec<f64>,
    obj: Vec<f64>,
    cols: Vec<Vec<(usize, f64)>>,
    upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(rhs: Vec<f64>) -> Result<Self> {
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dimension("right-hand side must be finite".into()));
        }
        Ok(LinearProgram {
            n_rows: rhs.len(),
            rhs,
            obj: Vec::new(),
            cols: Vec::new(),
            upper: Vec::new(),
        })
    }

    /// Append one variable (column). Entries are (row, coefficient) pairs;
    /// `upper` may be `f64::INFINITY`. Returns the variable index.
    ///
    /// A basis saved before the call stays valid afterwards: the new
    /// variable starts nonbasic at its lower bound.
    pub fn add_variable(&mut self, obj: f64, entries: &[(usize, f64)], upper: f64) -> Result<usize> {
        if !obj.is_finite() {
            return Err(Error::Dimension("objective coefficient must be finite".into()));
        }
        if upper.is_nan() || upper < 0.0 {
            return Err(Error::Dimension("upper bound must be nonnegative".into()));
        }
        let mut col: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for &(row, v) in entries {
            if row >= self.n_rows {
                return Err(Error::Dimension(format!(
                    "entry row {row} out of range for {} constraints",
                    self.n_rows
                )));
            }
            if !v.is_finite() {
                return Err(Error::Dimension("constraint coefficient must be finite".into()));
            }
            if v != 0.0 {
                col.push((row, v));
            }
        }
        col.sort_by_key(|&(r, _)| r);
        for w in col.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Dimension(format!("duplicate entry for row {}", w[0].0)));
            }
        }
        self.obj.push(obj);
        self.cols.push(col);
        self.upper.push(upper);
        Ok(self.cols.len() - 1)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_vars(&self) -> usize {
        self.cols.len()
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn objective(&self) -> &[f64] {
        &self.obj
    }

    pub fn column(&self, var: usize) -> &[(usize, f64)] {
        &self.cols[var]
    }

    pub fn upper_bound(&self, var: usize) -> f64 {
        self.upper[var]
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.obj.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Max-norm residual of `Ax - b`.
    pub fn residual_inf(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.n_rows];
        for (j, col) in self.cols.iter().enumerate() {
            if x[j] != 0.0 {
                for &(r, v) in col {
                    ax[r] += v * x[j];
                }
            }
        }
        ax.iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Human-readable LP-format dump for cross-checking against external
    /// solvers.
    pub fn write_lp_text<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "Maximize")?;
        write!(w, " obj:")?;
        for (j, c) in self.obj.iter().enumerate() {
            if *c != 0.0 {
                write!(w, " {} {} x{}", if *c < 0.0 { "-" } else { "+" }, c.abs(), j)?;
            }
        }
        writeln!(w)?;
        writeln!(w, "Subject To")?;
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n_rows];
        for (j, col) in self.cols.iter().enumerate() {
            for &(r, v) in col {
                rows[r].push((j, v));
            }
        }
        for (r, row) in rows.iter().enumerate() {
            write!(w, " c{r}:")?;
            for &(j, v) in row {
                write!(w, " {} {} x{}", if v < 0.0 { "-" } else { "+" }, v.abs(), j)?;
            }
            writeln!(w, " = {}", self.rhs[r])?;
        }
        writeln!(w, "Bounds")?;
        for (j, u) in self.upper.iter().enumerate() {
            if u.is_finite() {
                writeln!(w, " 0 <= x{j} <= {u}")?;
            } else {
                writeln!(w, " x{j} >= 0")?;
            }
        }
        writeln!(w, "End")
    }
}
