//! Two-phase primal simplex for bounded variables.
//!
//! The basis always consists of structural columns plus implicit artificial
//! unit columns, one per constraint row. Only the square block coupling
//! structural basic columns to their rows is inverted (dense); solves with
//! the full basis reduce to that block plus sparse column sweeps. Pivots
//! update the block inverse in place and it is rebuilt from scratch every
//! `refactor_interval` pivots.
//!
//! Pricing is Dantzig's rule; Bland's rule engages after a run of
//! degenerate pivots and disengages on the next improving step.

use super::{LinearProgram, SolverConfig};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Restart token: which variable is basic in each row (`None` marks the
/// row's artificial) and which nonbasic variables sit at their upper bound.
#[derive(Clone, Debug)]
pub struct Basis {
    pub row_to_var: Vec<Option<usize>>,
    pub at_upper: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub duals: Vec<f64>,
    pub objective: f64,
    pub basis: Basis,
}

/// Solve with default bounds (`0 <= x <= upper`) and tolerances.
pub fn solve_lp(p: &LinearProgram, warm: Option<&Basis>) -> Result<LpSolution> {
    solve_lp_with(p, warm, &SolverConfig::default())
}

pub fn solve_lp_with(p: &LinearProgram, warm: Option<&Basis>, cfg: &SolverConfig) -> Result<LpSolution> {
    let lower = vec![0.0; p.n_vars()];
    let upper: Vec<f64> = (0..p.n_vars()).map(|j| p.upper_bound(j)).collect();
    solve_lp_bounded(p, &lower, &upper, warm, cfg)
}

/// Solve with explicit working bounds (used by branch-and-bound to fix and
/// split integer variables without rewriting the program).
pub fn solve_lp_bounded(
    p: &LinearProgram,
    lower: &[f64],
    upper: &[f64],
    warm: Option<&Basis>,
    cfg: &SolverConfig,
) -> Result<LpSolution> {
    for j in 0..p.n_vars() {
        if lower[j] > upper[j] {
            return infeasible_solution(p);
        }
    }
    let mut w = Worker::new(p, lower, upper, cfg);
    let installed = warm.is_some_and(|basis| w.try_install(basis));
    if !installed {
        w.cold_start();
    }
    w.solve_two_phase()
}

fn infeasible_solution(p: &LinearProgram) -> Result<LpSolution> {
    Ok(LpSolution {
        status: LpStatus::Infeasible,
        primal: vec![0.0; p.n_vars()],
        duals: vec![0.0; p.n_rows()],
        objective: f64::NEG_INFINITY,
        basis: Basis {
            row_to_var: vec![None; p.n_rows()],
            at_upper: vec![false; p.n_vars()],
        },
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

enum Outcome {
    Optimal,
    Unbounded,
    /// A repairing refactorization evicted basic columns and primal
    /// feasibility must be re-established by phase one.
    LostFeasibility,
}

struct Worker<'a> {
    p: &'a LinearProgram,
    cfg: &'a SolverConfig,
    lower: &'a [f64],
    upper: &'a [f64],
    row_sign: Vec<f64>,
    /// Basic variable per row; `None` is the row's artificial.
    basic: Vec<Option<usize>>,
    /// Value of the basic variable in each row.
    xb: Vec<f64>,
    /// Nonbasic structural variables resting at their upper bound.
    at_upper: Vec<bool>,
    /// Row position of each basic structural variable.
    pos_of_var: Vec<Option<usize>>,
    /// Rows occupied by structural basics, in block order.
    k_rows: Vec<usize>,
    block_pos: Vec<Option<usize>>,
    /// Dense inverse of the structural block, s x s row-major.
    inv: Vec<f64>,
    phase: Phase,
    pivots_since_refactor: usize,
    degenerate_run: usize,
    bland: bool,
    b_inf: f64,
}

impl<'a> Worker<'a> {
    fn new(p: &'a LinearProgram, lower: &'a [f64], upper: &'a [f64], cfg: &'a SolverConfig) -> Self {
        let m = p.n_rows();
        Worker {
            p,
            cfg,
            lower,
            upper,
            row_sign: vec![1.0; m],
            basic: vec![None; m],
            xb: vec![0.0; m],
            at_upper: vec![false; p.n_vars()],
            pos_of_var: vec![None; p.n_vars()],
            k_rows: Vec::new(),
            block_pos: vec![None; m],
            inv: Vec::new(),
            phase: Phase::One,
            pivots_since_refactor: 0,
            degenerate_run: 0,
            bland: false,
            b_inf: p.rhs().iter().fold(0.0, |a, b| f64::max(a, b.abs())),
        }
    }

    fn s(&self) -> usize {
        self.k_rows.len()
    }

    /// Nonbasic resting value of a structural variable.
    fn rest_value(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.upper[j]
        } else {
            self.lower[j]
        }
    }

    /// Effective right-hand side after fixing nonbasic variables at their
    /// bounds (in unsigned, original row space).
    fn effective_rhs(&self) -> Vec<f64> {
        let mut rhs = self.p.rhs().to_vec();
        for j in 0..self.p.n_vars() {
            if self.pos_of_var[j].is_none() {
                let v = self.rest_value(j);
                if v != 0.0 {
                    for &(r, a) in self.p.column(j) {
                        rhs[r] -= a * v;
                    }
                }
            }
        }
        rhs
    }

    fn cold_start(&mut self) {
        for j in 0..self.p.n_vars() {
            self.pos_of_var[j] = None;
            self.at_upper[j] = false;
        }
        let rhs = self.effective_rhs();
        for i in 0..self.p.n_rows() {
            self.row_sign[i] = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
            self.basic[i] = None;
            self.xb[i] = rhs[i].abs();
            self.block_pos[i] = None;
        }
        self.k_rows.clear();
        self.inv.clear();
        self.phase = Phase::One;
    }

    fn needs_phase1(&self) -> bool {
        let tol = self.cfg.feas_tol * (1.0 + self.b_inf);
        self.xb
            .iter()
            .enumerate()
            .any(|(i, v)| self.basic[i].is_none() && *v > tol)
    }

    fn phase1_feasible(&self) -> bool {
        let infeas: f64 = self
            .xb
            .iter()
            .enumerate()
            .filter(|(i, _)| self.basic[*i].is_none())
            .map(|(_, v)| v.max(0.0))
            .sum();
        let m = self.p.n_rows() as f64;
        infeas <= self.cfg.feas_tol * (1.0 + self.b_inf) * (1.0 + m.sqrt())
    }

    /// After a successful phase one, any artificial still basic is pinned
    /// to zero.
    fn clamp_artificials(&mut self) {
        for i in 0..self.p.n_rows() {
            if self.basic[i].is_none() {
                self.xb[i] = 0.0;
            }
        }
    }

    /// Adopt a saved basis; false when its shape is stale. Singular or
    /// bound-violating parts are repaired by the refactorization, and any
    /// resulting infeasibility is settled by the two-phase driver.
    fn try_install(&mut self, basis: &Basis) -> bool {
        if basis.row_to_var.len() != self.p.n_rows() {
            return false;
        }
        for j in 0..self.p.n_vars() {
            self.pos_of_var[j] = None;
            self.at_upper[j] = basis.at_upper.get(j).copied().unwrap_or(false)
                && self.upper[j].is_finite();
        }
        for i in 0..self.p.n_rows() {
            self.basic[i] = basis.row_to_var[i];
            self.block_pos[i] = None;
            if let Some(v) = basis.row_to_var[i] {
                if v >= self.p.n_vars() || self.pos_of_var[v].is_some() {
                    return false;
                }
                self.pos_of_var[v] = Some(i);
                self.at_upper[v] = false;
            }
        }
        self.k_rows = (0..self.p.n_rows()).filter(|&i| self.basic[i].is_some()).collect();
        for (pos, &r) in self.k_rows.iter().enumerate() {
            self.block_pos[r] = Some(pos);
        }
        self.phase = Phase::Two;
        self.refactor().is_ok()
    }

    /// Recompute all basic values from scratch. Structural values are
    /// snapped into their bounds and the worst such violation (with its
    /// row) is returned; artificial values keep their raw residual so lost
    /// feasibility stays visible.
    fn recompute_basic_values(&mut self) -> (f64, Option<usize>) {
        let rhs = self.effective_rhs();
        let signed: Vec<(usize, f64)> = rhs
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v * self.row_sign[i]))
            .filter(|&(_, v)| v != 0.0)
            .collect();
        let d = self.ftran(&signed);
        let mut worst = 0.0f64;
        let mut worst_row = None;
        for i in 0..self.p.n_rows() {
            match self.basic[i] {
                Some(v) => {
                    let clamped = d[i].clamp(self.lower[v], self.upper[v]);
                    let violation = (d[i] - clamped).abs();
                    if violation > worst {
                        worst = violation;
                        worst_row = Some(i);
                    }
                    self.xb[i] = clamped;
                }
                None => {
                    // an artificial row is outside the structural block, so
                    // its sign can be flipped locally to keep the value
                    // nonnegative without touching the block inverse
                    if d[i] < 0.0 {
                        self.row_sign[i] = -self.row_sign[i];
                        self.xb[i] = -d[i];
                    } else {
                        self.xb[i] = d[i];
                    }
                }
            }
        }
        (worst, worst_row)
    }

    /// Make the variable basic in `row` nonbasic at its nearest bound and
    /// hand the row back to its artificial.
    fn evict(&mut self, row: usize) {
        let var = self.basic[row].expect("only structural basics are evicted");
        let value = self.xb[row];
        self.pos_of_var[var] = None;
        self.at_upper[var] = self.upper[var].is_finite()
            && (value - self.upper[var]).abs() < (value - self.lower[var]).abs();
        self.basic[row] = None;
        let pos = self.block_pos[row].expect("structural basic row is in the block");
        self.block_pos[row] = None;
        self.k_rows.remove(pos);
        for (q, &r) in self.k_rows.iter().enumerate() {
            self.block_pos[r] = Some(q);
        }
        self.inv.clear();
    }

    /// Bounds of the variable basic in row `i`.
    fn basic_bounds(&self, i: usize) -> (f64, f64) {
        match self.basic[i] {
            Some(v) => (self.lower[v], self.upper[v]),
            None => match self.phase {
                Phase::One => (0.0, f64::INFINITY),
                Phase::Two => (0.0, 0.0),
            },
        }
    }

    fn cost(&self, var: Option<usize>) -> f64 {
        match (var, self.phase) {
            (Some(j), Phase::Two) => self.p.objective()[j],
            (Some(_), Phase::One) => 0.0,
            (None, Phase::One) => -1.0,
            (None, Phase::Two) => 0.0,
        }
    }

    /// Signed coefficient of variable `j` in internal row space.
    fn signed_col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.p
            .column(j)
            .iter()
            .map(move |&(r, v)| (r, v * self.row_sign[r]))
    }

    /// Solve `B d = a` for a sparse signed column `a`; `d[i]` is the rate
    /// of the basic variable in row `i`.
    fn ftran(&self, a: &[(usize, f64)]) -> Vec<f64> {
        let s = self.s();
        // restrict to block rows and solve the dense block
        let mut a_k = vec![0.0; s];
        for &(r, v) in a {
            if let Some(pos) = self.block_pos[r] {
                a_k[pos] = v;
            }
        }
        let mut z = vec![0.0; s];
        for (p_idx, zp) in z.iter_mut().enumerate() {
            let row = &self.inv[p_idx * s..(p_idx + 1) * s];
            let mut acc = 0.0;
            for (q, &aq) in a_k.iter().enumerate() {
                if aq != 0.0 {
                    acc += row[q] * aq;
                }
            }
            *zp = acc;
        }
        // propagate through artificial rows: d_j = a_j - (S_J z)_j
        let mut d = vec![0.0; self.p.n_rows()];
        for &(r, v) in a {
            d[r] = v;
        }
        for (q, &zq) in z.iter().enumerate() {
            if zq == 0.0 {
                continue;
            }
            let var = self.basic[self.k_rows[q]].expect("block rows hold structural basics");
            for (r, v) in self.signed_col(var) {
                if self.block_pos[r].is_none() {
                    d[r] -= v * zq;
                }
            }
        }
        for (q, &zq) in z.iter().enumerate() {
            d[self.k_rows[q]] = zq;
        }
        d
    }

    /// Duals `y` (internal row space) of the current basis.
    fn btran(&self) -> Vec<f64> {
        let m = self.p.n_rows();
        let s = self.s();
        let mut y = vec![0.0; m];
        for i in 0..m {
            if self.basic[i].is_none() {
                y[i] = self.cost(None);
            }
        }
        let mut rhs = vec![0.0; s];
        for (q, &row) in self.k_rows.iter().enumerate() {
            let var = self.basic[row].expect("structural");
            let mut acc = self.cost(Some(var));
            for (r, v) in self.signed_col(var) {
                if self.block_pos[r].is_none() && y[r] != 0.0 {
                    acc -= y[r] * v;
                }
            }
            rhs[q] = acc;
        }
        // y_K' = rhs' * inv  ->  y_K[p] = sum_q rhs[q] * inv[q][p]
        for (q, &rq) in rhs.iter().enumerate() {
            if rq == 0.0 {
                continue;
            }
            let row = &self.inv[q * s..(q + 1) * s];
            for (p_idx, &ip) in row.iter().enumerate() {
                if ip != 0.0 {
                    y[self.k_rows[p_idx]] += rq * ip;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        let mut d = self.cost(Some(j));
        for (r, v) in self.signed_col(j) {
            if y[r] != 0.0 {
                d -= y[r] * v;
            }
        }
        d
    }

    /// Rebuild the dense block inverse from the sparse columns, repairing
    /// the basis as needed: dependent or bound-violating structural basics
    /// are evicted to their nearest bound and their rows handed back to
    /// artificials. Returns true when anything was evicted.
    fn refactor(&mut self) -> Result<bool> {
        let mut repaired = false;
        let mut guard = 0usize;
        loop {
            guard += 1;
            if guard > self.p.n_rows() + 8 {
                return Err(Error::Numerical("basis repair did not converge".into()));
            }
            let s = self.s();
            let mut mat = vec![0.0; s * s];
            for (q, &row_q) in self.k_rows.iter().enumerate() {
                let var = self.basic[row_q].expect("structural");
                for (r, v) in self.signed_col(var) {
                    if let Some(p_idx) = self.block_pos[r] {
                        mat[p_idx * s + q] = v;
                    }
                }
            }
            match invert_dense(&mut mat, s, self.cfg.pivot_tol) {
                Ok(inv) => {
                    self.inv = inv;
                    let (violation, worst_row) = self.recompute_basic_values();
                    if violation > self.cfg.feas_tol * (1.0 + self.b_inf) {
                        self.evict(worst_row.expect("violation implies a row"));
                        repaired = true;
                        continue;
                    }
                    self.pivots_since_refactor = 0;
                    return Ok(repaired);
                }
                Err(dependent_pos) => {
                    self.evict(self.k_rows[dependent_pos]);
                    repaired = true;
                }
            }
        }
    }

    fn run(&mut self, phase: Phase) -> Result<Outcome> {
        self.phase = phase;
        self.degenerate_run = 0;
        self.bland = false;
        if self.inv.len() != self.s() * self.s() && self.refactor()? && self.feasibility_lost() {
            return Ok(Outcome::LostFeasibility);
        }
        let mut iters = 0usize;
        loop {
            iters += 1;
            if iters > self.cfg.max_iterations {
                return Err(Error::Numerical(format!(
                    "simplex iteration limit {} exceeded",
                    self.cfg.max_iterations
                )));
            }
            if iters % 256 == 0
                && self
                    .cfg
                    .deadline
                    .is_some_and(|dl| std::time::Instant::now() >= dl)
            {
                return Err(Error::Deadline);
            }
            let y = self.btran();
            let Some(entering) = self.price(&y) else {
                return Ok(Outcome::Optimal);
            };
            let from_upper = self.at_upper[entering];
            let sigma = if from_upper { -1.0 } else { 1.0 };
            let signed: Vec<(usize, f64)> = self.signed_col(entering).collect();
            let d = self.ftran(&signed);
            match self.ratio_test(entering, sigma, &d) {
                Ratio::Unbounded => return Ok(Outcome::Unbounded),
                Ratio::BoundFlip(theta) => {
                    self.apply_step(sigma, theta, &d);
                    self.at_upper[entering] = !from_upper;
                    self.note_degeneracy(theta);
                }
                Ratio::Pivot { row, theta } => {
                    if d[row].abs() < self.cfg.pivot_tol {
                        return Err(Error::Numerical(format!(
                            "pivot magnitude {:.3e} below tolerance",
                            d[row].abs()
                        )));
                    }
                    self.apply_step(sigma, theta, &d);
                    self.pivot(entering, row, sigma, theta, &d)?;
                    self.note_degeneracy(theta);
                    self.pivots_since_refactor += 1;
                    if self.pivots_since_refactor >= self.cfg.refactor_interval
                        && self.refactor()?
                        && self.feasibility_lost()
                    {
                        return Ok(Outcome::LostFeasibility);
                    }
                }
            }
        }
    }

    /// After a repair in phase two, evicted rows may hold nonzero
    /// artificial residuals that only phase one can remove.
    fn feasibility_lost(&self) -> bool {
        self.phase == Phase::Two && self.needs_phase1()
    }

    fn note_degeneracy(&mut self, theta: f64) {
        if theta <= self.cfg.pivot_tol {
            self.degenerate_run += 1;
            if self.degenerate_run >= self.cfg.bland_threshold {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
            self.bland = false;
        }
    }

    /// Entering variable: Dantzig's rule, or least-index when Bland's rule
    /// is engaged. `None` means price-optimal.
    fn price(&self, y: &[f64]) -> Option<usize> {
        let tol = self.cfg.dual_tol;
        let mut best: Option<(f64, usize)> = None;
        for j in 0..self.p.n_vars() {
            if self.pos_of_var[j].is_some() || self.upper[j] - self.lower[j] <= 0.0 {
                continue;
            }
            let d = self.reduced_cost(j, y);
            let improving = if self.at_upper[j] { d < -tol } else { d > tol };
            if !improving {
                continue;
            }
            if self.bland {
                return Some(j);
            }
            if best.is_none() || d.abs() > best.unwrap().0 {
                best = Some((d.abs(), j));
            }
        }
        best.map(|(_, j)| j)
    }

    fn ratio_test(&self, entering: usize, sigma: f64, d: &[f64]) -> Ratio {
        let bound_gap = self.upper[entering] - self.lower[entering];
        let tol = self.cfg.pivot_tol;
        let tie = 1e-9;
        let mut theta = f64::INFINITY;
        let mut leaving: Option<usize> = None;
        for i in 0..self.p.n_rows() {
            let rate = sigma * d[i];
            let (lo, hi) = self.basic_bounds(i);
            let cand = if rate > tol {
                (self.xb[i] - lo) / rate
            } else if rate < -tol && hi.is_finite() {
                (hi - self.xb[i]) / -rate
            } else {
                continue;
            };
            let cand = cand.max(0.0);
            match leaving {
                None => {
                    theta = cand;
                    leaving = Some(i);
                }
                Some(cur) => {
                    if cand < theta - tie {
                        theta = cand;
                        leaving = Some(i);
                    } else if cand <= theta + tie && self.prefer_leaving(i, cur, d) {
                        theta = theta.min(cand);
                        leaving = Some(i);
                    }
                }
            }
        }
        if bound_gap <= theta + tie {
            // the entering variable reaches its opposite bound first
            if bound_gap.is_infinite() {
                return Ratio::Unbounded;
            }
            return Ratio::BoundFlip(bound_gap);
        }
        match leaving {
            None => Ratio::Unbounded,
            Some(row) => Ratio::Pivot { row, theta },
        }
    }

    /// Tie-break among leaving candidates: under Bland's rule the lowest
    /// variable index; otherwise prefer kicking artificials out, then the
    /// largest pivot magnitude, then the lowest row index.
    fn prefer_leaving(&self, candidate: usize, current: usize, d: &[f64]) -> bool {
        if self.bland {
            let idx = |i: usize| self.basic[i].unwrap_or(self.p.n_vars() + i);
            return idx(candidate) < idx(current);
        }
        let art_c = self.basic[candidate].is_none();
        let art_u = self.basic[current].is_none();
        if art_c != art_u {
            return art_c;
        }
        let mag_c = d[candidate].abs();
        let mag_u = d[current].abs();
        if (mag_c - mag_u).abs() > 1e-12 {
            return mag_c > mag_u;
        }
        candidate < current
    }

    fn apply_step(&mut self, sigma: f64, theta: f64, d: &[f64]) {
        if theta == 0.0 {
            return;
        }
        for i in 0..self.p.n_rows() {
            if d[i] != 0.0 {
                self.xb[i] -= sigma * theta * d[i];
            }
        }
    }

    fn pivot(&mut self, entering: usize, row: usize, sigma: f64, theta: f64, d: &[f64]) -> Result<()> {
        let entering_value = self.rest_value(entering) + sigma * theta;
        // snap the leaving variable onto the bound it hit
        let rate = sigma * d[row];
        let (_, hi) = self.basic_bounds(row);
        let leaving_hits_upper = rate < 0.0;
        if let Some(v_out) = self.basic[row] {
            self.pos_of_var[v_out] = None;
            self.at_upper[v_out] = leaving_hits_upper && hi.is_finite();
        }
        match self.block_pos[row] {
            Some(p_idx) => self.update_replace(p_idx, d),
            None => self.update_grow(row, entering, d)?,
        }
        self.basic[row] = Some(entering);
        self.pos_of_var[entering] = Some(row);
        self.at_upper[entering] = false;
        self.xb[row] = entering_value;
        Ok(())
    }

    /// Column replacement at block position `p_idx`; the update vector is
    /// the block part of the FTRAN direction.
    fn update_replace(&mut self, p_idx: usize, d: &[f64]) {
        let s = self.s();
        let w: Vec<f64> = (0..s).map(|q| d[self.k_rows[q]]).collect();
        let piv = w[p_idx];
        let prow: Vec<f64> = self.inv[p_idx * s..(p_idx + 1) * s]
            .iter()
            .map(|v| v / piv)
            .collect();
        for q in 0..s {
            if q == p_idx {
                continue;
            }
            let f = w[q];
            if f == 0.0 {
                continue;
            }
            for c in 0..s {
                self.inv[q * s + c] -= f * prow[c];
            }
        }
        self.inv[p_idx * s..(p_idx + 1) * s].copy_from_slice(&prow);
    }

    /// The block gains one row (`row`, previously artificial) and one
    /// column (the entering variable). Bordered-inverse update.
    fn update_grow(&mut self, row: usize, entering: usize, d: &[f64]) -> Result<()> {
        let s = self.s();
        let w: Vec<f64> = (0..s).map(|q| d[self.k_rows[q]]).collect();
        // v: coefficients of the current block columns in the new row
        let mut v = vec![0.0; s];
        for (q, &row_q) in self.k_rows.iter().enumerate() {
            let var = self.basic[row_q].expect("structural");
            for (r, coeff) in self.signed_col(var) {
                if r == row {
                    v[q] = coeff;
                }
            }
        }
        let schur = d[row];
        if schur.abs() < self.cfg.pivot_tol {
            return Err(Error::Numerical("vanishing Schur complement".into()));
        }
        // t = v' * inv
        let mut t = vec![0.0; s];
        for (q, &vq) in v.iter().enumerate() {
            if vq == 0.0 {
                continue;
            }
            let irow = &self.inv[q * s..(q + 1) * s];
            for (c, &ic) in irow.iter().enumerate() {
                t[c] += vq * ic;
            }
        }
        let ns = s + 1;
        let mut new_inv = vec![0.0; ns * ns];
        for p_idx in 0..s {
            for c in 0..s {
                new_inv[p_idx * ns + c] = self.inv[p_idx * s + c] + w[p_idx] * t[c] / schur;
            }
            new_inv[p_idx * ns + s] = -w[p_idx] / schur;
        }
        for c in 0..s {
            new_inv[s * ns + c] = -t[c] / schur;
        }
        new_inv[s * ns + s] = 1.0 / schur;
        self.inv = new_inv;
        self.k_rows.push(row);
        self.block_pos[row] = Some(s);
        let _ = entering;
        Ok(())
    }

    /// Phase one when primal-infeasible, then phase two; repairing
    /// refactorizations loop back through phase one as needed.
    fn solve_two_phase(&mut self) -> Result<LpSolution> {
        let tol = self.cfg.feas_tol * (1.0 + self.b_inf);
        for _attempt in 0..8 {
            if self.needs_phase1() {
                match self.run(Phase::One)? {
                    Outcome::Optimal => {
                        if !self.phase1_feasible() {
                            return infeasible_solution(self.p);
                        }
                        self.clamp_artificials();
                    }
                    Outcome::Unbounded => {
                        return Err(Error::Numerical("phase one reported unbounded".into()))
                    }
                    Outcome::LostFeasibility => continue,
                }
            }
            match self.run(Phase::Two)? {
                Outcome::LostFeasibility => continue,
                Outcome::Unbounded => {
                    return Ok(LpSolution {
                        status: LpStatus::Unbounded,
                        primal: vec![0.0; self.p.n_vars()],
                        duals: vec![0.0; self.p.n_rows()],
                        objective: f64::INFINITY,
                        basis: self.export_basis(),
                    })
                }
                Outcome::Optimal => {
                    let solution = self.extract()?;
                    if self.p.residual_inf(&solution.primal) > tol {
                        // rebuild and give the outer loop another chance
                        self.refactor()?;
                        continue;
                    }
                    return Ok(solution);
                }
            }
        }
        Err(Error::Numerical("repeated basis repairs did not converge".into()))
    }

    fn extract(&self) -> Result<LpSolution> {
        let mut primal = vec![0.0; self.p.n_vars()];
        for (j, x) in primal.iter_mut().enumerate() {
            *x = match self.pos_of_var[j] {
                Some(row) => self.xb[row],
                None => self.rest_value(j),
            };
        }
        let y_internal = self.btran();
        let duals: Vec<f64> = y_internal
            .iter()
            .enumerate()
            .map(|(i, y)| y * self.row_sign[i])
            .collect();
        Ok(LpSolution {
            status: LpStatus::Optimal,
            objective: self.p.objective_value(&primal),
            primal,
            duals,
            basis: self.export_basis(),
        })
    }

    fn export_basis(&self) -> Basis {
        Basis {
            row_to_var: self.basic.clone(),
            at_upper: self.at_upper.clone(),
        }
    }
}

enum Ratio {
    Unbounded,
    BoundFlip(f64),
    Pivot { row: usize, theta: f64 },
}

/// Dense Gauss-Jordan inversion with partial pivoting. On a (near-)
/// singular matrix the offending column index is reported instead.
fn invert_dense(mat: &mut [f64], n: usize, pivot_tol: f64) -> std::result::Result<Vec<f64>, usize> {
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    let mut row_of = (0..n).collect::<Vec<_>>(); // virtual row permutation
    for col in 0..n {
        // find pivot row among remaining
        let mut best = col;
        let mut best_mag = 0.0;
        for r in col..n {
            let mag = mat[row_of[r] * n + col].abs();
            if mag > best_mag {
                best_mag = mag;
                best = r;
            }
        }
        if best_mag < pivot_tol {
            return Err(col);
        }
        row_of.swap(col, best);
        let prow = row_of[col];
        let piv = mat[prow * n + col];
        for c in 0..n {
            mat[prow * n + c] /= piv;
            inv[prow * n + c] /= piv;
        }
        for r in 0..n {
            if r == prow {
                continue;
            }
            let f = mat[r * n + col];
            if f == 0.0 {
                continue;
            }
            for c in 0..n {
                mat[r * n + c] -= f * mat[prow * n + c];
                inv[r * n + c] -= f * inv[prow * n + c];
            }
        }
    }
    // undo the virtual permutation: result row i must correspond to
    // unknown i, i.e. take rows of inv in the order of the pivoted columns
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let src = row_of[i];
        out[i * n..(i + 1) * n].copy_from_slice(&inv[src * n..(src + 1) * n]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lp(rhs: Vec<f64>, cols: Vec<(f64, Vec<(usize, f64)>, f64)>) -> LinearProgram {
        let mut p = LinearProgram::new(rhs).unwrap();
        for (obj, entries, upper) in cols {
            p.add_variable(obj, &entries, upper).unwrap();
        }
        p
    }

    #[test]
    fn single_equality() {
        // max x s.t. x = 1
        let p = lp(vec![1.0], vec![(1.0, vec![(0, 1.0)], f64::INFINITY)]);
        let s = solve_lp(&p, None).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_relative_eq!(s.objective, 1.0);
        assert_relative_eq!(s.duals[0], 1.0);
    }

    #[test]
    fn degenerate_alternatives() {
        // max x1 + x2 s.t. x1 + x2 = 1
        let p = lp(
            vec![1.0],
            vec![
                (1.0, vec![(0, 1.0)], f64::INFINITY),
                (1.0, vec![(0, 1.0)], f64::INFINITY),
            ],
        );
        let s = solve_lp(&p, None).unwrap();
        assert_relative_eq!(s.objective, 1.0);
        assert_relative_eq!(s.duals[0], 1.0);
        assert_relative_eq!(s.primal[0] + s.primal[1], 1.0);
    }

    #[test]
    fn infeasible_detected() {
        // x = 1, x = 2 with shared variable
        let p = lp(vec![1.0, 2.0], vec![(1.0, vec![(0, 1.0), (1, 1.0)], f64::INFINITY)]);
        let s = solve_lp(&p, None).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        // max x1 s.t. x1 - x2 = 0 (both can grow forever)
        let p = lp(
            vec![0.0],
            vec![
                (1.0, vec![(0, 1.0)], f64::INFINITY),
                (0.0, vec![(0, -1.0)], f64::INFINITY),
            ],
        );
        let s = solve_lp(&p, None).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn negative_rhs_handled() {
        // max -x s.t. -x = -3  -> x = 3, objective -3
        let p = lp(vec![-3.0], vec![(-1.0, vec![(0, -1.0)], f64::INFINITY)]);
        let s = solve_lp(&p, None).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_relative_eq!(s.primal[0], 3.0);
        assert_relative_eq!(s.objective, -3.0);
    }

    #[test]
    fn upper_bounds_respected() {
        // max x1 + x2, x1 + x2 + slack = 10, x1 <= 3, x2 <= 4
        let p = lp(
            vec![10.0],
            vec![
                (1.0, vec![(0, 1.0)], 3.0),
                (1.0, vec![(0, 1.0)], 4.0),
                (0.0, vec![(0, 1.0)], f64::INFINITY),
            ],
        );
        let s = solve_lp(&p, None).unwrap();
        assert_relative_eq!(s.objective, 7.0);
        assert_relative_eq!(s.primal[0], 3.0);
        assert_relative_eq!(s.primal[1], 4.0);
    }

    #[test]
    fn warm_start_after_add_column() {
        let mut p = lp(
            vec![4.0, 2.0],
            vec![
                (3.0, vec![(0, 1.0), (1, 1.0)], f64::INFINITY),
                (1.0, vec![(0, 1.0)], f64::INFINITY),
            ],
        );
        let s1 = solve_lp(&p, None).unwrap();
        assert_relative_eq!(s1.objective, 8.0); // x0=2 (row1), x1=2
        // a non-improving column leaves the objective unchanged
        p.add_variable(0.5, &[(0, 1.0), (1, 1.0)], f64::INFINITY).unwrap();
        let s2 = solve_lp(&p, Some(&s1.basis)).unwrap();
        assert_relative_eq!(s2.objective, 8.0);
        // a strictly improving column raises it
        p.add_variable(9.0, &[(0, 1.0), (1, 1.0)], f64::INFINITY).unwrap();
        let s3 = solve_lp(&p, Some(&s2.basis)).unwrap();
        assert!(s3.objective > 8.0 + 1e-9);
        assert_relative_eq!(s3.objective, 20.0); // x3=2, x1=2
    }

    #[test]
    fn duals_satisfy_strong_duality() {
        let p = lp(
            vec![5.0, 3.0],
            vec![
                (4.0, vec![(0, 2.0), (1, 1.0)], f64::INFINITY),
                (3.0, vec![(0, 1.0), (1, 1.0)], f64::INFINITY),
                (0.0, vec![(0, 1.0)], f64::INFINITY),
                (0.0, vec![(1, 1.0)], f64::INFINITY),
            ],
        );
        let s = solve_lp(&p, None).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        let by: f64 = s.duals.iter().zip(p.rhs()).map(|(y, b)| y * b).sum();
        assert_relative_eq!(by, s.objective, epsilon = 1e-9);
        // basic columns price to zero, nonbasic to <= 0
        for j in 0..p.n_vars() {
            let rc = p.objective()[j]
                - p.column(j).iter().map(|&(r, v)| s.duals[r] * v).sum::<f64>();
            if s.primal[j] > 1e-9 {
                assert!(rc.abs() <= 1e-9, "basic var {j} has rc {rc}");
            } else {
                assert!(rc <= 1e-9, "nonbasic var {j} has rc {rc}");
            }
        }
    }
}
