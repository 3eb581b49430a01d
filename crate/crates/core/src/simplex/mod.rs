//! Bounded-variable primal simplex.
//!
//! Each row `lo <= a x <= hi` gets a slack `s = a x` carrying the row bounds,
//! so the working system is `[A | -I] (x, s) = 0` with every column boxed.
//! Phase 1 minimises the sum of bound violations of the basic variables
//! (composite method, no artificials), which also lets a warm basis that has
//! become infeasible after a bound change restart directly. Phase 2 uses
//! Dantzig pricing, a Harris two-pass ratio test, and falls back to Bland's
//! rule after a run of degenerate pivots. The basis inverse is kept in
//! product form and rebuilt every `refactor_every` pivots.

mod cvar;
mod factor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model_ir::{LpSolution, LpStatus, MilpModel};
pub use cvar::{cvar_primal_oracle, CvarError};
use factor::{EtaFile, PIVOT_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimplexOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    /// Defaults to `50 * (rows + cols)` when `None`.
    pub max_iters: Option<usize>,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_threshold: usize,
    pub refactor_every: usize,
    /// Emit a per-iteration trace through `log::trace!`.
    pub trace: bool,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { feas_tol: 1e-9, opt_tol: 1e-9, max_iters: None, bland_threshold: 50, refactor_every: 100, trace: false }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimplexError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    Free,
}

/// Column indices `0..n` are structural, `n..n+m` are row slacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    pub basic: Vec<usize>,
    pub state: Vec<VarState>,
}

/// Solves the LP relaxation of `m` (binaries treated as continuous in their bounds).
pub fn solve_lp(
    m: &MilpModel,
    opts: &SimplexOptions,
    warm: Option<&Basis>,
) -> Result<(LpSolution, Basis), SimplexError> {
    let mut engine = LpEngine::new(m)?;
    engine.solve(opts, warm)
}

/// Static LP data in column form plus mutable variable bounds, reusable across
/// many solves that differ only in bounds.
#[derive(Debug, Clone)]
pub struct LpEngine {
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    /// Internal minimisation costs for all `n + m` columns.
    cost: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    base_lb: Vec<f64>,
    base_ub: Vec<f64>,
    /// Model objective = `flip * internal objective`.
    flip: f64,
    obj_offset: f64,
}

impl LpEngine {
    pub fn new(model: &MilpModel) -> Result<Self, SimplexError> {
        let violations = model.validate();
        if !violations.is_empty() {
            return Err(SimplexError::InvalidModel(violations.join("; ")));
        }
        let n = model.num_vars();
        let m = model.num_rows();
        let mut counts = vec![0usize; n + 1];
        for row in &model.rows {
            for &(j, _) in &row.coefs {
                counts[j + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_start = counts.clone();
        let mut fill = counts;
        let nnz = col_start[n];
        let mut col_row = vec![0usize; nnz];
        let mut col_val = vec![0f64; nnz];
        for (i, row) in model.rows.iter().enumerate() {
            for &(j, a) in &row.coefs {
                col_row[fill[j]] = i;
                col_val[fill[j]] = a;
                fill[j] += 1;
            }
        }
        let flip = -model.sense.sign();
        let mut cost: Vec<f64> = model.objective.iter().map(|&c| flip * c).collect();
        cost.extend(std::iter::repeat_n(0.0, m));
        let mut lb = model.lower.clone();
        let mut ub = model.upper.clone();
        lb.extend(model.rows.iter().map(|r| r.lower));
        ub.extend(model.rows.iter().map(|r| r.upper));
        Ok(Self {
            n,
            m,
            col_start,
            col_row,
            col_val,
            cost,
            base_lb: lb.clone(),
            base_ub: ub.clone(),
            lb,
            ub,
            flip,
            obj_offset: 0.0,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    /// Overrides the bounds of structural variable `j` until [`reset_bounds`](Self::reset_bounds).
    pub fn set_var_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lb[j] = lo;
        self.ub[j] = hi;
    }

    pub fn reset_bounds(&mut self) {
        self.lb.copy_from_slice(&self.base_lb);
        self.ub.copy_from_slice(&self.base_ub);
    }

    pub fn var_bounds(&self, j: usize) -> (f64, f64) {
        (self.lb[j], self.ub[j])
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            let mut s = 0.0;
            for p in self.col_start[j]..self.col_start[j + 1] {
                s += self.col_val[p] * y[self.col_row[p]];
            }
            s
        } else {
            -y[j - self.n]
        }
    }

    fn col_scatter(&self, j: usize, out: &mut [f64], scale: f64) {
        if j < self.n {
            for p in self.col_start[j]..self.col_start[j + 1] {
                out[self.col_row[p]] += scale * self.col_val[p];
            }
        } else {
            out[j - self.n] -= scale;
        }
    }

    fn col_nnz(&self, j: usize) -> usize {
        if j < self.n {
            self.col_start[j + 1] - self.col_start[j]
        } else {
            1
        }
    }

    pub fn solve(&mut self, opts: &SimplexOptions, warm: Option<&Basis>) -> Result<(LpSolution, Basis), SimplexError> {
        if !(opts.feas_tol > 0.0) || !(opts.opt_tol > 0.0) {
            return Err(SimplexError::InvalidOptions("tolerances must be positive".into()));
        }
        if opts.max_iters == Some(0) || opts.refactor_every == 0 {
            return Err(SimplexError::InvalidOptions("iteration counts must be positive".into()));
        }
        for j in 0..self.n + self.m {
            if self.lb[j] > self.ub[j] {
                // Empty box after bound overrides: trivially infeasible.
                return Ok(self.trivial_infeasible());
            }
        }
        let mut ws = Workspace::new(self, warm);
        let status = ws.run(self, opts)?;
        Ok(ws.finish(self, status))
    }

    fn trivial_infeasible(&self) -> (LpSolution, Basis) {
        let total = self.n + self.m;
        let values = (0..self.n).map(|j| clamp_finite(0.0, self.lb[j], self.ub[j])).collect();
        let basis = Basis {
            basic: (self.n..total).collect(),
            state: (0..total).map(|j| if j >= self.n { VarState::Basic } else { VarState::AtLower }).collect(),
        };
        (
            LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NAN,
                values,
                dual_values: vec![0.0; self.m],
                reduced_costs: vec![0.0; self.n],
                iterations: 0,
            },
            basis,
        )
    }
}

fn clamp_finite(v: f64, lo: f64, hi: f64) -> f64 {
    if lo.is_finite() && v < lo {
        lo
    } else if hi.is_finite() && v > hi {
        hi
    } else {
        v
    }
}

enum Step {
    Progress {
        degenerate: bool,
    },
    NoEntering,
    Unbounded,
    /// Pricing and the transformed column disagree; refactor and retry.
    Stale,
}

struct Workspace {
    x: Vec<f64>,
    state: Vec<VarState>,
    head: Vec<usize>,
    eta: EtaFile,
    pivots_since_refactor: usize,
    iterations: usize,
    degenerate_run: usize,
    // scratch
    y: Vec<f64>,
    alpha: Vec<f64>,
    d: Vec<f64>,
}

impl Workspace {
    fn new(lp: &LpEngine, warm: Option<&Basis>) -> Self {
        let total = lp.n + lp.m;
        let (head, mut state) = match warm {
            Some(b) if b.basic.len() == lp.m && b.state.len() == total => (b.basic.clone(), b.state.clone()),
            _ => {
                let head: Vec<usize> = (lp.n..total).collect();
                let mut state = vec![VarState::AtLower; total];
                for &j in &head {
                    state[j] = VarState::Basic;
                }
                (head, state)
            }
        };
        // Make states consistent with the basic list and the current bounds.
        let mut is_basic = vec![false; total];
        for &j in &head {
            is_basic[j] = true;
        }
        for j in 0..total {
            state[j] = if is_basic[j] { VarState::Basic } else { nonbasic_state_for(state[j], lp.lb[j], lp.ub[j]) };
        }
        let mut ws = Self {
            x: vec![0.0; total],
            state,
            head,
            eta: EtaFile::new(lp.m),
            pivots_since_refactor: 0,
            iterations: 0,
            degenerate_run: 0,
            y: vec![0.0; lp.m],
            alpha: vec![0.0; lp.m],
            d: vec![0.0; total],
        };
        for j in 0..total {
            if ws.state[j] != VarState::Basic {
                ws.x[j] = nonbasic_value(ws.state[j], lp.lb[j], lp.ub[j]);
            }
        }
        ws
    }

    /// Rebuilds the eta file from `head`. Columns that turn out dependent are
    /// swapped for the slacks of the rows they leave uncovered.
    fn refactor(&mut self, lp: &LpEngine) -> Result<(), SimplexError> {
        let m = lp.m;
        self.eta.clear();
        let mut row_taken = vec![false; m];
        let mut new_head = vec![usize::MAX; m];
        let mut structurals: Vec<usize> = Vec::new();
        for &j in &self.head {
            if j >= lp.n {
                let r = j - lp.n;
                if !row_taken[r] {
                    row_taken[r] = true;
                    new_head[r] = j;
                    self.eta.push_unit(r, -1.0);
                } else {
                    structurals.push(j);
                }
            } else {
                structurals.push(j);
            }
        }
        structurals.sort_by_key(|&j| (lp.col_nnz(j), j));
        let mut dropped = Vec::new();
        let mut col = vec![0.0; m];
        for j in structurals {
            col.iter_mut().for_each(|v| *v = 0.0);
            lp.col_scatter(j, &mut col, 1.0);
            self.eta.ftran(&mut col);
            let mut best = None;
            let mut best_abs = 0.0;
            let col_max = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for r in 0..m {
                if !row_taken[r] && col[r].abs() > best_abs {
                    best_abs = col[r].abs();
                    best = Some(r);
                }
            }
            match best {
                Some(r) if best_abs > PIVOT_TOL && best_abs >= 1e-7 * col_max => {
                    row_taken[r] = true;
                    new_head[r] = j;
                    self.eta.push(r, &col);
                }
                _ => dropped.push(j),
            }
        }
        for r in 0..m {
            if !row_taken[r] {
                let s = lp.n + r;
                // The slack may have been nonbasic; it enters at row r.
                new_head[r] = s;
                self.state[s] = VarState::Basic;
                self.eta.push_unit(r, -1.0);
            }
        }
        for j in dropped {
            let st = nonbasic_state_for(VarState::AtLower, lp.lb[j], lp.ub[j]);
            self.state[j] = st;
            self.x[j] = nonbasic_value(st, lp.lb[j], lp.ub[j]);
        }
        if new_head.contains(&usize::MAX) {
            return Err(SimplexError::NumericalFailure("basis rebuild left a row uncovered".into()));
        }
        self.head = new_head;
        self.pivots_since_refactor = 0;
        self.recompute_basic_values(lp);
        Ok(())
    }

    fn recompute_basic_values(&mut self, lp: &LpEngine) {
        let mut rhs = vec![0.0; lp.m];
        for j in 0..lp.n + lp.m {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                lp.col_scatter(j, &mut rhs, -self.x[j]);
            }
        }
        self.eta.ftran(&mut rhs);
        for (r, &j) in self.head.iter().enumerate() {
            self.x[j] = rhs[r];
        }
    }

    fn infeasibility(&self, lp: &LpEngine, tol: f64) -> f64 {
        self.head
            .iter()
            .map(|&j| {
                let v = self.x[j];
                if v < lp.lb[j] - tol {
                    lp.lb[j] - v
                } else if v > lp.ub[j] + tol {
                    v - lp.ub[j]
                } else {
                    0.0
                }
            })
            .sum()
    }

    fn run(&mut self, lp: &LpEngine, opts: &SimplexOptions) -> Result<LpStatus, SimplexError> {
        let max_iters = opts.max_iters.unwrap_or(50 * (lp.m + lp.n + lp.m).max(1));
        self.refactor(lp)?;
        let mut confirmations = 0;
        loop {
            if self.iterations >= max_iters {
                return Ok(LpStatus::IterationLimit);
            }
            if self.pivots_since_refactor >= opts.refactor_every {
                self.refactor(lp)?;
            }
            let phase1 = self.infeasibility(lp, opts.feas_tol) > 0.0;
            match self.iterate(lp, opts, phase1)? {
                Step::Progress { degenerate } => {
                    self.iterations += 1;
                    if degenerate {
                        self.degenerate_run += 1;
                    } else {
                        self.degenerate_run = 0;
                    }
                    if opts.trace {
                        log::trace!(
                            "iter {} phase {} obj {:.12e} infeas {:.3e}",
                            self.iterations,
                            if phase1 { 1 } else { 2 },
                            self.internal_objective(lp),
                            self.infeasibility(lp, 0.0)
                        );
                    }
                }
                Step::Unbounded => return Ok(LpStatus::Unbounded),
                Step::Stale => {
                    if self.pivots_since_refactor == 0 {
                        return Err(SimplexError::NumericalFailure("phase 1 ray without breakpoint".into()));
                    }
                    self.refactor(lp)?;
                }
                Step::NoEntering => {
                    // Confirm on a fresh factorisation before declaring a result.
                    if self.pivots_since_refactor > 0 && confirmations < 3 {
                        confirmations += 1;
                        self.refactor(lp)?;
                        continue;
                    }
                    return Ok(if phase1 { LpStatus::Infeasible } else { LpStatus::Optimal });
                }
            }
        }
    }

    fn internal_objective(&self, lp: &LpEngine) -> f64 {
        (0..lp.n).map(|j| lp.cost[j] * self.x[j]).sum::<f64>() + lp.obj_offset
    }

    fn iterate(&mut self, lp: &LpEngine, opts: &SimplexOptions, phase1: bool) -> Result<Step, SimplexError> {
        let m = lp.m;
        let total = lp.n + m;
        let tol = opts.feas_tol;
        // Basic costs.
        for (r, &j) in self.head.iter().enumerate() {
            self.y[r] = if phase1 {
                let v = self.x[j];
                if v < lp.lb[j] - tol {
                    -1.0
                } else if v > lp.ub[j] + tol {
                    1.0
                } else {
                    0.0
                }
            } else {
                lp.cost[j]
            };
        }
        self.eta.btran(&mut self.y);

        let bland = self.degenerate_run >= opts.bland_threshold;
        let mut enter: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..total {
            let st = self.state[j];
            if st == VarState::Basic || lp.lb[j] == lp.ub[j] {
                continue;
            }
            let c = if phase1 { 0.0 } else { lp.cost[j] };
            let dj = c - lp.col_dot(j, &self.y);
            self.d[j] = dj;
            let eligible = match st {
                VarState::AtLower => dj < -opts.opt_tol,
                VarState::AtUpper => dj > opts.opt_tol,
                VarState::Free => dj.abs() > opts.opt_tol,
                VarState::Basic => false,
            };
            if !eligible {
                continue;
            }
            if bland {
                enter = Some((j, dj));
                break;
            }
            if dj.abs() > best_score {
                best_score = dj.abs();
                enter = Some((j, dj));
            }
        }
        let Some((q, dq)) = enter else {
            return Ok(Step::NoEntering);
        };
        let dir = if dq < 0.0 { 1.0 } else { -1.0 };

        self.alpha.iter_mut().for_each(|v| *v = 0.0);
        lp.col_scatter(q, &mut self.alpha, 1.0);
        self.eta.ftran(&mut self.alpha);

        // Ratio test. Basic r moves at rate delta_r = -dir * alpha_r.
        let range = lp.ub[q] - lp.lb[q];
        let mut theta_max = f64::INFINITY;
        for r in 0..m {
            let a = self.alpha[r];
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let delta = -dir * a;
            if let Some(limit) = self.breakpoint(lp, r, delta, if bland { 0.0 } else { tol }, phase1, tol) {
                theta_max = theta_max.min(limit);
            }
        }
        let mut leave: Option<(usize, f64, bool)> = None; // (row, theta, to_upper)
        if theta_max.is_finite() {
            let mut best_abs = 0.0;
            let mut best_var = usize::MAX;
            for r in 0..m {
                let a = self.alpha[r];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let delta = -dir * a;
                let Some(ratio) = self.breakpoint(lp, r, delta, 0.0, phase1, tol) else {
                    continue;
                };
                if ratio > theta_max {
                    continue;
                }
                let to_upper = self.leaves_at_upper(lp, r, delta, phase1, tol);
                let j = self.head[r];
                let better = if bland { j < best_var } else { a.abs() > best_abs };
                if better {
                    best_abs = a.abs();
                    best_var = j;
                    leave = Some((r, ratio.max(0.0), to_upper));
                }
            }
        }

        let flip_theta = if range.is_finite() { Some(range) } else { None };
        match (leave, flip_theta) {
            (None, None) => {
                if phase1 {
                    // A phase-1 improving ray always crosses the bound of some
                    // infeasible basic variable.
                    return Ok(Step::Stale);
                }
                Ok(Step::Unbounded)
            }
            (None, Some(t)) => {
                self.bound_flip(lp, q, dir, t);
                Ok(Step::Progress { degenerate: false })
            }
            (Some((_, theta, _)), Some(t)) if t <= theta => {
                self.bound_flip(lp, q, dir, t);
                Ok(Step::Progress { degenerate: t <= 1e-12 })
            }
            (Some((r, theta, to_upper)), _) => {
                self.pivot(lp, q, dir, r, theta, to_upper);
                Ok(Step::Progress { degenerate: theta <= 1e-12 })
            }
        }
    }

    /// Step length at which basic row `r` hits the bound that limits it, with
    /// `slack` added to the distance (Harris pass 1), or `None` when unlimited.
    fn breakpoint(&self, lp: &LpEngine, r: usize, delta: f64, slack: f64, phase1: bool, tol: f64) -> Option<f64> {
        let j = self.head[r];
        let v = self.x[j];
        let (lo, hi) = (lp.lb[j], lp.ub[j]);
        if phase1 && v < lo - tol {
            // Below its lower bound: only a breakpoint when moving up.
            return (delta > 0.0).then(|| (lo - v + slack) / delta);
        }
        if phase1 && v > hi + tol {
            return (delta < 0.0).then(|| (v - hi + slack) / -delta);
        }
        if delta < 0.0 && lo.is_finite() {
            Some(((v - lo).max(0.0) + slack) / -delta)
        } else if delta > 0.0 && hi.is_finite() {
            Some(((hi - v).max(0.0) + slack) / delta)
        } else {
            None
        }
    }

    fn leaves_at_upper(&self, lp: &LpEngine, r: usize, delta: f64, phase1: bool, tol: f64) -> bool {
        let j = self.head[r];
        let v = self.x[j];
        if phase1 && v < lp.lb[j] - tol {
            return false;
        }
        if phase1 && v > lp.ub[j] + tol {
            return true;
        }
        delta > 0.0
    }

    fn bound_flip(&mut self, lp: &LpEngine, q: usize, dir: f64, theta: f64) {
        for r in 0..lp.m {
            let a = self.alpha[r];
            if a != 0.0 {
                let j = self.head[r];
                self.x[j] -= dir * a * theta;
            }
        }
        if dir > 0.0 {
            self.state[q] = VarState::AtUpper;
            self.x[q] = lp.ub[q];
        } else {
            self.state[q] = VarState::AtLower;
            self.x[q] = lp.lb[q];
        }
    }

    fn pivot(&mut self, lp: &LpEngine, q: usize, dir: f64, r: usize, theta: f64, to_upper: bool) {
        for i in 0..lp.m {
            let a = self.alpha[i];
            if a != 0.0 {
                let j = self.head[i];
                self.x[j] -= dir * a * theta;
            }
        }
        self.x[q] += dir * theta;
        let leaving = self.head[r];
        if to_upper {
            self.state[leaving] = VarState::AtUpper;
            self.x[leaving] = lp.ub[leaving];
        } else {
            self.state[leaving] = VarState::AtLower;
            self.x[leaving] = lp.lb[leaving];
        }
        if !self.x[leaving].is_finite() {
            // Leaving through an infinite bound cannot happen; keep it free at zero.
            self.state[leaving] = VarState::Free;
            self.x[leaving] = 0.0;
        }
        self.state[q] = VarState::Basic;
        self.head[r] = q;
        self.eta.push(r, &self.alpha);
        self.pivots_since_refactor += 1;
    }

    fn finish(mut self, lp: &LpEngine, status: LpStatus) -> (LpSolution, Basis) {
        // Duals from the final basis with phase-2 costs.
        for (r, &j) in self.head.iter().enumerate() {
            self.y[r] = lp.cost[j];
        }
        self.eta.btran(&mut self.y);
        let total = lp.n + lp.m;
        let reduced: Vec<f64> =
            (0..lp.n)
                .map(|j| {
                    if self.state[j] == VarState::Basic {
                        0.0
                    } else {
                        lp.flip * (lp.cost[j] - lp.col_dot(j, &self.y))
                    }
                })
                .collect();
        let duals: Vec<f64> = self.y.iter().map(|&v| lp.flip * v).collect();
        let values: Vec<f64> = self.x[..lp.n].to_vec();
        let objective = match status {
            LpStatus::Optimal | LpStatus::IterationLimit => lp.flip * self.internal_objective(lp),
            LpStatus::Unbounded => lp.flip * f64::NEG_INFINITY,
            LpStatus::Infeasible => f64::NAN,
        };
        let basis = Basis { basic: self.head.clone(), state: self.state[..total].to_vec() };
        (
            LpSolution {
                status,
                objective,
                values,
                dual_values: duals,
                reduced_costs: reduced,
                iterations: self.iterations,
            },
            basis,
        )
    }
}

fn nonbasic_state_for(prev: VarState, lo: f64, hi: f64) -> VarState {
    match prev {
        VarState::AtUpper if hi.is_finite() => VarState::AtUpper,
        _ if lo.is_finite() => VarState::AtLower,
        _ if hi.is_finite() => VarState::AtUpper,
        _ => VarState::Free,
    }
}

fn nonbasic_value(st: VarState, lo: f64, hi: f64) -> f64 {
    match st {
        VarState::AtLower => lo,
        VarState::AtUpper => hi,
        _ => 0.0,
    }
}

/// Residuals of the optimality conditions for an LP solution of `m`:
/// `(primal infeasibility, dual sign violation, complementary slackness)`.
pub fn kkt_residuals(m: &MilpModel, sol: &LpSolution) -> (f64, f64, f64) {
    let primal = m.max_violation(&sol.values);
    // Work in minimisation form: c_min = -sign * c, y_min = -sign * dual.
    let s = -m.sense.sign();
    let n = m.num_vars();
    let mut r = vec![0.0; n];
    for j in 0..n {
        r[j] = s * m.objective[j];
    }
    for (i, row) in m.rows.iter().enumerate() {
        let yi = s * sol.dual_values[i];
        for &(j, a) in &row.coefs {
            r[j] -= yi * a;
        }
    }
    let mut dual: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let mut check = |v: f64, lo: f64, hi: f64, rc: f64| {
        // rc > 0 needs v at lower, rc < 0 needs v at upper.
        if rc > 0.0 {
            if lo.is_finite() {
                comp = comp.max((rc * (v - lo)).abs());
            } else {
                dual = dual.max(rc);
            }
        } else if rc < 0.0 {
            if hi.is_finite() {
                comp = comp.max((rc * (hi - v)).abs());
            } else {
                dual = dual.max(-rc);
            }
        }
    };
    for j in 0..n {
        check(sol.values[j], m.lower[j], m.upper[j], r[j]);
    }
    for (i, row) in m.rows.iter().enumerate() {
        // Slack s_i = a_i x has reduced cost y_i in minimisation form.
        let yi = s * sol.dual_values[i];
        check(row.activity(&sol.values), row.lower, row.upper, yi);
    }
    (primal, dual, comp)
}
