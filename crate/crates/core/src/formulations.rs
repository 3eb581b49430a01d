//! Model builders and portfolio extraction.
//!
//! Variable layout shared by the clustering models (`n` assets, `T` scenarios):
//!
//! | block   | count      | kind                          |
//! |---------|------------|-------------------------------|
//! | x       | n          | continuous in [0, 1]          |
//! | z_jj    | n          | binary (representatives)      |
//! | z_ij    | n(n-1)     | continuous >= 0, i != j       |
//! | eta     | 1          | free                          |
//! | d_t     | T          | continuous >= 0 (shortfalls)  |
//!
//! Only the representative indicators are binary: with the representatives
//! fixed, some optimal assignment sends every asset to a nearest
//! representative, so the off-diagonal assignment variables may be relaxed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::branch_bound::{solve_milp, BnbError, BnbOptions};
use crate::market_data::{DistanceMatrix, ScenarioSet};
use crate::model_ir::{brute_force_milp, MilpModel, MilpSolution, MilpStatus, ModelError, Sense, VarKind};
use crate::simplex::{cvar_primal_oracle, solve_lp, SimplexOptions};

const INF: f64 = f64::INFINITY;

#[derive(Debug, Error, PartialEq)]
pub enum FormulationError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("no portfolio reaches the expected-return floor mu0 = {0}")]
    InfeasibleAtMu0(f64),
    #[error("solution is fractional in binary variable {0}")]
    FractionalSolution(String),
    #[error("representative set is empty")]
    EmptySet,
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("solver stopped without a feasible point ({0})")]
    NoSolution(String),
}

impl From<BnbError> for FormulationError {
    fn from(e: BnbError) -> Self {
        FormulationError::Solver(e.to_string())
    }
}

impl From<ModelError> for FormulationError {
    fn from(e: ModelError) -> Self {
        FormulationError::Solver(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FormulationError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of representatives (and of assets held).
    pub p: usize,
    /// CVaR tolerance level in (0, 1].
    pub beta: f64,
    /// Floor on expected portfolio return; `-inf` drops the constraint.
    pub mu0: f64,
    /// Clustering effect in [0, 1]: 1 is the tightest clustering budget.
    pub gamma: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ModelConfig {
    /// Lower bound `1/n` and upper bound 1 on every selected asset.
    pub fn with_default_bounds(n: usize, p: usize, beta: f64, mu0: f64, gamma: f64) -> Self {
        let l = 1.0 / n.max(1) as f64;
        Self { p, beta, mu0, gamma, lower: vec![l; n], upper: vec![1.0; n] }
    }

    /// Checks the configuration against `n` assets. Returns warnings for
    /// setups that are well formed but cannot be feasible.
    pub fn validate(&self, n: usize) -> Result<Vec<String>> {
        if self.lower.len() != n || self.upper.len() != n {
            return Err(FormulationError::DimensionMismatch(format!(
                "{} lower / {} upper bounds for {n} assets",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.p < 1 || self.p > n {
            return Err(FormulationError::InvalidConfig(format!("p = {} outside 1..={n}", self.p)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(FormulationError::InvalidConfig(format!("beta = {} outside (0, 1]", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(FormulationError::InvalidConfig(format!("gamma = {} outside [0, 1]", self.gamma)));
        }
        if self.mu0.is_nan() || self.mu0 == INF {
            return Err(FormulationError::InvalidConfig(format!("mu0 = {} is not usable", self.mu0)));
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if !(0.0 <= l && l <= u && u <= 1.0) {
                return Err(FormulationError::InvalidConfig(format!(
                    "asset {j}: bounds [{l}, {u}] not within 0 <= l <= u <= 1"
                )));
            }
        }
        let mut warnings = Vec::new();
        let mut ups = self.upper.clone();
        ups.sort_by(|a, b| b.total_cmp(a));
        if ups.iter().take(self.p).sum::<f64>() < 1.0 {
            warnings.push(format!("the {} largest upper bounds sum to less than 1: infeasible", self.p));
        }
        let mut lows = self.lower.clone();
        lows.sort_by(|a, b| a.total_cmp(b));
        if lows.iter().take(self.p).sum::<f64>() > 1.0 {
            warnings.push(format!("the {} smallest lower bounds sum to more than 1: infeasible", self.p));
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Unified,
    PMedian,
    CvarCc,
    PureCvar,
    /// CVaR dual with the portfolio pinned (duality checks).
    CvarFixed,
}

/// Where each variable block lives in a built model.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub kind: ModelKind,
    pub n: usize,
    pub t: usize,
    pub x: usize,
    /// Representative (or selection) indicators, `n` consecutive binaries.
    pub z_diag: Option<usize>,
    /// Off-diagonal assignment block, `n(n-1)` variables in row-major order.
    pub z_off: Option<usize>,
    pub eta: Option<usize>,
    pub shortfall: Option<usize>,
    /// Index of the clustering budget row, when present.
    pub budget_row: Option<usize>,
}

impl Layout {
    /// Index of `z_ij` (`i != j`).
    pub fn z_off_index(&self, i: usize, j: usize) -> Option<usize> {
        debug_assert!(i != j);
        self.z_off.map(|base| base + i * (self.n - 1) + if j < i { j } else { j - 1 })
    }

    pub fn z_index(&self, i: usize, j: usize) -> Option<usize> {
        if i == j {
            self.z_diag.map(|b| b + j)
        } else {
            self.z_off_index(i, j)
        }
    }

    pub fn weights<'a>(&self, values: &'a [f64]) -> &'a [f64] {
        &values[self.x..self.x + self.n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Formulation {
    pub model: MilpModel,
    pub layout: Layout,
}

fn check_dims(s: &ScenarioSet, d: Option<&DistanceMatrix>, cfg: &ModelConfig) -> Result<usize> {
    let n = s.n_assets();
    if let Some(d) = d {
        if d.n() != n {
            return Err(FormulationError::DimensionMismatch(format!(
                "{} scenario assets vs {} distance rows",
                n,
                d.n()
            )));
        }
    }
    cfg.validate(n)?;
    Ok(n)
}

struct Builder {
    m: MilpModel,
    layout: Layout,
}

impl Builder {
    fn new(kind: ModelKind, sense: Sense, n: usize, t: usize) -> Self {
        Self {
            m: MilpModel::new(sense),
            layout: Layout {
                kind,
                n,
                t,
                x: 0,
                z_diag: None,
                z_off: None,
                eta: None,
                shortfall: None,
                budget_row: None,
            },
        }
    }

    fn weights(&mut self) {
        self.layout.x = self.m.num_vars();
        for j in 0..self.layout.n {
            self.m.add_var(format!("x{j}"), VarKind::Continuous, 0.0, 1.0, 0.0);
        }
    }

    fn representatives(&mut self, name: &str) {
        self.layout.z_diag = Some(self.m.num_vars());
        for j in 0..self.layout.n {
            self.m.add_var(format!("{name}{j}"), VarKind::Binary, 0.0, 1.0, 0.0);
        }
    }

    fn assignments(&mut self, d: &DistanceMatrix, minimize_fp: bool) {
        let n = self.layout.n;
        self.layout.z_off = Some(self.m.num_vars());
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let c = if minimize_fp { d.get(i, j) } else { 0.0 };
                    self.m.add_var(format!("z{i}_{j}"), VarKind::Continuous, 0.0, INF, c);
                }
            }
        }
    }

    fn cvar_vars(&mut self, s: &ScenarioSet, beta: f64) {
        self.layout.eta = Some(self.m.add_var("eta", VarKind::Continuous, -INF, INF, 1.0));
        self.layout.shortfall = Some(self.m.num_vars());
        for t in 0..self.layout.t {
            self.m.add_var(format!("dm{t}"), VarKind::Continuous, 0.0, INF, -s.probs[t] / beta);
        }
    }

    fn budget_row(&mut self) {
        let coefs: Vec<(usize, f64)> = (0..self.layout.n).map(|j| (self.layout.x + j, 1.0)).collect();
        self.m.add_row("budget", &coefs, 1.0, 1.0);
    }

    /// d_t - eta + sum_j r_jt x_j >= 0
    fn shortfall_rows(&mut self, s: &ScenarioSet) {
        let eta = self.layout.eta.expect("cvar vars first");
        let d0 = self.layout.shortfall.expect("cvar vars first");
        for t in 0..self.layout.t {
            let mut coefs = vec![(d0 + t, 1.0), (eta, -1.0)];
            coefs.extend((0..self.layout.n).map(|j| (self.layout.x + j, s.returns[[t, j]])));
            self.m.add_row(format!("cvar{t}"), &coefs, 0.0, INF);
        }
    }

    fn return_floor(&mut self, s: &ScenarioSet, mu0: f64) {
        if mu0 == f64::NEG_INFINITY {
            return;
        }
        let coefs: Vec<(usize, f64)> = (0..self.layout.n).map(|j| (self.layout.x + j, s.mu[j])).collect();
        self.m.add_row("mu0", &coefs, mu0, INF);
    }

    fn fp_budget(&mut self, d: &DistanceMatrix, fp0: f64) {
        if fp0 == INF {
            return;
        }
        let n = self.layout.n;
        let mut coefs = Vec::with_capacity(n * (n - 1));
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    coefs.push((self.layout.z_off_index(i, j).expect("assignments"), d.get(i, j)));
                }
            }
        }
        if coefs.iter().all(|&(_, c)| c == 0.0) {
            // n = 1 or all distances zero: the budget is vacuous (0 <= fp0).
            return;
        }
        self.layout.budget_row = Some(self.m.add_row("fp0", &coefs, -INF, fp0));
    }

    fn cardinality(&mut self, p: usize) {
        let z = self.layout.z_diag.expect("representatives first");
        let coefs: Vec<(usize, f64)> = (0..self.layout.n).map(|j| (z + j, 1.0)).collect();
        let r = self.m.add_row("card", &coefs, p as f64, p as f64);
        self.m.cardinality_row = Some(r);
    }

    /// Each asset assigned once, only to representatives.
    fn assignment_rows(&mut self) {
        let n = self.layout.n;
        let z = self.layout.z_diag.expect("representatives first");
        for i in 0..n {
            let coefs: Vec<(usize, f64)> =
                (0..n).map(|j| (self.layout.z_index(i, j).expect("assignments"), 1.0)).collect();
            self.m.add_row(format!("assign{i}"), &coefs, 1.0, 1.0);
        }
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let zij = self.layout.z_off_index(i, j).expect("assignments");
                    self.m.add_row(format!("link{i}_{j}"), &[(zij, 1.0), (z + j, -1.0)], -INF, 0.0);
                }
            }
        }
    }

    /// l_j z_j <= x_j <= u_j z_j, two rows per asset.
    fn box_links(&mut self, cfg: &ModelConfig) {
        let z = self.layout.z_diag.expect("representatives first");
        for j in 0..self.layout.n {
            let x = self.layout.x + j;
            self.m.add_row(format!("lo{j}"), &[(x, 1.0), (z + j, -cfg.lower[j])], 0.0, INF);
        }
        for j in 0..self.layout.n {
            let x = self.layout.x + j;
            self.m.add_row(format!("hi{j}"), &[(x, 1.0), (z + j, -cfg.upper[j])], -INF, 0.0);
        }
    }

    fn finish(self) -> Formulation {
        debug_assert!(self.m.validate().is_empty(), "{:?}", self.m.validate());
        Formulation { model: self.m, layout: self.layout }
    }
}

/// Clustering-constrained CVaR model: maximise `eta - (1/beta) sum p_t d_t`
/// subject to the scenario shortfall rows, the return floor, the clustering
/// budget `sum d_ij z_ij <= fp0` and the representative/assignment system.
/// `fp0 = +inf` omits the budget row.
pub fn build_unified(s: &ScenarioSet, d: &DistanceMatrix, cfg: &ModelConfig, fp0: f64) -> Result<Formulation> {
    let n = check_dims(s, Some(d), cfg)?;
    if fp0.is_nan() {
        return Err(FormulationError::InvalidConfig("fp0 is NaN".into()));
    }
    let mut b = Builder::new(ModelKind::Unified, Sense::Maximize, n, s.n_scenarios());
    b.weights();
    b.representatives("z");
    // Diagonal names follow the z_i_j pattern.
    for j in 0..n {
        b.m.var_names[b.layout.z_diag.unwrap() + j] = format!("z{j}_{j}");
    }
    b.assignments(d, false);
    b.cvar_vars(s, cfg.beta);
    b.budget_row();
    b.shortfall_rows(s);
    b.return_floor(s, cfg.mu0);
    b.fp_budget(d, fp0);
    b.cardinality(cfg.p);
    b.assignment_rows();
    b.box_links(cfg);
    Ok(b.finish())
}

/// p-median over the same feasible region: minimise `sum d_ij z_ij`.
pub fn build_pmedian(s: &ScenarioSet, d: &DistanceMatrix, cfg: &ModelConfig) -> Result<Formulation> {
    let n = check_dims(s, Some(d), cfg)?;
    let mut b = Builder::new(ModelKind::PMedian, Sense::Minimize, n, s.n_scenarios());
    b.weights();
    b.representatives("z");
    for j in 0..n {
        b.m.var_names[b.layout.z_diag.unwrap() + j] = format!("z{j}_{j}");
    }
    b.assignments(d, true);
    b.budget_row();
    b.return_floor(s, cfg.mu0);
    b.cardinality(cfg.p);
    b.assignment_rows();
    b.box_links(cfg);
    Ok(b.finish())
}

/// Cardinality-constrained CVaR: exactly `p` assets held, each within its box.
pub fn build_cvar_cc(s: &ScenarioSet, cfg: &ModelConfig) -> Result<Formulation> {
    let n = check_dims(s, None, cfg)?;
    let mut b = Builder::new(ModelKind::CvarCc, Sense::Maximize, n, s.n_scenarios());
    b.weights();
    b.representatives("s");
    b.cvar_vars(s, cfg.beta);
    b.budget_row();
    b.shortfall_rows(s);
    b.return_floor(s, cfg.mu0);
    b.cardinality(cfg.p);
    b.box_links(cfg);
    Ok(b.finish())
}

/// Plain CVaR LP over the simplex with the return floor; `p`, `lower` and
/// `upper` are ignored.
pub fn build_pure_cvar(s: &ScenarioSet, cfg: &ModelConfig) -> Result<Formulation> {
    let n = s.n_assets();
    if !(cfg.beta > 0.0 && cfg.beta <= 1.0) {
        return Err(FormulationError::InvalidConfig(format!("beta = {} outside (0, 1]", cfg.beta)));
    }
    if cfg.mu0.is_nan() || cfg.mu0 == INF {
        return Err(FormulationError::InvalidConfig(format!("mu0 = {} is not usable", cfg.mu0)));
    }
    let mut b = Builder::new(ModelKind::PureCvar, Sense::Maximize, n, s.n_scenarios());
    b.weights();
    b.cvar_vars(s, cfg.beta);
    b.budget_row();
    b.shortfall_rows(s);
    b.return_floor(s, cfg.mu0);
    Ok(b.finish())
}

/// The CVaR dual LP with `x` pinned: its optimum is the CVaR of `x`.
pub fn build_cvar_fixed(s: &ScenarioSet, x: &[f64], beta: f64) -> Result<Formulation> {
    let n = s.n_assets();
    if x.len() != n {
        return Err(FormulationError::DimensionMismatch(format!("{} weights for {n} assets", x.len())));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(FormulationError::InvalidConfig(format!("beta = {beta} outside (0, 1]")));
    }
    let mut b = Builder::new(ModelKind::CvarFixed, Sense::Maximize, n, s.n_scenarios());
    b.weights();
    b.m.lower[..n].copy_from_slice(x);
    b.m.upper[..n].copy_from_slice(x);
    b.cvar_vars(s, beta);
    b.shortfall_rows(s);
    Ok(b.finish())
}

/// Sum over all assets of the distance to the nearest member of `reps`.
pub fn evaluate_fp(reps: &[usize], d: &DistanceMatrix) -> Result<f64> {
    if reps.is_empty() {
        return Err(FormulationError::EmptySet);
    }
    let n = d.n();
    if let Some(&bad) = reps.iter().find(|&&j| j >= n) {
        return Err(FormulationError::DimensionMismatch(format!("representative {bad} >= n = {n}")));
    }
    Ok(nearest_assignment(reps, d).iter().enumerate().map(|(i, &j)| if i == j { 0.0 } else { d.get(i, j) }).sum())
}

/// Nearest representative of every asset; representatives map to themselves
/// and ties go to the lowest index.
pub fn nearest_assignment(reps: &[usize], d: &DistanceMatrix) -> Vec<usize> {
    let mut sorted = reps.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    (0..d.n())
        .map(|i| {
            if sorted.binary_search(&i).is_ok() {
                return i;
            }
            let mut best = sorted[0];
            for &j in &sorted[1..] {
                if d.get(i, j) < d.get(i, best) {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Clustering budget endpoints and their interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpBounds {
    pub fp_lower: f64,
    pub fp_upper: f64,
    pub fp0: f64,
}

impl FpBounds {
    pub fn new(fp_lower: f64, fp_upper: f64, gamma: f64) -> Self {
        Self { fp_lower, fp_upper, fp0: interpolate_fp0(fp_lower, fp_upper, gamma) }
    }

    pub fn at_gamma(&self, gamma: f64) -> Self {
        Self::new(self.fp_lower, self.fp_upper, gamma)
    }
}

pub fn interpolate_fp0(fp_lower: f64, fp_upper: f64, gamma: f64) -> f64 {
    gamma * fp_lower + (1.0 - gamma) * fp_upper
}

/// Anything that can solve a [`MilpModel`], optionally from a warm start.
pub trait MilpSolver {
    fn solve(&self, m: &MilpModel, warm_start: Option<Vec<f64>>) -> Result<MilpSolution>;
}

impl MilpSolver for BnbOptions {
    fn solve(&self, m: &MilpModel, warm_start: Option<Vec<f64>>) -> Result<MilpSolution> {
        let mut opts = self.clone();
        opts.warm_start = warm_start;
        Ok(solve_milp(m, &opts)?)
    }
}

/// Enumeration solver; only for small binary counts.
#[derive(Debug, Clone, Default)]
pub struct BruteForce(pub SimplexOptions);

impl MilpSolver for BruteForce {
    fn solve(&self, m: &MilpModel, _warm_start: Option<Vec<f64>>) -> Result<MilpSolution> {
        Ok(brute_force_milp(m, |fixed| {
            solve_lp(fixed, &self.0, None).map(|(s, _)| s).map_err(|e| ModelError::Lp(e.to_string()))
        })?)
    }
}

fn require_solution(sol: &MilpSolution, what: &str) -> Result<()> {
    match sol.status {
        MilpStatus::Optimal | MilpStatus::FeasibleTimeLimit => Ok(()),
        MilpStatus::NoSolutionLimit => Err(FormulationError::NoSolution(what.to_string())),
        MilpStatus::Infeasible => Err(FormulationError::Solver(format!("{what} is infeasible"))),
        MilpStatus::Unbounded => Err(FormulationError::Solver(format!("{what} is unbounded"))),
    }
}

/// Representatives read from the binary block of a solution.
pub fn selected(f: &Formulation, values: &[f64]) -> Vec<usize> {
    match f.layout.z_diag {
        Some(z) => (0..f.layout.n).filter(|&j| values[z + j] > 0.5).collect(),
        None => (0..f.layout.n).filter(|&j| values[f.layout.x + j] > 1e-9).collect(),
    }
}

/// Greedy p-median seed: repeatedly add the vertex that lowers the clustering
/// cost the most (lowest index on ties).
pub fn greedy_pmedian(d: &DistanceMatrix, p: usize) -> Vec<usize> {
    let n = d.n();
    let mut reps: Vec<usize> = Vec::with_capacity(p);
    let mut nearest = vec![INF; n];
    for _ in 0..p.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..n {
            if reps.contains(&c) {
                continue;
            }
            let cost: f64 = (0..n).map(|i| nearest[i].min(if i == c { 0.0 } else { d.get(i, c) })).sum();
            if best.is_none_or(|(_, bc)| cost < bc) {
                best = Some((c, cost));
            }
        }
        let (c, _) = best.expect("candidates remain");
        reps.push(c);
        for i in 0..n {
            nearest[i] = nearest[i].min(if i == c { 0.0 } else { d.get(i, c) });
        }
    }
    reps.sort_unstable();
    reps
}

/// Completes a representative choice into a full feasible assignment of `f`
/// by fixing the binaries and solving the remaining LP. `None` when the LP is
/// infeasible (e.g. the return floor cannot be met with these assets).
pub fn complete_with_representatives(f: &Formulation, reps: &[usize]) -> Result<Option<Vec<f64>>> {
    let Some(z) = f.layout.z_diag else {
        return Ok(None);
    };
    let assignment: Vec<(usize, bool)> = (0..f.layout.n).map(|j| (z + j, reps.contains(&j))).collect();
    let fixed = f.model.fix_binaries(&assignment)?;
    let (sol, _) =
        solve_lp(&fixed, &SimplexOptions::default(), None).map_err(|e| FormulationError::Solver(e.to_string()))?;
    Ok((sol.status == crate::model_ir::LpStatus::Optimal).then_some(sol.values))
}

/// Result of the two bound problems.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsResult {
    pub bounds: FpBounds,
    pub pmedian: MilpSolution,
    pub pmedian_reps: Vec<usize>,
    pub cvar_cc: MilpSolution,
    pub cvar_cc_reps: Vec<usize>,
}

/// Solves the p-median problem (tightest feasible budget) and the
/// cardinality-constrained CVaR problem (budget beyond which clustering no
/// longer binds), then interpolates with `cfg.gamma`.
pub fn compute_bounds(
    s: &ScenarioSet,
    d: &DistanceMatrix,
    cfg: &ModelConfig,
    solver: &dyn MilpSolver,
) -> Result<BoundsResult> {
    check_dims(s, Some(d), cfg)?;
    let pm = build_pmedian(s, d, cfg)?;
    let seed = complete_with_representatives(&pm, &greedy_pmedian(d, cfg.p))?;
    let pm_sol = solver.solve(&pm.model, seed)?;
    if pm_sol.status == MilpStatus::Infeasible {
        return Err(FormulationError::InfeasibleAtMu0(cfg.mu0));
    }
    require_solution(&pm_sol, "p-median bound problem")?;
    let mut pm_reps = selected(&pm, &pm_sol.values);
    let mut fp_lower = pm_sol.objective;

    let cc = build_cvar_cc(s, cfg)?;
    let cc_seed = complete_with_representatives(&cc, &top_mean_assets(s, cfg.p))?;
    let cc_sol = solver.solve(&cc.model, cc_seed)?;
    if cc_sol.status == MilpStatus::Infeasible {
        return Err(FormulationError::InfeasibleAtMu0(cfg.mu0));
    }
    require_solution(&cc_sol, "cardinality-constrained CVaR bound problem")?;
    let cc_reps = selected(&cc, &cc_sol.values);
    let fp_upper = evaluate_fp(&cc_reps, d)?;
    if fp_upper < fp_lower {
        // Only possible when the p-median solve stopped early: the CVaR-CC
        // selection is itself a better p-median point.
        fp_lower = fp_upper;
        pm_reps = cc_reps.clone();
    }
    Ok(BoundsResult {
        bounds: FpBounds::new(fp_lower, fp_upper, cfg.gamma),
        pmedian: pm_sol,
        pmedian_reps: pm_reps,
        cvar_cc: cc_sol,
        cvar_cc_reps: cc_reps,
    })
}

/// The `p` assets with the highest expected return (lowest index on ties).
pub fn top_mean_assets(s: &ScenarioSet, p: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..s.n_assets()).collect();
    idx.sort_by(|&a, &b| s.mu[b].total_cmp(&s.mu[a]).then(a.cmp(&b)));
    let mut top: Vec<usize> = idx.into_iter().take(p).collect();
    top.sort_unstable();
    top
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub weights: Vec<f64>,
    pub representatives: Vec<usize>,
    /// Representative of each asset.
    pub assignment: Vec<usize>,
    pub fp_value: f64,
    pub cvar_value: f64,
    pub mean_return: f64,
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shortfalls: Vec<f64>,
}

impl Portfolio {
    /// Invariant violations for a portfolio produced by a model with
    /// representatives (`p` selected, weights inside their boxes).
    pub fn check(&self, cfg: &ModelConfig) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.weights.len();
        if self.weights.iter().any(|&w| w < 0.0) {
            out.push("negative weight".into());
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-8 {
            out.push(format!("weights sum to {sum}"));
        }
        if self.representatives.len() != cfg.p {
            out.push(format!("{} representatives, expected {}", self.representatives.len(), cfg.p));
        }
        for j in 0..n {
            let w = self.weights[j];
            if self.representatives.contains(&j) {
                if w < cfg.lower[j] - 1e-8 || w > cfg.upper[j] + 1e-8 {
                    out.push(format!("weight {w} of representative {j} outside [{}, {}]", cfg.lower[j], cfg.upper[j]));
                }
            } else if w.abs() > 1e-8 {
                out.push(format!("non-representative {j} has weight {w}"));
            }
        }
        if self.assignment.len() != n || self.assignment.iter().any(|a| !self.representatives.contains(a)) {
            out.push("assignment does not map every asset to a representative".into());
        }
        out
    }
}

/// Reads the portfolio out of a solved model. Assignments are recomputed as
/// nearest representatives rather than read from the relaxed `z_ij`.
pub fn extract_portfolio(
    sol: &MilpSolution,
    f: &Formulation,
    s: &ScenarioSet,
    d: &DistanceMatrix,
    beta: f64,
) -> Result<Portfolio> {
    require_solution(sol, "model")?;
    extract_from_values(&sol.values, f, s, d, beta)
}

pub fn extract_from_values(
    values: &[f64],
    f: &Formulation,
    s: &ScenarioSet,
    d: &DistanceMatrix,
    beta: f64,
) -> Result<Portfolio> {
    let l = &f.layout;
    if values.len() != f.model.num_vars() {
        return Err(FormulationError::DimensionMismatch(format!(
            "{} values for {} variables",
            values.len(),
            f.model.num_vars()
        )));
    }
    if let Some(z) = l.z_diag {
        for j in 0..l.n {
            let v = values[z + j];
            if v.abs() > 1e-6 && (v - 1.0).abs() > 1e-6 {
                return Err(FormulationError::FractionalSolution(f.model.var_names[z + j].clone()));
            }
        }
    }
    let weights: Vec<f64> = l.weights(values).iter().map(|&w| if w < 0.0 { 0.0 } else { w }).collect();
    let representatives = selected(f, values);
    if representatives.is_empty() {
        return Err(FormulationError::EmptySet);
    }
    let assignment = nearest_assignment(&representatives, d);
    let fp_value = evaluate_fp(&representatives, d)?;
    let y = s.portfolio_returns(&weights);
    let cvar_value = cvar_primal_oracle(&y, s.probs.as_slice().expect("contiguous"), beta)
        .map_err(|e| FormulationError::InvalidConfig(e.to_string()))?;
    let mean_return = s.mean_return(&weights);
    let eta = l.eta.map(|e| values[e]);
    let shortfalls = l.shortfall.map(|b| values[b..b + l.t].to_vec()).unwrap_or_default();
    Ok(Portfolio { weights, representatives, assignment, fp_value, cvar_value, mean_return, eta, shortfalls })
}

/// Outcome of one clustering-constrained solve.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedSolve {
    pub formulation: Formulation,
    pub solution: MilpSolution,
    pub portfolio: Portfolio,
}

/// Solves the clustering-constrained model at budget `fp0`, seeded with
/// `warm` or, failing that, with the p-median representatives completed by an LP.
pub fn solve_unified(
    s: &ScenarioSet,
    d: &DistanceMatrix,
    cfg: &ModelConfig,
    bounds: &BoundsResult,
    fp0: f64,
    solver: &dyn MilpSolver,
    warm: Option<Vec<f64>>,
) -> Result<UnifiedSolve> {
    let f = build_unified(s, d, cfg, fp0)?;
    let seed = match warm {
        Some(w) => Some(w),
        None => complete_with_representatives(&f, &bounds.pmedian_reps)?,
    };
    let sol = solver.solve(&f.model, seed)?;
    if sol.status == MilpStatus::Infeasible {
        return Err(FormulationError::InfeasibleAtMu0(cfg.mu0));
    }
    require_solution(&sol, "clustering-constrained CVaR model")?;
    let portfolio = extract_portfolio(&sol, &f, s, d, cfg.beta)?;
    Ok(UnifiedSolve { formulation: f, solution: sol, portfolio })
}
