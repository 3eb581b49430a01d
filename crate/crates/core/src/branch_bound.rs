//! Best-first branch and bound over binary variables.
//!
//! Nodes carry only their bound pinnings and the parent's final basis; the
//! LP dimensions never change, so every child restarts the simplex from its
//! parent's basis. Until the first incumbent is known the search dives
//! depth-first, always following the child nearest the LP value.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model_ir::{relative_gap, LpStatus, MilpModel, MilpSolution, MilpStatus, VarKind};
use crate::simplex::{Basis, LpEngine, SimplexError, SimplexOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Branching {
    #[default]
    MostFractional,
    PseudoCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BnbOptions {
    /// Seconds.
    pub time_limit: f64,
    pub rel_gap_tol: f64,
    pub int_tol: f64,
    pub node_limit: Option<usize>,
    pub branching: Branching,
    /// Full variable assignment used as the starting incumbent when feasible.
    #[serde(skip)]
    pub warm_start: Option<Vec<f64>>,
    pub lp: SimplexOptions,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self {
            time_limit: 7200.0,
            rel_gap_tol: 1e-6,
            int_tol: 1e-6,
            node_limit: None,
            branching: Branching::MostFractional,
            warm_start: None,
            lp: SimplexOptions::default(),
        }
    }
}

impl BnbOptions {
    pub fn validate(&self) -> Result<(), BnbError> {
        if !(self.time_limit > 0.0) {
            return Err(BnbError::InvalidOptions("time_limit must be > 0".into()));
        }
        for (name, v) in [("rel_gap_tol", self.rel_gap_tol), ("int_tol", self.int_tol)] {
            if !(v > 0.0 && v < 1e-2) {
                return Err(BnbError::InvalidOptions(format!("{name} must lie in (0, 1e-2), got {v}")));
            }
        }
        Ok(())
    }

    pub fn with_warm_start(mut self, values: Vec<f64>) -> Self {
        self.warm_start = Some(values);
        self
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BnbError {
    #[error(transparent)]
    Lp(#[from] SimplexError),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("lp relaxation hit its iteration limit at node {0}")]
    LpIterationLimit(usize),
}

/// Snapshot handed to the progress callback.
#[derive(Debug, Clone, PartialEq)]
pub struct Progress {
    pub elapsed: f64,
    pub incumbent: Option<f64>,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub bound_changes: Vec<(usize, f64)>,
    /// LP bound inherited from the parent, in maximisation form.
    pub parent_objective: f64,
    pub depth: usize,
    basis: Option<Arc<Basis>>,
    /// Branching record for pseudo-costs: (var, went up, fractional distance).
    origin: Option<(usize, bool, f64)>,
}

struct Queued {
    bound: f64,
    seq: u64,
    node: Node,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // Largest bound first; on ties, the node created first.
        self.bound.total_cmp(&other.bound).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Binary with fractional part closest to 0.5 (lowest index on ties), or
/// `None` when every binary is within `int_tol` of 0 or 1.
pub fn branch_variable(lp_values: &[f64], binaries: &[usize], int_tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in binaries {
        let v = lp_values[j];
        let frac = v - v.floor();
        if frac <= int_tol || frac >= 1.0 - int_tol {
            continue;
        }
        let dist = (frac - 0.5).abs();
        // Differences below 1e-12 count as ties (0.3 and 0.7 are not exactly symmetric in f64).
        match best {
            Some((bj, bd)) if dist > bd - 1e-12 && !(dist < bd + 1e-12 && j < bj) => {}
            _ => best = Some((j, dist)),
        }
    }
    best.map(|(j, _)| j)
}

#[derive(Debug, Clone, Default)]
struct PseudoCosts {
    down: Vec<(f64, usize)>,
    up: Vec<(f64, usize)>,
}

impl PseudoCosts {
    fn new(n: usize) -> Self {
        Self { down: vec![(0.0, 0); n], up: vec![(0.0, 0); n] }
    }

    fn record(&mut self, j: usize, up: bool, dist: f64, degradation: f64) {
        if dist <= 0.0 {
            return;
        }
        let slot = if up { &mut self.up[j] } else { &mut self.down[j] };
        slot.0 += degradation.max(0.0) / dist;
        slot.1 += 1;
    }

    fn average(table: &[(f64, usize)]) -> f64 {
        let (s, c) = table.iter().fold((0.0, 0usize), |(s, c), &(v, k)| (s + v, c + k));
        if c == 0 {
            1.0
        } else {
            s / c as f64
        }
    }

    fn select(&self, values: &[f64], binaries: &[usize], int_tol: f64) -> Option<usize> {
        let avg_down = Self::average(&self.down);
        let avg_up = Self::average(&self.up);
        let mut best: Option<(usize, f64)> = None;
        for &j in binaries {
            let v = values[j];
            let f = v - v.floor();
            if f <= int_tol || f >= 1.0 - int_tol {
                continue;
            }
            let pd = if self.down[j].1 > 0 { self.down[j].0 / self.down[j].1 as f64 } else { avg_down };
            let pu = if self.up[j].1 > 0 { self.up[j].0 / self.up[j].1 as f64 } else { avg_up };
            let score = (pd * f).max(1e-6) * (pu * (1.0 - f)).max(1e-6);
            match best {
                Some((_, bs)) if score <= bs => {}
                _ => best = Some((j, score)),
            }
        }
        best.map(|(j, _)| j)
    }
}

pub fn solve_milp(m: &MilpModel, opts: &BnbOptions) -> Result<MilpSolution, BnbError> {
    solve_milp_with_progress(m, opts, &mut |_| {})
}

/// Branch and bound with a progress callback, invoked at the start, on every
/// new incumbent, at least once per second while nodes are processed, and at
/// the end.
pub fn solve_milp_with_progress(
    m: &MilpModel,
    opts: &BnbOptions,
    progress: &mut dyn FnMut(&Progress),
) -> Result<MilpSolution, BnbError> {
    opts.validate()?;
    let start = Instant::now();
    let sign = m.sense.sign();
    let mut engine = LpEngine::new(m)?;
    let binaries = m.binaries();
    let mut warnings = Vec::new();

    // Incumbent kept in maximisation form.
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    if let Some(ws) = &opts.warm_start {
        match check_warm_start(m, ws, opts.int_tol) {
            Ok(values) => {
                let score = sign * m.objective_value(&values);
                incumbent = Some((score, values));
            }
            Err(why) => {
                log::warn!("warm start discarded: {why}");
                warnings.push(format!("InfeasibleWarmStart: {why}"));
            }
        }
    }

    let mut heap: BinaryHeap<Queued> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut dive: Option<Node> =
        Some(Node { bound_changes: Vec::new(), parent_objective: f64::INFINITY, depth: 0, basis: None, origin: None });
    let mut nodes = 0usize;
    let mut pseudo = PseudoCosts::new(m.num_vars());
    let mut last_report = Instant::now();
    let mut stopped_bound: Option<f64> = None;
    let mut root_unbounded = false;

    let prune_tol = |inc: f64| (opts.rel_gap_tol * inc.abs().max(1e-10)).max(1e-9);
    let report = |progress: &mut dyn FnMut(&Progress), inc: &Option<(f64, Vec<f64>)>, bound: f64, nodes: usize| {
        let inc_model = inc.as_ref().map(|(s, _)| sign * s);
        // Open nodes may all be dominated by the incumbent.
        let bound_model = sign * inc.as_ref().map_or(bound, |(s, _)| bound.max(*s));
        let gap = inc_model.map_or(f64::INFINITY, |v| relative_gap(bound_model, v));
        progress(&Progress {
            elapsed: start.elapsed().as_secs_f64(),
            incumbent: inc_model,
            bound: bound_model,
            gap,
            nodes,
        });
    };
    report(progress, &incumbent, f64::INFINITY, 0);

    loop {
        let node = match dive.take() {
            Some(n) => n,
            None => match heap.pop() {
                Some(q) => q.node,
                None => break,
            },
        };
        if let Some((inc, _)) = &incumbent {
            if node.parent_objective <= inc + prune_tol(*inc) {
                continue;
            }
        }
        let out_of_time = nodes > 0 && start.elapsed().as_secs_f64() >= opts.time_limit;
        let out_of_nodes = opts.node_limit.is_some_and(|lim| nodes >= lim);
        if out_of_time || out_of_nodes {
            let open = heap.iter().map(|q| q.bound).fold(node.parent_objective, f64::max);
            stopped_bound = Some(open);
            break;
        }

        engine.reset_bounds();
        for &(j, v) in &node.bound_changes {
            engine.set_var_bounds(j, v, v);
        }
        let (sol, basis) = engine.solve(&opts.lp, node.basis.as_deref())?;
        nodes += 1;
        if last_report.elapsed().as_secs_f64() >= 1.0 {
            let open = heap.iter().map(|q| q.bound).fold(node.parent_objective, f64::max);
            report(progress, &incumbent, open, nodes);
            last_report = Instant::now();
        }
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                if node.depth == 0 {
                    root_unbounded = true;
                    break;
                }
                continue;
            }
            LpStatus::IterationLimit => return Err(BnbError::LpIterationLimit(nodes)),
            LpStatus::Optimal => {}
        }
        let bound = (sign * sol.objective).min(node.parent_objective);
        if let Some((j, up, dist)) = node.origin {
            if node.parent_objective.is_finite() {
                pseudo.record(j, up, dist, node.parent_objective - bound);
            }
        }
        if let Some((inc, _)) = &incumbent {
            if bound <= inc + prune_tol(*inc) {
                continue;
            }
        }
        let pick = match opts.branching {
            Branching::MostFractional => branch_variable(&sol.values, &binaries, opts.int_tol),
            Branching::PseudoCost => pseudo.select(&sol.values, &binaries, opts.int_tol),
        };
        let Some(j) = pick else {
            // Integral: new incumbent.
            let better = incumbent.as_ref().is_none_or(|(inc, _)| bound > *inc);
            if better {
                incumbent = Some((bound, sol.values));
                let open = heap.iter().map(|q| q.bound).fold(bound, f64::max);
                report(progress, &incumbent, open, nodes);
            }
            continue;
        };
        let v = sol.values[j];
        let basis = Arc::new(basis);
        let make = |val: f64| {
            let mut changes = node.bound_changes.clone();
            changes.push((j, val));
            let up = val == 1.0;
            Node {
                bound_changes: changes,
                parent_objective: bound,
                depth: node.depth + 1,
                basis: Some(basis.clone()),
                origin: Some((j, up, if up { 1.0 - v } else { v })),
            }
        };
        let (first, second) = if v >= 0.5 { (make(1.0), make(0.0)) } else { (make(0.0), make(1.0)) };
        if incumbent.is_none() {
            dive = Some(first);
            heap.push(Queued { bound, seq, node: second });
            seq += 1;
        } else {
            heap.push(Queued { bound, seq, node: first });
            heap.push(Queued { bound, seq: seq + 1, node: second });
            seq += 2;
        }
    }

    let wall_time = start.elapsed().as_secs_f64();
    let finish =
        |status: MilpStatus, objective: f64, best_bound: f64, gap: f64, values: Vec<f64>, warnings: Vec<String>| {
            MilpSolution { status, objective, best_bound, gap, values, node_count: nodes, wall_time, warnings }
        };
    let result = if root_unbounded {
        finish(MilpStatus::Unbounded, sign * f64::INFINITY, sign * f64::INFINITY, f64::INFINITY, Vec::new(), warnings)
    } else {
        match (incumbent, stopped_bound) {
            (Some((score, values)), None) => {
                let obj = sign * score;
                finish(MilpStatus::Optimal, obj, obj, 0.0, round_binaries(m, values, opts.int_tol), warnings)
            }
            (Some((score, values)), Some(open)) => {
                let bound = open.max(score);
                let obj = sign * score;
                let bb = sign * bound;
                finish(
                    MilpStatus::FeasibleTimeLimit,
                    obj,
                    bb,
                    relative_gap(bb, obj),
                    round_binaries(m, values, opts.int_tol),
                    warnings,
                )
            }
            (None, None) => finish(MilpStatus::Infeasible, f64::NAN, f64::NAN, f64::INFINITY, Vec::new(), warnings),
            (None, Some(open)) => {
                finish(MilpStatus::NoSolutionLimit, f64::NAN, sign * open, f64::INFINITY, Vec::new(), warnings)
            }
        }
    };
    progress(&Progress {
        elapsed: wall_time,
        incumbent: result.has_solution().then_some(result.objective),
        bound: result.best_bound,
        gap: result.gap,
        nodes,
    });
    Ok(result)
}

fn round_binaries(m: &MilpModel, mut values: Vec<f64>, int_tol: f64) -> Vec<f64> {
    for (j, v) in values.iter_mut().enumerate() {
        if m.kind[j] == VarKind::Binary {
            if v.abs() <= int_tol {
                *v = 0.0;
            } else if (*v - 1.0).abs() <= int_tol {
                *v = 1.0;
            }
        }
    }
    values
}

/// Accepts a warm start when it has the right length, integral binaries and
/// bound/row violations of at most 1e-7.
fn check_warm_start(m: &MilpModel, ws: &[f64], int_tol: f64) -> Result<Vec<f64>, String> {
    if ws.len() != m.num_vars() {
        return Err(format!("has {} values for {} variables", ws.len(), m.num_vars()));
    }
    if ws.iter().any(|v| !v.is_finite()) {
        return Err("contains non-finite values".into());
    }
    if !m.is_integral(ws, int_tol) {
        return Err("binary variables are fractional".into());
    }
    let values = round_binaries(m, ws.to_vec(), int_tol);
    let viol = m.max_violation(&values);
    if viol > 1e-7 {
        return Err(format!("violates the model by {viol:.3e}"));
    }
    Ok(values)
}
