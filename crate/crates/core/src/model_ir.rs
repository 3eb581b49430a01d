//! Solver-agnostic linear models with binary marks, solution records, a
//! line-oriented text format, and the enumeration oracle used to check the
//! branch-and-bound solver.
//!
//! Text format (one item per line, `#` starts a comment):
//!
//! ```text
//! milp v1
//! sense max|min
//! var <name> cont|bin <lower> <upper> <objective>
//! row <name> <lower> <upper> : <var-index>:<coef> ...
//! card <row-name>
//! ```
//!
//! Infinite bounds are written `inf` / `-inf`; numbers use the shortest
//! representation that parses back to the same `f64`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Maximize,
    Minimize,
}

impl Sense {
    /// +1 for maximization, -1 for minimization.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    /// Sparse coefficients `(var index, value)`, sorted by index, no zeros.
    pub coefs: Vec<(usize, f64)>,
    pub lower: f64,
    pub upper: f64,
}

impl Row {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coefs.iter().map(|&(j, a)| a * values[j]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub kind: Vec<VarKind>,
    pub var_names: Vec<String>,
    pub rows: Vec<Row>,
    /// Row whose binaries must sum to its right-hand side (the "select exactly p" row).
    /// Lets the enumeration oracle skip assignments of the wrong cardinality.
    pub cardinality_row: Option<usize>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("variable {0} is not a binary variable of the model")]
    UnknownVariable(String),
    #[error("too many binaries for enumeration: {0} > 25")]
    TooManyBinaries(usize),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("lp solve failed: {0}")]
    Lp(String),
}

impl MilpModel {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            objective: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            kind: Vec::new(),
            var_names: Vec::new(),
            rows: Vec::new(),
            cardinality_row: None,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64, obj: f64) -> usize {
        self.var_names.push(name.into());
        self.kind.push(kind);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.push(obj);
        self.objective.len() - 1
    }

    /// Adds `lower <= sum coefs <= upper`. Zero coefficients are dropped and
    /// repeated indices summed.
    pub fn add_row(&mut self, name: impl Into<String>, coefs: &[(usize, f64)], lower: f64, upper: f64) -> usize {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for &(j, a) in coefs {
            *acc.entry(j).or_insert(0.0) += a;
        }
        let coefs = acc.into_iter().filter(|&(_, a)| a != 0.0).collect();
        self.rows.push(Row { name: name.into(), coefs, lower, upper });
        self.rows.len() - 1
    }

    pub fn binaries(&self) -> Vec<usize> {
        (0..self.num_vars()).filter(|&j| self.kind[j] == VarKind::Binary).collect()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_names.iter().position(|n| n == name)
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, v)| c * v).sum()
    }

    /// Every invariant violation, by name. Empty means the model is well formed.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n || self.kind.len() != n || self.var_names.len() != n {
            out.push("variable arrays have inconsistent lengths".to_string());
            return out;
        }
        for j in 0..n {
            let name = &self.var_names[j];
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo > hi {
                out.push(format!("variable {name}: bounds [{lo}, {hi}] are inconsistent"));
            }
            if lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                out.push(format!("variable {name}: bound pair [{lo}, {hi}] is empty"));
            }
            if !self.objective[j].is_finite() {
                out.push(format!("variable {name}: objective coefficient is not finite"));
            }
            if self.kind[j] == VarKind::Binary && (lo < 0.0 || hi > 1.0) {
                out.push(format!("binary variable {name}: bounds [{lo}, {hi}] exceed [0, 1]"));
            }
            if name.is_empty() || name.contains(char::is_whitespace) {
                out.push(format!("variable {j}: name {name:?} is empty or contains whitespace"));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            let name = &row.name;
            if row.coefs.is_empty() {
                out.push(format!("row {name}: has no nonzero coefficients"));
            }
            if row.lower.is_nan() || row.upper.is_nan() || row.lower > row.upper {
                out.push(format!("row {name}: bounds [{}, {}] are inconsistent", row.lower, row.upper));
            }
            if row.lower == f64::INFINITY || row.upper == f64::NEG_INFINITY {
                out.push(format!("row {name}: bound pair is empty"));
            }
            for &(j, a) in &row.coefs {
                if j >= n {
                    out.push(format!("row {name}: references variable {j} out of range"));
                } else if !a.is_finite() {
                    out.push(format!("row {name}: coefficient on {} is not finite", self.var_names[j]));
                }
            }
            if name.is_empty() || name.contains(char::is_whitespace) {
                out.push(format!("row {i}: name {name:?} is empty or contains whitespace"));
            }
        }
        if let Some(c) = self.cardinality_row {
            if c >= self.rows.len() {
                out.push(format!("cardinality row {c} out of range"));
            }
        }
        out
    }

    /// Pins the given binaries to 0/1 and marks them continuous.
    pub fn fix_binaries(&self, assignment: &[(usize, bool)]) -> Result<MilpModel, ModelError> {
        let mut m = self.clone();
        for &(j, v) in assignment {
            if j >= m.num_vars() || self.kind[j] != VarKind::Binary {
                let name = self.var_names.get(j).cloned().unwrap_or_else(|| format!("#{j}"));
                return Err(ModelError::UnknownVariable(name));
            }
            let v = if v { 1.0 } else { 0.0 };
            m.lower[j] = v;
            m.upper[j] = v;
            m.kind[j] = VarKind::Continuous;
        }
        Ok(m)
    }

    /// Same as [`fix_binaries`](Self::fix_binaries) but keyed by variable name.
    pub fn fix_binaries_by_name(&self, assignment: &[(&str, bool)]) -> Result<MilpModel, ModelError> {
        let idx = assignment
            .iter()
            .map(|&(name, v)| {
                self.var_index(name).map(|j| (j, v)).ok_or_else(|| ModelError::UnknownVariable(name.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.fix_binaries(&idx)
    }

    /// Largest bound or row violation of `values`, and whether binaries are integral within `int_tol`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - values[j]).max(values[j] - self.upper[j]);
        }
        for row in &self.rows {
            let a = row.activity(values);
            worst = worst.max(row.lower - a).max(a - row.upper);
        }
        worst
    }

    pub fn is_integral(&self, values: &[f64], int_tol: f64) -> bool {
        self.binaries().into_iter().all(|j| {
            let v = values[j];
            v.abs() <= int_tol || (v - 1.0).abs() <= int_tol
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("milp v1\n");
        let sense = match self.sense {
            Sense::Maximize => "max",
            Sense::Minimize => "min",
        };
        let _ = writeln!(s, "sense {sense}");
        for j in 0..self.num_vars() {
            let kind = match self.kind[j] {
                VarKind::Continuous => "cont",
                VarKind::Binary => "bin",
            };
            let _ = writeln!(
                s,
                "var {} {} {} {} {}",
                self.var_names[j],
                kind,
                fmt_num(self.lower[j]),
                fmt_num(self.upper[j]),
                fmt_num(self.objective[j])
            );
        }
        for row in &self.rows {
            let _ = write!(s, "row {} {} {} :", row.name, fmt_num(row.lower), fmt_num(row.upper));
            for &(j, a) in &row.coefs {
                let _ = write!(s, " {}:{}", j, fmt_num(a));
            }
            s.push('\n');
        }
        if let Some(c) = self.cardinality_row {
            let _ = writeln!(s, "card {}", self.rows[c].name);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<MilpModel, ModelError> {
        let err = |line: usize, msg: &str| ModelError::Parse { line, msg: msg.to_string() };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, "milp v1")) => {}
            Some((k, _)) => return Err(err(k, "expected header `milp v1`")),
            None => return Err(err(0, "empty input")),
        }
        let mut model: Option<MilpModel> = None;
        for (k, line) in lines {
            let mut tok = line.split_whitespace();
            let head = tok.next().unwrap_or("");
            match head {
                "sense" => {
                    let sense = match tok.next() {
                        Some("max") => Sense::Maximize,
                        Some("min") => Sense::Minimize,
                        _ => return Err(err(k, "sense must be max or min")),
                    };
                    model = Some(MilpModel::new(sense));
                }
                "var" => {
                    let m = model.as_mut().ok_or_else(|| err(k, "var before sense"))?;
                    let name = tok.next().ok_or_else(|| err(k, "missing var name"))?;
                    let kind = match tok.next() {
                        Some("cont") => VarKind::Continuous,
                        Some("bin") => VarKind::Binary,
                        _ => return Err(err(k, "var kind must be cont or bin")),
                    };
                    let nums: Vec<f64> =
                        tok.map(parse_num).collect::<Option<_>>().ok_or_else(|| err(k, "bad number"))?;
                    if nums.len() != 3 {
                        return Err(err(k, "var needs lower, upper and objective"));
                    }
                    m.add_var(name, kind, nums[0], nums[1], nums[2]);
                }
                "row" => {
                    let m = model.as_mut().ok_or_else(|| err(k, "row before sense"))?;
                    let name = tok.next().ok_or_else(|| err(k, "missing row name"))?;
                    let lo = tok.next().and_then(parse_num).ok_or_else(|| err(k, "bad row lower"))?;
                    let hi = tok.next().and_then(parse_num).ok_or_else(|| err(k, "bad row upper"))?;
                    if tok.next() != Some(":") {
                        return Err(err(k, "expected `:` before coefficients"));
                    }
                    let mut coefs = Vec::new();
                    for t in tok {
                        let (j, a) = t.split_once(':').ok_or_else(|| err(k, "coefficient must be index:value"))?;
                        let j: usize = j.parse().map_err(|_| err(k, "bad variable index"))?;
                        let a = parse_num(a).ok_or_else(|| err(k, "bad coefficient"))?;
                        coefs.push((j, a));
                    }
                    m.rows.push(Row { name: name.to_string(), coefs, lower: lo, upper: hi });
                }
                "card" => {
                    let m = model.as_mut().ok_or_else(|| err(k, "card before sense"))?;
                    let name = tok.next().ok_or_else(|| err(k, "missing row name"))?;
                    let idx = m.rows.iter().position(|r| r.name == name).ok_or_else(|| err(k, "unknown row"))?;
                    m.cardinality_row = Some(idx);
                }
                _ => return Err(err(k, "unknown directive")),
            }
        }
        model.ok_or_else(|| err(0, "missing sense line"))
    }
}

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

fn parse_num(s: &str) -> Option<f64> {
    match s {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective in the model's own sense.
    pub objective: f64,
    pub values: Vec<f64>,
    /// Row multipliers, in the model's sense: the objective changes by `dual * delta`
    /// when a row bound that is active moves by `delta`.
    pub dual_values: Vec<f64>,
    /// Column reduced costs in the model's sense.
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MilpStatus {
    Optimal,
    FeasibleTimeLimit,
    /// Time or node limit reached before any integral point was found.
    NoSolutionLimit,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub values: Vec<f64>,
    pub node_count: usize,
    pub wall_time: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MilpSolution {
    pub fn has_solution(&self) -> bool {
        matches!(self.status, MilpStatus::Optimal | MilpStatus::FeasibleTimeLimit)
    }
}

/// Relative gap with the denominator guarded at 1e-10.
pub fn relative_gap(best_bound: f64, objective: f64) -> f64 {
    if !best_bound.is_finite() || !objective.is_finite() {
        return f64::INFINITY;
    }
    (best_bound - objective).abs() / objective.abs().max(1e-10)
}

/// Exhaustive MILP oracle: enumerates every 0/1 assignment of the binaries
/// (only the `C(k, p)` assignments matching a cardinality row's right-hand
/// side when one is tagged) and solves the remaining LP with `lp`.
pub fn brute_force_milp<F>(m: &MilpModel, mut lp: F) -> Result<MilpSolution, ModelError>
where
    F: FnMut(&MilpModel) -> Result<LpSolution, ModelError>,
{
    let start = std::time::Instant::now();
    let bins = m.binaries();
    if bins.len() > 25 {
        return Err(ModelError::TooManyBinaries(bins.len()));
    }
    // Cardinality filter: all binaries of the tagged row with unit coefficients and an equality rhs.
    let card: Option<(Vec<usize>, usize)> = m.cardinality_row.and_then(|r| {
        let row = &m.rows[r];
        let unit = row.coefs.iter().all(|&(j, a)| a == 1.0 && m.kind[j] == VarKind::Binary);
        let rhs = row.upper;
        (unit && row.lower == rhs && rhs >= 0.0 && rhs.fract() == 0.0).then(|| {
            let pos: Vec<usize> =
                row.coefs.iter().map(|&(j, _)| bins.iter().position(|&b| b == j).expect("binary")).collect();
            (pos, rhs as usize)
        })
    });

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut solves = 0usize;
    for mask in 0u64..(1u64 << bins.len()) {
        if let Some((pos, p)) = &card {
            let ones = pos.iter().filter(|&&k| mask >> k & 1 == 1).count();
            if ones != *p {
                continue;
            }
        }
        let assignment: Vec<(usize, bool)> = bins.iter().enumerate().map(|(k, &j)| (j, mask >> k & 1 == 1)).collect();
        // Skip assignments outside a binary's own bounds.
        if assignment.iter().any(|&(j, v)| (v && m.upper[j] < 1.0) || (!v && m.lower[j] > 0.0)) {
            continue;
        }
        let fixed = m.fix_binaries(&assignment)?;
        let sol = lp(&fixed)?;
        solves += 1;
        match sol.status {
            LpStatus::Optimal => {
                let better = match &best {
                    None => true,
                    Some((obj, _)) => m.sense.sign() * (sol.objective - obj) > 0.0,
                };
                if better {
                    best = Some((sol.objective, sol.values));
                }
            }
            LpStatus::Infeasible => {}
            LpStatus::Unbounded => {
                return Ok(MilpSolution {
                    status: MilpStatus::Unbounded,
                    objective: m.sense.sign() * f64::INFINITY,
                    best_bound: m.sense.sign() * f64::INFINITY,
                    gap: f64::INFINITY,
                    values: sol.values,
                    node_count: solves,
                    wall_time: start.elapsed().as_secs_f64(),
                    warnings: Vec::new(),
                });
            }
            LpStatus::IterationLimit => return Err(ModelError::Lp("iteration limit".into())),
        }
    }
    let wall_time = start.elapsed().as_secs_f64();
    Ok(match best {
        Some((objective, values)) => MilpSolution {
            status: MilpStatus::Optimal,
            objective,
            best_bound: objective,
            gap: 0.0,
            values,
            node_count: solves,
            wall_time,
            warnings: Vec::new(),
        },
        None => MilpSolution {
            status: MilpStatus::Infeasible,
            objective: f64::NAN,
            best_bound: f64::NAN,
            gap: f64::INFINITY,
            values: Vec::new(),
            node_count: solves,
            wall_time,
            warnings: Vec::new(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn knapsack() -> MilpModel {
        let mut m = MilpModel::new(Sense::Maximize);
        let a = m.add_var("x1", VarKind::Binary, 0.0, 1.0, 1.0);
        let b = m.add_var("x2", VarKind::Binary, 0.0, 1.0, 1.0);
        m.add_row("cap", &[(a, 1.0), (b, 1.0)], f64::NEG_INFINITY, 1.0);
        m
    }

    #[test]
    fn validate_accepts_well_formed() {
        assert!(knapsack().validate().is_empty());
    }

    #[test]
    fn validate_names_violations() {
        let mut m = knapsack();
        m.upper[0] = 2.0;
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("x1"), "{v:?}");

        let mut m = knapsack();
        m.add_row("empty", &[(0, 0.0)], 0.0, 1.0);
        let v = m.validate();
        assert!(v.iter().any(|s| s.contains("empty") && s.contains("no nonzero")), "{v:?}");

        let mut m = knapsack();
        m.lower[1] = 1.0;
        m.upper[1] = 0.0;
        assert!(m.validate().iter().any(|s| s.contains("x2")));
    }

    #[test]
    fn fix_binaries_behaviour() {
        let m = knapsack();
        assert_eq!(m.fix_binaries(&[]).unwrap(), m);
        let f = m.fix_binaries_by_name(&[("x1", true)]).unwrap();
        assert_eq!((f.lower[0], f.upper[0]), (1.0, 1.0));
        assert_eq!(f.kind[0], VarKind::Continuous);

        let mut m2 = m.clone();
        m2.add_var("y", VarKind::Continuous, 0.0, 1.0, 0.0);
        assert_eq!(m2.fix_binaries_by_name(&[("y", true)]), Err(ModelError::UnknownVariable("y".into())));
        assert_eq!(m2.fix_binaries_by_name(&[("nope", true)]), Err(ModelError::UnknownVariable("nope".into())));
    }

    #[test]
    fn text_round_trip_is_byte_identical() {
        let mut m = knapsack();
        m.add_var("free", VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY, 0.1 + 0.2);
        m.add_row("eq", &[(0, 1.0), (2, -1.0 / 3.0)], 0.7, 0.7);
        m.cardinality_row = Some(0);
        let text = m.to_text();
        let back = MilpModel::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn parse_errors_report_line() {
        let e = MilpModel::from_text("milp v1\nsense max\nvar x cont 0 1\n").unwrap_err();
        assert!(matches!(e, ModelError::Parse { line: 3, .. }));
        assert!(MilpModel::from_text("nope").is_err());
    }

    #[test]
    fn gap_guard() {
        assert_eq!(relative_gap(0.0, 0.0), 0.0);
        assert!((relative_gap(1.1, 1.0) - 0.1).abs() < 1e-12);
        assert!(relative_gap(1e-12, 0.0) > 0.0);
    }
}
