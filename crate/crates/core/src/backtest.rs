//! Rolling-window evaluation: fit on an in-sample slice, hold the weights
//! over the following out-of-sample slice, advance by the out-sample length.
//!
//! Out-of-sample returns use fixed weights within a holding period,
//! `y_t = sum_j r_jt x_j`, rather than drifting share counts.

use std::fmt;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::branch_bound::BnbOptions;
use crate::formulations::{
    build_cvar_cc, build_pure_cvar, complete_with_representatives, compute_bounds, evaluate_fp, extract_portfolio,
    solve_unified, top_mean_assets, BoundsResult, FormulationError, FpBounds, MilpSolver, ModelConfig, Portfolio,
};
use crate::market_data::{
    correlation_distances, log_returns, scenario_set, simple_returns, DistanceMatrix, MarketDataError, PricePanel,
    ReturnPanel, ScenarioSet,
};
use crate::model_ir::{MilpSolution, MilpStatus};

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error(transparent)]
    Data(#[from] MarketDataError),
    #[error("window {window}: {source}")]
    Window { window: usize, source: FormulationError },
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error("invalid backtest configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least {needed} return observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("return series has zero variance")]
    ZeroVariance,
    #[error("return series too short: {0} observations")]
    TooShort(usize),
    #[error("return series is empty")]
    Empty,
}

impl BacktestError {
    /// The underlying formulation error, when there is one.
    pub fn formulation(&self) -> Option<&FormulationError> {
        match self {
            BacktestError::Window { source, .. } => Some(source),
            BacktestError::Formulation(e) => Some(e),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, BacktestError>;

/// Expected-return floor: a fixed value, or the equal-weighted in-sample
/// mean of all assets (always attainable).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Mu0 {
    #[default]
    Index,
    Value(f64),
}

impl Mu0 {
    pub fn resolve(self, s: &ScenarioSet) -> f64 {
        match self {
            Mu0::Index => s.mu.mean().unwrap_or(0.0),
            Mu0::Value(v) => v,
        }
    }
}

impl fmt::Display for Mu0 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mu0::Index => f.write_str("index"),
            Mu0::Value(v) => write!(f, "{v}"),
        }
    }
}

impl std::str::FromStr for Mu0 {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "index" => Ok(Mu0::Index),
            "none" | "-inf" => Ok(Mu0::Value(f64::NEG_INFINITY)),
            v => v.parse::<f64>().map(Mu0::Value).map_err(|_| format!("mu0 must be a number or \"index\", got {v:?}")),
        }
    }
}

impl Serialize for Mu0 {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Mu0::Index => ser.serialize_str("index"),
            Mu0::Value(v) if v.is_finite() => ser.serialize_f64(*v),
            Mu0::Value(_) => ser.serialize_str("none"),
        }
    }
}

impl<'de> Deserialize<'de> for Mu0 {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) => Ok(Mu0::Value(v)),
            Raw::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Model parameters that do not depend on the window's data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub p: usize,
    pub beta: f64,
    pub mu0: Mu0,
    /// Lower weight bound for held assets; `None` means `1/n`.
    pub lower: Option<f64>,
    pub upper: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { p: 5, beta: 0.05, mu0: Mu0::Index, lower: None, upper: 1.0 }
    }
}

impl ModelParams {
    pub fn to_config(&self, s: &ScenarioSet, gamma: f64) -> ModelConfig {
        let n = s.n_assets();
        let mut cfg = ModelConfig::with_default_bounds(n, self.p, self.beta, self.mu0.resolve(s), gamma);
        if let Some(l) = self.lower {
            cfg.lower = vec![l; n];
        }
        cfg.upper = vec![self.upper; n];
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    Unified { gamma: f64 },
    CvarCc,
    PureCvar,
    Index,
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::Unified { .. } => "unified",
            Strategy::CvarCc => "cvar_cc",
            Strategy::PureCvar => "pure_cvar",
            Strategy::Index => "index",
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            Strategy::Unified { gamma } => Some(*gamma),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InfeasiblePolicy {
    #[default]
    Abort,
    FallbackPureCvar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestConfig {
    pub in_len: usize,
    pub out_len: usize,
    pub strategy: Strategy,
    pub model: ModelParams,
    pub solver: BnbOptions,
    pub on_infeasible: InfeasiblePolicy,
    /// Worker threads across windows; 1 runs everything on the caller.
    pub threads: usize,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            in_len: 104,
            out_len: 52,
            strategy: Strategy::Unified { gamma: 1.0 },
            model: ModelParams::default(),
            solver: BnbOptions::default(),
            on_infeasible: InfeasiblePolicy::Abort,
            threads: 1,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_len < 2 {
            return Err(BacktestError::InvalidConfig(format!("in_len = {} < 2", self.in_len)));
        }
        if self.out_len < 1 {
            return Err(BacktestError::InvalidConfig("out_len must be >= 1".into()));
        }
        if self.threads < 1 {
            return Err(BacktestError::InvalidConfig("threads must be >= 1".into()));
        }
        if let Some(g) = self.strategy.gamma() {
            if !(0.0..=1.0).contains(&g) {
                return Err(BacktestError::InvalidConfig(format!("gamma = {g} outside [0, 1]")));
            }
        }
        self.solver.validate().map_err(|e| BacktestError::InvalidConfig(e.to_string()))
    }
}

/// Half-open return-index ranges: in-sample `[in_start, in_end)`,
/// out-of-sample `[in_end, out_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub index: usize,
    pub in_start: usize,
    pub in_end: usize,
    pub out_end: usize,
}

impl Window {
    pub fn out_len(&self) -> usize {
        self.out_end - self.in_end
    }
}

/// Windows advancing by `out_len`; the last out-sample may be truncated and
/// windows with nothing left to hold are dropped.
pub fn make_windows(total_obs: usize, in_len: usize, out_len: usize) -> Result<Vec<Window>> {
    if in_len < 2 || out_len < 1 {
        return Err(BacktestError::InvalidConfig(format!("in_len = {in_len}, out_len = {out_len}")));
    }
    if total_obs < in_len + 1 {
        return Err(BacktestError::TooFewObservations { needed: in_len + 1, got: total_obs });
    }
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let in_start = k * out_len;
        let in_end = in_start + in_len;
        if in_end >= total_obs {
            break;
        }
        out.push(Window { index: k, in_start, in_end, out_end: (in_end + out_len).min(total_obs) });
        k += 1;
    }
    Ok(out)
}

pub fn average_return(oos: &[f64]) -> Result<f64> {
    if oos.is_empty() {
        return Err(BacktestError::Empty);
    }
    Ok(oos.iter().sum::<f64>() / oos.len() as f64)
}

/// `(mean - rf) / s` with the sample standard deviation `s`.
pub fn sharpe_ratio(oos: &[f64], rf: f64) -> Result<f64> {
    if oos.len() < 2 {
        return Err(BacktestError::TooShort(oos.len()));
    }
    let mean = average_return(oos)?;
    let var = oos.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (oos.len() - 1) as f64;
    let sd = var.sqrt();
    if sd <= 16.0 * f64::EPSILON * mean.abs() || sd == 0.0 {
        return Err(BacktestError::ZeroVariance);
    }
    Ok((mean - rf) / sd)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window: Window,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<MilpStatus>,
    /// In-sample objective of the solved model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    pub nodes: usize,
    /// Seconds; kept out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub wall_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<FpBounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pmedian_objective: Option<f64>,
    /// Clustering cost of the p-median representatives, recomputed from distances.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pmedian_fp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cvar_cc_objective: Option<f64>,
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub fell_back: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub portfolio: Option<Portfolio>,
    pub oos_returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub strategy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub p: usize,
    pub beta: f64,
    pub mu0: Mu0,
    pub in_len: usize,
    pub out_len: usize,
    pub n_problems: usize,
    pub av: f64,
    /// `None` when the out-of-sample series has zero variance.
    pub sharpe: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg_nodes: Option<f64>,
    #[serde(skip)]
    pub avg_time: f64,
    pub oos_returns: Vec<f64>,
    pub windows: Vec<WindowResult>,
}

impl BacktestReport {
    fn assemble(cfg: &BacktestConfig, strategy: Strategy, windows: Vec<WindowResult>) -> Result<Self> {
        let oos_returns: Vec<f64> = windows.iter().flat_map(|w| w.oos_returns.iter().copied()).collect();
        let av = average_return(&oos_returns)?;
        let sharpe = match sharpe_ratio(&oos_returns, 0.0) {
            Ok(v) => Some(v),
            Err(BacktestError::ZeroVariance | BacktestError::TooShort(_)) => None,
            Err(e) => return Err(e),
        };
        let k = windows.len() as f64;
        let solved = !matches!(strategy, Strategy::Index);
        let avg_gap = solved.then(|| windows.iter().map(|w| w.gap.unwrap_or(0.0)).sum::<f64>() / k);
        let avg_nodes = solved.then(|| windows.iter().map(|w| w.nodes as f64).sum::<f64>() / k);
        let avg_time = windows.iter().map(|w| w.wall_time).sum::<f64>() / k;
        Ok(Self {
            strategy: strategy.label().to_string(),
            gamma: strategy.gamma(),
            p: cfg.model.p,
            beta: cfg.model.beta,
            mu0: cfg.model.mu0,
            in_len: cfg.in_len,
            out_len: cfg.out_len,
            n_problems: windows.len(),
            av,
            sharpe,
            avg_gap,
            avg_nodes,
            avg_time,
            oos_returns,
            windows,
        })
    }
}

/// In-sample statistics and out-of-sample returns of one window.
pub struct WindowData {
    pub window: Window,
    pub scenarios: ScenarioSet,
    pub distances: DistanceMatrix,
    pub oos: Array2<f64>,
}

pub struct Prepared {
    simple: ReturnPanel,
    log: ReturnPanel,
    pub windows: Vec<Window>,
}

impl Prepared {
    pub fn new(panel: &PricePanel, in_len: usize, out_len: usize) -> Result<Self> {
        let simple = simple_returns(panel)?;
        let log = log_returns(panel)?;
        let windows = make_windows(simple.n_periods(), in_len, out_len)?;
        Ok(Self { simple, log, windows })
    }

    pub fn window_data(&self, w: Window) -> Result<WindowData> {
        let scenarios = scenario_set(&self.simple.slice_rows(w.in_start, w.in_end), None)?;
        let distances = correlation_distances(&self.log.slice_rows(w.in_start, w.in_end))?;
        let oos = self.simple.slice_rows(w.in_end, w.out_end).returns;
        Ok(WindowData { window: w, scenarios, distances, oos })
    }
}

fn oos_returns(oos: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    oos.rows().into_iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

fn empty_result(w: Window) -> WindowResult {
    WindowResult {
        window: w,
        status: None,
        objective: None,
        gap: None,
        nodes: 0,
        wall_time: 0.0,
        bounds: None,
        pmedian_objective: None,
        pmedian_fp: None,
        cvar_cc_objective: None,
        fell_back: false,
        portfolio: None,
        oos_returns: Vec::new(),
    }
}

fn record(res: &mut WindowResult, sol: &MilpSolution, portfolio: Portfolio, oos: &Array2<f64>) {
    res.status = Some(sol.status);
    res.objective = Some(sol.objective);
    res.gap = Some(sol.gap);
    res.nodes = sol.node_count;
    res.oos_returns = oos_returns(oos, &portfolio.weights);
    res.portfolio = Some(portfolio);
}

fn record_bounds(res: &mut WindowResult, b: &BoundsResult, d: &DistanceMatrix, gamma: f64) -> Result<()> {
    res.bounds = Some(b.bounds.at_gamma(gamma));
    res.pmedian_objective = Some(b.pmedian.objective);
    res.pmedian_fp = Some(evaluate_fp(&b.pmedian_reps, d)?);
    res.cvar_cc_objective = Some(b.cvar_cc.objective);
    Ok(())
}

fn solve_simple(
    wd: &WindowData,
    strategy: Strategy,
    params: &ModelParams,
    solver: &dyn MilpSolver,
) -> std::result::Result<WindowResult, FormulationError> {
    let (s, d) = (&wd.scenarios, &wd.distances);
    let mut res = empty_result(wd.window);
    match strategy {
        Strategy::Index => {
            let n = s.n_assets();
            res.oos_returns = oos_returns(&wd.oos, &vec![1.0 / n as f64; n]);
        }
        Strategy::PureCvar => {
            let cfg = params.to_config(s, 0.0);
            let f = build_pure_cvar(s, &cfg)?;
            let sol = solver.solve(&f.model, None)?;
            if sol.status == MilpStatus::Infeasible {
                return Err(FormulationError::InfeasibleAtMu0(cfg.mu0));
            }
            let p = extract_portfolio(&sol, &f, s, d, cfg.beta)?;
            record(&mut res, &sol, p, &wd.oos);
        }
        Strategy::CvarCc => {
            let cfg = params.to_config(s, 0.0);
            let f = build_cvar_cc(s, &cfg)?;
            let seed = complete_with_representatives(&f, &top_mean_assets(s, cfg.p))?;
            let sol = solver.solve(&f.model, seed)?;
            if sol.status == MilpStatus::Infeasible {
                return Err(FormulationError::InfeasibleAtMu0(cfg.mu0));
            }
            let p = extract_portfolio(&sol, &f, s, d, cfg.beta)?;
            record(&mut res, &sol, p, &wd.oos);
        }
        Strategy::Unified { gamma } => {
            let cfg = params.to_config(s, gamma);
            let b = compute_bounds(s, d, &cfg, solver)?;
            let u = solve_unified(s, d, &cfg, &b, b.bounds.fp0, solver, None)?;
            record(&mut res, &u.solution, u.portfolio, &wd.oos);
            record_bounds(&mut res, &b, d, gamma).map_err(|e| FormulationError::Solver(e.to_string()))?;
        }
    }
    Ok(res)
}

fn with_policy(
    wd: &WindowData,
    policy: InfeasiblePolicy,
    params: &ModelParams,
    solver: &dyn MilpSolver,
    r: std::result::Result<WindowResult, FormulationError>,
) -> Result<WindowResult> {
    match r {
        Err(FormulationError::InfeasibleAtMu0(_)) if policy == InfeasiblePolicy::FallbackPureCvar => {
            log::warn!("window {}: return floor unattainable, holding the pure CVaR portfolio", wd.window.index);
            let mut res = solve_simple(wd, Strategy::PureCvar, params, solver)
                .map_err(|source| BacktestError::Window { window: wd.window.index, source })?;
            res.fell_back = true;
            Ok(res)
        }
        Err(source) => Err(BacktestError::Window { window: wd.window.index, source }),
        Ok(r) => Ok(r),
    }
}

fn map_windows<T: Send>(
    threads: usize,
    windows: &[Window],
    f: impl Fn(Window) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    if threads <= 1 || windows.len() <= 1 {
        return windows.iter().map(|&w| f(w)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| BacktestError::InvalidConfig(e.to_string()))?;
    // Collecting an indexed parallel iterator keeps window order.
    pool.install(|| windows.par_iter().map(|&w| f(w)).collect())
}

/// Runs one strategy over every window of `panel`.
pub fn run_backtest(panel: &PricePanel, cfg: &BacktestConfig) -> Result<BacktestReport> {
    cfg.validate()?;
    let prep = Prepared::new(panel, cfg.in_len, cfg.out_len)?;
    let windows = map_windows(cfg.threads, &prep.windows, |w| {
        let wd = prep.window_data(w)?;
        let t0 = Instant::now();
        let r = solve_simple(&wd, cfg.strategy, &cfg.model, &cfg.solver);
        let mut res = with_policy(&wd, cfg.on_infeasible, &cfg.model, &cfg.solver, r)?;
        res.wall_time = t0.elapsed().as_secs_f64();
        Ok(res)
    })?;
    BacktestReport::assemble(cfg, cfg.strategy, windows)
}

/// One report per `gamma` (which must be descending). Within a window the
/// bound problems are solved once; the first value starts from the two-step
/// solution (p-median representatives completed by an LP) and every later
/// value starts from the previous optimum, which stays feasible because the
/// clustering budget only loosens as `gamma` decreases.
pub fn gamma_sweep(panel: &PricePanel, cfg: &BacktestConfig, gammas: &[f64]) -> Result<Vec<BacktestReport>> {
    cfg.validate()?;
    if gammas.is_empty() {
        return Err(BacktestError::InvalidConfig("empty gamma list".into()));
    }
    if gammas.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(BacktestError::InvalidConfig(format!("gammas must lie in [0, 1]: {gammas:?}")));
    }
    if gammas.windows(2).any(|w| w[1] > w[0]) {
        return Err(BacktestError::InvalidConfig(format!("gammas must be descending: {gammas:?}")));
    }
    let prep = Prepared::new(panel, cfg.in_len, cfg.out_len)?;
    let per_window: Vec<Vec<WindowResult>> = map_windows(cfg.threads, &prep.windows, |w| {
        let wd = prep.window_data(w)?;
        match sweep_window(&wd, &cfg.model, &cfg.solver, gammas) {
            Err(FormulationError::InfeasibleAtMu0(mu0)) if cfg.on_infeasible == InfeasiblePolicy::FallbackPureCvar => {
                let t0 = Instant::now();
                let mut fb = with_policy(
                    &wd,
                    cfg.on_infeasible,
                    &cfg.model,
                    &cfg.solver,
                    Err(FormulationError::InfeasibleAtMu0(mu0)),
                )?;
                fb.wall_time = t0.elapsed().as_secs_f64();
                Ok(vec![fb; gammas.len()])
            }
            Err(source) => Err(BacktestError::Window { window: w.index, source }),
            Ok(v) => Ok(v),
        }
    })?;
    let mut reports = Vec::with_capacity(gammas.len());
    for (k, &gamma) in gammas.iter().enumerate() {
        let windows = per_window.iter().map(|v| v[k].clone()).collect();
        reports.push(BacktestReport::assemble(cfg, Strategy::Unified { gamma }, windows)?);
    }
    Ok(reports)
}

/// The gamma chain of a single window.
pub fn sweep_window(
    wd: &WindowData,
    params: &ModelParams,
    solver: &dyn MilpSolver,
    gammas: &[f64],
) -> std::result::Result<Vec<WindowResult>, FormulationError> {
    let (s, d) = (&wd.scenarios, &wd.distances);
    let t0 = Instant::now();
    let base = params.to_config(s, gammas[0]);
    let b = compute_bounds(s, d, &base, solver)?;
    let bounds_time = t0.elapsed().as_secs_f64();
    let mut warm: Option<Vec<f64>> = None;
    let mut out = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let t0 = Instant::now();
        let cfg = params.to_config(s, gamma);
        let fp0 = b.bounds.at_gamma(gamma).fp0;
        let u = solve_unified(s, d, &cfg, &b, fp0, solver, warm.take())?;
        let mut res = empty_result(wd.window);
        record(&mut res, &u.solution, u.portfolio, &wd.oos);
        record_bounds(&mut res, &b, d, gamma).map_err(|e| FormulationError::Solver(e.to_string()))?;
        res.wall_time = t0.elapsed().as_secs_f64() + if out.is_empty() { bounds_time } else { 0.0 };
        warm = Some(u.solution.values);
        out.push(res);
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const CSV_HEADER: &str = "strategy,gamma,p,n_problems,av_e3,sharpe,avg_gap,avg_nodes";

/// One summary row per report, full precision. Av is scaled by 1000.
pub fn reports_csv(reports: &[BacktestReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.strategy,
            opt(r.gamma),
            r.p,
            r.n_problems,
            r.av * 1e3,
            opt(r.sharpe),
            opt(r.avg_gap),
            opt(r.avg_nodes)
        ));
    }
    out
}

/// Per-window solve times; kept apart from the reproducible reports.
pub fn timings_csv(reports: &[BacktestReport]) -> String {
    let mut out = String::from("strategy,gamma,p,window,seconds\n");
    for r in reports {
        for w in &r.windows {
            out.push_str(&format!("{},{},{},{},{}\n", r.strategy, opt(r.gamma), r.p, w.window.index, w.wall_time));
        }
    }
    out
}
