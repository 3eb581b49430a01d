//! C interface to `pmcvar`.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Every fallible call returns a
//! [`PmcvarStatus`]; on failure [`pmcvar_last_error_message`] describes the
//! problem for the calling thread. Panics are caught and reported as
//! `PMCVAR_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pmcvar::backtest::{run_backtest, BacktestConfig, BacktestError, BacktestReport, ModelParams, Mu0, Strategy};
use pmcvar::branch_bound::BnbOptions;
use pmcvar::formulations::{
    build_cvar_cc, build_pure_cvar, complete_with_representatives, compute_bounds, extract_portfolio, solve_unified,
    top_mean_assets, FormulationError, MilpSolver, Portfolio,
};
use pmcvar::market_data::{
    correlation_distances, load_prices, log_returns, scenario_set, simple_returns, synthetic_market, MarketDataError,
    PricePanel, SyntheticSpec,
};
use pmcvar::model_ir::{MilpSolution, MilpStatus};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmcvarStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Input = 3,
    Infeasible = 4,
    Solver = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmcvarStrategy {
    Unified = 0,
    CvarCc = 1,
    PureCvar = 2,
    Index = 3,
}

/// Model and solver settings. Obtain defaults from
/// [`pmcvar_model_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PmcvarModelOptions {
    pub p: usize,
    pub beta: f64,
    /// Used when `mu0_index` is 0; `-INFINITY` drops the return floor.
    pub mu0: f64,
    /// Nonzero: floor at the equal-weighted in-sample mean return.
    pub mu0_index: i32,
    pub gamma: f64,
    /// Seconds per MILP solve.
    pub time_limit: f64,
    pub gap_tol: f64,
}

/// Scalar results of a solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct PmcvarSolveSummary {
    pub objective: f64,
    pub cvar: f64,
    pub mean_return: f64,
    pub fp_value: f64,
    pub gap: f64,
    pub nodes: usize,
    /// 0 optimal, 1 feasible at a limit.
    pub status: i32,
}

pub struct PmcvarPanel(PricePanel);

pub struct PmcvarPortfolio {
    portfolio: Portfolio,
    solution: MilpSolution,
}

pub struct PmcvarReport(BacktestReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: PmcvarStatus, msg: impl Into<String>) -> PmcvarStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> PmcvarStatus) -> PmcvarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(PmcvarStatus::Internal, format!("internal error: {msg}"))
        }
    }
}

fn data_status(e: MarketDataError) -> PmcvarStatus {
    fail(PmcvarStatus::Input, e.to_string())
}

fn formulation_status(e: FormulationError) -> PmcvarStatus {
    let s = match e {
        FormulationError::InfeasibleAtMu0(_) => PmcvarStatus::Infeasible,
        FormulationError::DimensionMismatch(_) | FormulationError::InvalidConfig(_) => PmcvarStatus::InvalidArgument,
        _ => PmcvarStatus::Solver,
    };
    fail(s, e.to_string())
}

fn backtest_status(e: BacktestError) -> PmcvarStatus {
    let msg = e.to_string();
    let s = match &e {
        BacktestError::Data(_) | BacktestError::TooFewObservations { .. } => PmcvarStatus::Input,
        BacktestError::InvalidConfig(_) => PmcvarStatus::InvalidArgument,
        _ => match e.formulation() {
            Some(FormulationError::InfeasibleAtMu0(_)) => PmcvarStatus::Infeasible,
            Some(FormulationError::DimensionMismatch(_) | FormulationError::InvalidConfig(_)) => {
                PmcvarStatus::InvalidArgument
            }
            _ => PmcvarStatus::Solver,
        },
    };
    fail(s, msg)
}

fn params(o: &PmcvarModelOptions) -> (ModelParams, BnbOptions) {
    let mu0 = if o.mu0_index != 0 { Mu0::Index } else { Mu0::Value(o.mu0) };
    let model = ModelParams { p: o.p, beta: o.beta, mu0, ..ModelParams::default() };
    let solver = BnbOptions { time_limit: o.time_limit, rel_gap_tol: o.gap_tol, ..BnbOptions::default() };
    (model, solver)
}

fn strategy(s: PmcvarStrategy, gamma: f64) -> Strategy {
    match s {
        PmcvarStrategy::Unified => Strategy::Unified { gamma },
        PmcvarStrategy::CvarCc => Strategy::CvarCc,
        PmcvarStrategy::PureCvar => Strategy::PureCvar,
        PmcvarStrategy::Index => Strategy::Index,
    }
}

fn into_c_string(s: String, out: *mut *mut c_char) -> PmcvarStatus {
    match CString::new(s) {
        Ok(c) => {
            // SAFETY: caller checked `out` for null.
            unsafe { *out = c.into_raw() };
            PmcvarStatus::Ok
        }
        Err(e) => fail(PmcvarStatus::Internal, e.to_string()),
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pmcvar_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Defaults: p = 5, beta = 0.05, index return floor, gamma = 1, one hour
/// per solve, relative gap 1e-6.
#[no_mangle]
pub extern "C" fn pmcvar_model_options_default() -> PmcvarModelOptions {
    PmcvarModelOptions { p: 5, beta: 0.05, mu0: 0.0, mu0_index: 1, gamma: 1.0, time_limit: 3600.0, gap_tol: 1e-6 }
}

/// Loads a price CSV (`date,asset...` header, one row per date).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pmcvar_panel_from_csv(path: *const c_char, out: *mut *mut PmcvarPanel) -> PmcvarStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(PmcvarStatus::NullPointer, "null argument");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(PmcvarStatus::InvalidArgument, "path is not UTF-8");
        };
        match load_prices(Path::new(path)) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(PmcvarPanel(p)));
                PmcvarStatus::Ok
            }
            Err(e) => data_status(e),
        }
    })
}

/// Synthetic block-factor market: `n` assets in `blocks` near-equal blocks,
/// `t` weekly returns (`t + 1` prices).
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pmcvar_panel_synthetic(
    n: usize,
    t: usize,
    blocks: usize,
    seed: u64,
    out: *mut *mut PmcvarPanel,
) -> PmcvarStatus {
    guard(|| {
        if out.is_null() {
            return fail(PmcvarStatus::NullPointer, "null argument");
        }
        if blocks == 0 {
            return fail(PmcvarStatus::InvalidArgument, "blocks must be >= 1");
        }
        match synthetic_market(&SyntheticSpec::new(n, t, SyntheticSpec::even_blocks(n, blocks), seed)) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(PmcvarPanel(p)));
                PmcvarStatus::Ok
            }
            Err(e) => fail(PmcvarStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `panel` must be a live handle; `n_assets` and `n_prices` writable (either may be NULL).
#[no_mangle]
pub unsafe extern "C" fn pmcvar_panel_dims(
    panel: *const PmcvarPanel,
    n_assets: *mut usize,
    n_prices: *mut usize,
) -> PmcvarStatus {
    guard(|| {
        let Some(p) = panel.as_ref() else {
            return fail(PmcvarStatus::NullPointer, "null panel");
        };
        if !n_assets.is_null() {
            *n_assets = p.0.n_assets();
        }
        if !n_prices.is_null() {
            *n_prices = p.0.n_obs();
        }
        PmcvarStatus::Ok
    })
}

/// # Safety
/// `panel` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn pmcvar_panel_free(panel: *mut PmcvarPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

fn solve_panel(
    panel: &PricePanel,
    kind: PmcvarStrategy,
    o: &PmcvarModelOptions,
) -> Result<PmcvarPortfolio, PmcvarStatus> {
    let simple = simple_returns(panel).map_err(data_status)?;
    let s = scenario_set(&simple, None).map_err(data_status)?;
    let d = correlation_distances(&log_returns(panel).map_err(data_status)?).map_err(data_status)?;
    let (model, solver) = params(o);
    if let Err(e) = solver.validate() {
        return Err(fail(PmcvarStatus::InvalidArgument, e.to_string()));
    }
    let cfg = model.to_config(&s, o.gamma);
    let solver: &dyn MilpSolver = &solver;
    let (solution, portfolio) = match kind {
        PmcvarStrategy::Unified => {
            let b = compute_bounds(&s, &d, &cfg, solver).map_err(formulation_status)?;
            let u = solve_unified(&s, &d, &cfg, &b, b.bounds.fp0, solver, None).map_err(formulation_status)?;
            (u.solution, u.portfolio)
        }
        PmcvarStrategy::CvarCc | PmcvarStrategy::PureCvar => {
            let f = if kind == PmcvarStrategy::CvarCc { build_cvar_cc(&s, &cfg) } else { build_pure_cvar(&s, &cfg) }
                .map_err(formulation_status)?;
            let seed = complete_with_representatives(&f, &top_mean_assets(&s, cfg.p)).map_err(formulation_status)?;
            let sol = solver.solve(&f.model, seed).map_err(formulation_status)?;
            if sol.status == MilpStatus::Infeasible {
                return Err(formulation_status(FormulationError::InfeasibleAtMu0(cfg.mu0)));
            }
            let p = extract_portfolio(&sol, &f, &s, &d, cfg.beta).map_err(formulation_status)?;
            (sol, p)
        }
        PmcvarStrategy::Index => {
            return Err(fail(PmcvarStatus::InvalidArgument, "the index strategy has nothing to solve"))
        }
    };
    Ok(PmcvarPortfolio { portfolio, solution })
}

/// Solves one model on the whole panel.
///
/// # Safety
/// `panel` must be a live handle, `opts` readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pmcvar_solve(
    panel: *const PmcvarPanel,
    strategy: PmcvarStrategy,
    opts: *const PmcvarModelOptions,
    out: *mut *mut PmcvarPortfolio,
) -> PmcvarStatus {
    guard(|| {
        let (Some(panel), Some(opts)) = (panel.as_ref(), opts.as_ref()) else {
            return fail(PmcvarStatus::NullPointer, "null argument");
        };
        if out.is_null() {
            return fail(PmcvarStatus::NullPointer, "null output");
        }
        match solve_panel(&panel.0, strategy, opts) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(p));
                PmcvarStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Copies the `n` weights into `buf` (capacity `len`).
///
/// # Safety
/// `portfolio` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pmcvar_portfolio_weights(
    portfolio: *const PmcvarPortfolio,
    buf: *mut f64,
    len: usize,
) -> PmcvarStatus {
    guard(|| {
        let Some(p) = portfolio.as_ref() else {
            return fail(PmcvarStatus::NullPointer, "null portfolio");
        };
        let w = &p.portfolio.weights;
        if buf.is_null() || len < w.len() {
            return fail(PmcvarStatus::BufferTooSmall, format!("need room for {} weights", w.len()));
        }
        ptr::copy_nonoverlapping(w.as_ptr(), buf, w.len());
        PmcvarStatus::Ok
    })
}

/// Writes the representative indices into `buf` (capacity `len`) and their
/// count into `count`. With `buf` NULL only the count is written.
///
/// # Safety
/// `portfolio` must be a live handle, `count` writable, `buf` NULL or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn pmcvar_portfolio_representatives(
    portfolio: *const PmcvarPortfolio,
    buf: *mut usize,
    len: usize,
    count: *mut usize,
) -> PmcvarStatus {
    guard(|| {
        let Some(p) = portfolio.as_ref() else {
            return fail(PmcvarStatus::NullPointer, "null portfolio");
        };
        if count.is_null() {
            return fail(PmcvarStatus::NullPointer, "null count");
        }
        let r = &p.portfolio.representatives;
        *count = r.len();
        if buf.is_null() {
            return PmcvarStatus::Ok;
        }
        if len < r.len() {
            return fail(PmcvarStatus::BufferTooSmall, format!("need room for {} indices", r.len()));
        }
        ptr::copy_nonoverlapping(r.as_ptr(), buf, r.len());
        PmcvarStatus::Ok
    })
}

/// # Safety
/// `portfolio` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pmcvar_portfolio_summary(
    portfolio: *const PmcvarPortfolio,
    out: *mut PmcvarSolveSummary,
) -> PmcvarStatus {
    guard(|| {
        let (Some(p), false) = (portfolio.as_ref(), out.is_null()) else {
            return fail(PmcvarStatus::NullPointer, "null argument");
        };
        *out = PmcvarSolveSummary {
            objective: p.solution.objective,
            cvar: p.portfolio.cvar_value,
            mean_return: p.portfolio.mean_return,
            fp_value: p.portfolio.fp_value,
            gap: p.solution.gap,
            nodes: p.solution.node_count,
            status: if p.solution.status == MilpStatus::Optimal { 0 } else { 1 },
        };
        PmcvarStatus::Ok
    })
}

/// Portfolio as JSON; release with [`pmcvar_string_free`].
///
/// # Safety
/// `portfolio` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pmcvar_portfolio_to_json(
    portfolio: *const PmcvarPortfolio,
    out: *mut *mut c_char,
) -> PmcvarStatus {
    guard(|| {
        let (Some(p), false) = (portfolio.as_ref(), out.is_null()) else {
            return fail(PmcvarStatus::NullPointer, "null argument");
        };
        match serde_json::to_string(&p.portfolio) {
            Ok(s) => into_c_string(s, out),
            Err(e) => fail(PmcvarStatus::Internal, e.to_string()),
        }
    })
}

/// # Safety
/// `portfolio` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn pmcvar_portfolio_free(portfolio: *mut PmcvarPortfolio) {
    if !portfolio.is_null() {
        drop(Box::from_raw(portfolio));
    }
}

/// Rolling-window backtest, single-threaded.
///
/// # Safety
/// `panel` must be a live handle, `opts` readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pmcvar_backtest(
    panel: *const PmcvarPanel,
    strategy_kind: PmcvarStrategy,
    opts: *const PmcvarModelOptions,
    in_len: usize,
    out_len: usize,
    out: *mut *mut PmcvarReport,
) -> PmcvarStatus {
    guard(|| {
        let (Some(panel), Some(opts)) = (panel.as_ref(), opts.as_ref()) else {
            return fail(PmcvarStatus::NullPointer, "null argument");
        };
        if out.is_null() {
            return fail(PmcvarStatus::NullPointer, "null output");
        }
        let (model, solver) = params(opts);
        let cfg = BacktestConfig {
            in_len,
            out_len,
            strategy: strategy(strategy_kind, opts.gamma),
            model,
            solver,
            ..BacktestConfig::default()
        };
        match run_backtest(&panel.0, &cfg) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(PmcvarReport(r)));
                PmcvarStatus::Ok
            }
            Err(e) => backtest_status(e),
        }
    })
}

/// Average out-of-sample return, problem count and Sharpe ratio. `sharpe` is
/// set to NaN when the out-of-sample series has zero variance. Any output may be NULL.
///
/// # Safety
/// `report` must be a live handle; non-NULL outputs writable.
#[no_mangle]
pub unsafe extern "C" fn pmcvar_report_measures(
    report: *const PmcvarReport,
    av: *mut f64,
    sharpe: *mut f64,
    n_problems: *mut usize,
) -> PmcvarStatus {
    guard(|| {
        let Some(r) = report.as_ref() else {
            return fail(PmcvarStatus::NullPointer, "null report");
        };
        if !av.is_null() {
            *av = r.0.av;
        }
        if !sharpe.is_null() {
            *sharpe = r.0.sharpe.unwrap_or(f64::NAN);
        }
        if !n_problems.is_null() {
            *n_problems = r.0.n_problems;
        }
        PmcvarStatus::Ok
    })
}

/// Full report as JSON; release with [`pmcvar_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pmcvar_report_to_json(report: *const PmcvarReport, out: *mut *mut c_char) -> PmcvarStatus {
    guard(|| {
        let (Some(r), false) = (report.as_ref(), out.is_null()) else {
            return fail(PmcvarStatus::NullPointer, "null argument");
        };
        match serde_json::to_string(&r.0) {
            Ok(s) => into_c_string(s, out),
            Err(e) => fail(PmcvarStatus::Internal, e.to_string()),
        }
    })
}

/// # Safety
/// `report` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn pmcvar_report_free(report: *mut PmcvarReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must be a string returned by this library, or NULL.
#[no_mangle]
pub unsafe extern "C" fn pmcvar_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
