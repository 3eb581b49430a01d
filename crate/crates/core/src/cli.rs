//! Command-line front end. `run` parses arguments, executes one command and
//! returns the process exit code: 0 success, 2 input error, 3 infeasible,
//! 4 solver failure.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::backtest::{
    gamma_sweep, reports_csv, run_backtest, timings_csv, BacktestConfig, BacktestError, BacktestReport,
    InfeasiblePolicy, ModelParams, Mu0, Strategy, CSV_HEADER,
};
use crate::branch_bound::BnbOptions;
use crate::formulations::{
    build_cvar_cc, build_pure_cvar, complete_with_representatives, compute_bounds, extract_portfolio, solve_unified,
    top_mean_assets, FormulationError, FpBounds, MilpSolver, ModelConfig, Portfolio,
};
use crate::market_data::{
    correlation_distances, load_prices, log_returns, scenario_set, simple_returns, synthetic_market, MarketDataError,
    PricePanel, SyntheticSpec,
};
use crate::model_ir::{MilpSolution, MilpStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Infeasible(String),
    Solver(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Infeasible(m) | CliError::Solver(m) => m,
        }
    }
}

impl From<MarketDataError> for CliError {
    fn from(e: MarketDataError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<FormulationError> for CliError {
    fn from(e: FormulationError) -> Self {
        match e {
            FormulationError::InfeasibleAtMu0(_) => CliError::Infeasible(e.to_string()),
            FormulationError::DimensionMismatch(_) | FormulationError::InvalidConfig(_) => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<BacktestError> for CliError {
    fn from(e: BacktestError) -> Self {
        let msg = e.to_string();
        match e {
            BacktestError::Data(_) | BacktestError::InvalidConfig(_) | BacktestError::TooFewObservations { .. } => {
                CliError::Input(msg)
            }
            BacktestError::Window { source, .. } | BacktestError::Formulation(source) => match CliError::from(source) {
                CliError::Input(_) => CliError::Input(msg),
                CliError::Infeasible(_) => CliError::Infeasible(msg),
                CliError::Solver(_) => CliError::Solver(msg),
            },
            _ => CliError::Solver(msg),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum StrategyKind {
    Unified,
    CvarCc,
    PureCvar,
    Index,
}

impl StrategyKind {
    fn with_gamma(self, gamma: f64) -> Strategy {
        match self {
            StrategyKind::Unified => Strategy::Unified { gamma },
            StrategyKind::CvarCc => Strategy::CvarCc,
            StrategyKind::PureCvar => Strategy::PureCvar,
            StrategyKind::Index => Strategy::Index,
        }
    }
}

/// Market generated when no price file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n: usize,
    /// Number of weekly returns.
    pub t: usize,
    pub blocks: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { n: 28, t: 260, blocks: 4 }
    }
}

/// Everything a run needs; loaded from JSON, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub prices: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub model: ModelParams,
    pub gamma: f64,
    /// Gamma grid of `compare`, any order.
    pub gammas: Vec<f64>,
    /// Sweep over these `p` values; empty means `model.p` only.
    pub p_list: Vec<usize>,
    pub strategy: StrategyKind,
    pub strategies: Vec<StrategyKind>,
    pub in_len: usize,
    pub out_len: usize,
    pub threads: usize,
    pub on_infeasible: InfeasiblePolicy,
    /// Return rows `[start, end)` used by `solve`; all rows when absent.
    pub window: Option<[usize; 2]>,
    pub solver: BnbOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            prices: None,
            synthetic: SyntheticConfig::default(),
            out: PathBuf::from("out"),
            seed: 0,
            model: ModelParams::default(),
            gamma: 1.0,
            gammas: (1..=10).rev().map(|k| k as f64 / 10.0).collect(),
            p_list: Vec::new(),
            strategy: StrategyKind::Unified,
            strategies: vec![StrategyKind::Unified, StrategyKind::CvarCc, StrategyKind::PureCvar, StrategyKind::Index],
            in_len: 104,
            out_len: 52,
            threads: 1,
            on_infeasible: InfeasiblePolicy::Abort,
            window: None,
            solver: BnbOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Input(m));
        if self.model.p < 1 || self.p_list.iter().any(|&p| p < 1) {
            return bad("p must be >= 1".into());
        }
        if !(self.model.beta > 0.0 && self.model.beta <= 1.0) {
            return bad(format!("beta = {} outside (0, 1]", self.model.beta));
        }
        if let Mu0::Value(v) = self.model.mu0 {
            if v.is_nan() || v == f64::INFINITY {
                return bad(format!("mu0 = {v} is not usable"));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) || self.gammas.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return bad("gamma values must lie in [0, 1]".into());
        }
        if self.gammas.is_empty() {
            return bad("gammas is empty".into());
        }
        if self.strategies.is_empty() {
            return bad("strategies is empty".into());
        }
        if let Some([a, b]) = self.window {
            if a + 2 > b {
                return bad(format!("window [{a}, {b}) holds fewer than 2 returns"));
            }
        }
        if self.synthetic.n < 1 || self.synthetic.blocks < 1 || self.synthetic.t < 2 {
            return bad("synthetic market needs n >= 1, blocks >= 1, t >= 2".into());
        }
        self.backtest_config(Strategy::Index, self.model.p).validate().map_err(CliError::from)
    }

    pub fn p_values(&self) -> Vec<usize> {
        if self.p_list.is_empty() {
            vec![self.model.p]
        } else {
            self.p_list.clone()
        }
    }

    pub fn backtest_config(&self, strategy: Strategy, p: usize) -> BacktestConfig {
        BacktestConfig {
            in_len: self.in_len,
            out_len: self.out_len,
            strategy,
            model: ModelParams { p, ..self.model.clone() },
            solver: self.solver.clone(),
            on_infeasible: self.on_infeasible,
            threads: self.threads,
        }
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        let s = &self.synthetic;
        SyntheticSpec::new(s.n, s.t, SyntheticSpec::even_blocks(s.n, s.blocks), self.seed)
    }

    /// The price file, or the synthetic market when none is configured.
    pub fn panel(&self) -> CliResult<PricePanel> {
        match &self.prices {
            Some(p) => Ok(load_prices(p)?),
            None => Ok(synthetic_market(&self.synthetic_spec())?),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pmcvar", version, about = "Clustering-constrained CVaR portfolio selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Summarise a price file.
    Info(Common),
    /// Solve one model on the whole sample (or `window`).
    Solve(Common),
    /// Rolling-window backtest of one strategy.
    Backtest(Common),
    /// Gamma sweep against the benchmark strategies.
    Compare(Common),
    /// Write a synthetic block-factor market to CSV.
    Gen(Common),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub prices: Option<PathBuf>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// A number, `index` (equal-weighted in-sample mean) or `none`.
    #[arg(long, allow_hyphen_values = true)]
    pub mu0: Option<Mu0>,
    #[arg(long)]
    pub in_len: Option<usize>,
    #[arg(long)]
    pub out_len: Option<usize>,
    /// Seconds per MILP solve.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Relative optimality gap at which branch and bound stops.
    #[arg(long)]
    pub gap_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated list of p values.
    #[arg(long, value_delimiter = ',')]
    pub p_list: Option<Vec<usize>>,
    /// Comma-separated gamma grid.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyKind>,
    /// Comma-separated strategies for `compare`.
    #[arg(long, value_delimiter = ',', value_enum)]
    pub strategies: Option<Vec<StrategyKind>>,
    /// Synthetic market size (`gen` and runs without a price file).
    #[arg(long)]
    pub n: Option<usize>,
    /// Synthetic number of weekly returns.
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
}

impl Common {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_json(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:tt)+) => {
                if let Some(v) = self.$flag.clone() {
                    c.$($field)+ = v;
                }
            };
        }
        if let Some(p) = &self.prices {
            c.prices = Some(p.clone());
        }
        set!(p => model.p);
        set!(gamma => gamma);
        set!(beta => model.beta);
        set!(mu0 => model.mu0);
        set!(in_len => in_len);
        set!(out_len => out_len);
        set!(time_limit => solver.time_limit);
        set!(gap_tol => solver.rel_gap_tol);
        set!(seed => seed);
        set!(threads => threads);
        set!(out => out);
        set!(p_list => p_list);
        set!(gammas => gammas);
        set!(strategy => strategy);
        set!(strategies => strategies);
        set!(n => synthetic.n);
        set!(t => synthetic.t);
        set!(blocks => synthetic.blocks);
        c.validate()?;
        Ok(c)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

pub fn execute(cmd: &Command, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Info(c) => cmd_info(&c.resolve()?, out),
        Command::Solve(c) => cmd_solve(&c.resolve()?, out),
        Command::Backtest(c) => cmd_backtest(&c.resolve()?, out),
        Command::Compare(c) => cmd_compare(&c.resolve()?, out),
        Command::Gen(c) => cmd_gen(&c.resolve()?, out),
    }
}

/// `x` with six significant digits, exponent form outside [1e-4, 1e6).
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci.split('e').nth(1).and_then(|e| e.parse().ok()).unwrap_or(0);
    if !(-4..6).contains(&exp) {
        let (mant, e) = sci.split_once('e').expect("exponent form");
        return format!("{}e{e}", trim_zeros(mant));
    }
    trim_zeros(&format!("{:.*}", (5 - exp) as usize, x))
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn w(out: &mut dyn Write, line: impl AsRef<str>) -> CliResult<()> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| CliError::Input(format!("stdout: {e}")))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

pub fn cmd_info(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let panel = cfg.panel()?;
    let r = simple_returns(&panel)?;
    let dates = panel.dates();
    w(out, format!("assets        {}", panel.n_assets()))?;
    w(out, format!("prices        {}", panel.n_obs()))?;
    w(out, format!("returns       {}", r.n_periods()))?;
    w(out, format!("dates         {} .. {}", dates[0], dates[dates.len() - 1]))?;
    w(out, format!("{:<16} {:>12} {:>12} {:>12} {:>12}", "asset", "mean", "std", "min", "max"))?;
    for (j, id) in panel.asset_ids().iter().enumerate() {
        let col = r.returns.column(j);
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let sd =
            if col.len() > 1 { (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        w(out, format!("{:<16} {:>12} {:>12} {:>12} {:>12}", id, sig6(mean), sig6(sd), sig6(lo), sig6(hi)))?;
    }
    if panel.n_assets() < 2 {
        w(out, "correlation   n/a")?;
        return Ok(());
    }
    let d = correlation_distances(&log_returns(&panel)?)?;
    let mut lo = (f64::INFINITY, 0, 0);
    let mut hi = (f64::NEG_INFINITY, 0, 0);
    for i in 0..d.n() {
        for j in (i + 1)..d.n() {
            let rho = d.rho[[i, j]];
            if rho < lo.0 {
                lo = (rho, i, j);
            }
            if rho > hi.0 {
                hi = (rho, i, j);
            }
        }
    }
    let ids = panel.asset_ids();
    w(out, format!("min rho       {} ({}, {})", sig6(lo.0), ids[lo.1], ids[lo.2]))?;
    w(out, format!("max rho       {} ({}, {})", sig6(hi.0), ids[hi.1], ids[hi.2]))?;
    if !d.zero_variance.is_empty() {
        let names: Vec<&str> = d.zero_variance.iter().map(|&j| ids[j].as_str()).collect();
        w(out, format!("constant      {}", names.join(", ")))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SolveOutput<'a> {
    strategy: StrategyKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    status: MilpStatus,
    objective: f64,
    best_bound: f64,
    gap: f64,
    nodes: usize,
    config: &'a ModelConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    bounds: Option<FpBounds>,
    asset_ids: &'a [String],
    portfolio: &'a Portfolio,
}

pub fn cmd_solve(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let panel = cfg.panel()?;
    let mut simple = simple_returns(&panel)?;
    let mut logr = log_returns(&panel)?;
    if let Some([a, b]) = cfg.window {
        if b > simple.n_periods() {
            return Err(CliError::Input(format!("window end {b} beyond {} returns", simple.n_periods())));
        }
        simple = simple.slice_rows(a, b);
        logr = logr.slice_rows(a, b);
    }
    let s = scenario_set(&simple, None)?;
    let d = correlation_distances(&logr)?;
    let mcfg = cfg.model.to_config(&s, cfg.gamma);
    let solver: &dyn MilpSolver = &cfg.solver;
    let t0 = Instant::now();
    let (sol, portfolio, bounds): (MilpSolution, Portfolio, Option<FpBounds>) = match cfg.strategy {
        StrategyKind::Unified => {
            let b = compute_bounds(&s, &d, &mcfg, solver)?;
            let u = solve_unified(&s, &d, &mcfg, &b, b.bounds.fp0, solver, None)?;
            (u.solution, u.portfolio, Some(b.bounds))
        }
        StrategyKind::CvarCc | StrategyKind::PureCvar => {
            let f = if cfg.strategy == StrategyKind::CvarCc {
                build_cvar_cc(&s, &mcfg)?
            } else {
                build_pure_cvar(&s, &mcfg)?
            };
            let seed = complete_with_representatives(&f, &top_mean_assets(&s, mcfg.p))?;
            let sol = solver.solve(&f.model, seed)?;
            if sol.status == MilpStatus::Infeasible {
                return Err(FormulationError::InfeasibleAtMu0(mcfg.mu0).into());
            }
            let p = extract_portfolio(&sol, &f, &s, &d, mcfg.beta)?;
            (sol, p, None)
        }
        StrategyKind::Index => return Err(CliError::Input("the index strategy has nothing to solve".into())),
    };
    let elapsed = t0.elapsed().as_secs_f64();
    let gamma = (cfg.strategy == StrategyKind::Unified).then_some(cfg.gamma);
    let ids = panel.asset_ids();
    let doc = SolveOutput {
        strategy: cfg.strategy,
        gamma,
        status: sol.status,
        objective: sol.objective,
        best_bound: sol.best_bound,
        gap: sol.gap,
        nodes: sol.node_count,
        config: &mcfg,
        bounds,
        asset_ids: ids,
        portfolio: &portfolio,
    };
    let path = write_file(&cfg.out, "portfolio.json", &to_json(&doc))?;

    let status = serde_json::to_value(sol.status).expect("status").as_str().unwrap_or_default().to_string();
    w(out, format!("status          {status}"))?;
    w(out, format!("objective       {}", sig6(sol.objective)))?;
    let reps: Vec<&str> = portfolio.representatives.iter().map(|&j| ids[j].as_str()).collect();
    w(out, format!("representatives {}", reps.join(" ")))?;
    w(out, "weights")?;
    for (j, &x) in portfolio.weights.iter().enumerate() {
        if x >= 1e-6 {
            w(out, format!("  {:<14} {}", ids[j], sig6(x)))?;
        }
    }
    if let Some(b) = bounds {
        w(out, format!("fp lower        {}", sig6(b.fp_lower)))?;
        w(out, format!("fp upper        {}", sig6(b.fp_upper)))?;
        w(out, format!("fp budget       {}", sig6(b.fp0)))?;
    }
    w(out, format!("fp value        {}", sig6(portfolio.fp_value)))?;
    w(out, format!("cvar            {}", sig6(portfolio.cvar_value)))?;
    w(out, format!("mean return     {}", sig6(portfolio.mean_return)))?;
    w(out, format!("time            {} s", sig6(elapsed)))?;
    w(out, format!("gap             {}", sig6(sol.gap)))?;
    w(out, format!("nodes           {}", sol.node_count))?;
    w(out, format!("written         {}", path.display()))?;
    Ok(())
}

fn print_rows(out: &mut dyn Write, reports: &[BacktestReport]) -> CliResult<()> {
    w(
        out,
        format!(
            "{:<10} {:>6} {:>4} {:>8} {:>12} {:>10} {:>10} {:>10}",
            "strategy", "gamma", "p", "problems", "av(1e-3)", "sharpe", "time", "gap"
        ),
    )?;
    for r in reports {
        let dash = || "-".to_string();
        w(
            out,
            format!(
                "{:<10} {:>6} {:>4} {:>8} {:>12} {:>10} {:>10} {:>10}",
                r.strategy,
                r.gamma.map(sig6).unwrap_or_else(dash),
                r.p,
                r.n_problems,
                sig6(r.av * 1e3),
                r.sharpe.map(sig6).unwrap_or_else(|| "undef".into()),
                if r.avg_gap.is_some() { sig6(r.avg_time) } else { dash() },
                r.avg_gap.map(sig6).unwrap_or_else(dash),
            ),
        )?;
    }
    Ok(())
}

fn write_reports(cfg: &RunConfig, stem: &str, csv: &str, reports: &[BacktestReport]) -> CliResult<Vec<PathBuf>> {
    Ok(vec![
        write_file(&cfg.out, &format!("{stem}.json"), &to_json(&reports))?,
        write_file(&cfg.out, &format!("{stem}.csv"), csv)?,
        write_file(&cfg.out, "timings.csv", &timings_csv(reports))?,
    ])
}

pub fn cmd_backtest(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let panel = cfg.panel()?;
    let mut reports = Vec::new();
    for p in cfg.p_values() {
        let bc = cfg.backtest_config(cfg.strategy.with_gamma(cfg.gamma), p);
        reports.push(run_backtest(&panel, &bc)?);
    }
    let paths = write_reports(cfg, "report", &reports_csv(&reports), &reports)?;
    print_rows(out, &reports)?;
    for p in paths {
        w(out, format!("written {}", p.display()))?;
    }
    Ok(())
}

/// Comparison flags of one summary row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Marks {
    pub italic: Option<bool>,
    pub bold_av: Option<bool>,
    pub bold_sharpe: Option<bool>,
}

fn beats(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a > b,
        (Some(_), None) => true,
        (None, _) => false,
    }
}

/// Italic: a unified row whose Av and Sharpe both beat every benchmark row
/// of the same `p`. Bold: the best Av and the best Sharpe per `p`; rows are
/// expected in unified-ascending-gamma order so ties go to the lowest gamma.
/// All flags are empty when only one strategy kind is present.
pub fn compare_marks(reports: &[BacktestReport]) -> Vec<Marks> {
    let kinds: std::collections::BTreeSet<&str> = reports.iter().map(|r| r.strategy.as_str()).collect();
    let mut marks = vec![Marks::default(); reports.len()];
    if kinds.len() < 2 {
        return marks;
    }
    let mut by_p: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in reports.iter().enumerate() {
        by_p.entry(r.p).or_default().push(i);
    }
    for rows in by_p.values() {
        let benchmarks: Vec<usize> = rows.iter().copied().filter(|&i| reports[i].strategy != "unified").collect();
        for &i in rows {
            let r = &reports[i];
            marks[i].bold_av = Some(false);
            marks[i].bold_sharpe = Some(false);
            if r.strategy == "unified" {
                let ok = !benchmarks.is_empty()
                    && benchmarks.iter().all(|&b| r.av > reports[b].av && beats(r.sharpe, reports[b].sharpe));
                marks[i].italic = Some(ok);
            }
        }
        let best = |key: &dyn Fn(&BacktestReport) -> Option<f64>| -> Option<usize> {
            let mut best: Option<(usize, f64)> = None;
            for &i in rows {
                if let Some(v) = key(&reports[i]) {
                    if best.is_none_or(|(_, b)| v > b) {
                        best = Some((i, v));
                    }
                }
            }
            best.map(|(i, _)| i)
        };
        if let Some(i) = best(&|r| Some(r.av)) {
            marks[i].bold_av = Some(true);
        }
        if let Some(i) = best(&|r| r.sharpe) {
            marks[i].bold_sharpe = Some(true);
        }
    }
    marks
}

pub fn compare_csv(reports: &[BacktestReport], marks: &[Marks]) -> String {
    let base = reports_csv(reports);
    let mut out = format!("{CSV_HEADER},italic,bold_av,bold_sharpe\n");
    let flag = |b: Option<bool>| b.map(|v| v.to_string()).unwrap_or_default();
    for (line, m) in base.lines().skip(1).zip(marks) {
        out.push_str(&format!("{line},{},{},{}\n", flag(m.italic), flag(m.bold_av), flag(m.bold_sharpe)));
    }
    out
}

pub fn cmd_compare(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let panel = cfg.panel()?;
    let mut desc = cfg.gammas.clone();
    desc.sort_by(|a, b| b.total_cmp(a));
    desc.dedup();
    let mut reports = Vec::new();
    for p in cfg.p_values() {
        if cfg.strategies.contains(&StrategyKind::Unified) {
            let bc = cfg.backtest_config(Strategy::Unified { gamma: desc[0] }, p);
            let mut sweep = gamma_sweep(&panel, &bc, &desc)?;
            sweep.reverse();
            reports.extend(sweep);
        }
        for kind in [StrategyKind::CvarCc, StrategyKind::PureCvar, StrategyKind::Index] {
            if cfg.strategies.contains(&kind) {
                reports.push(run_backtest(&panel, &cfg.backtest_config(kind.with_gamma(0.0), p))?);
            }
        }
    }
    let marks = compare_marks(&reports);
    let paths = write_reports(cfg, "compare", &compare_csv(&reports, &marks), &reports)?;
    print_rows(out, &reports)?;
    for p in paths {
        w(out, format!("written {}", p.display()))?;
    }
    Ok(())
}

pub fn cmd_gen(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let panel = synthetic_market(&cfg.synthetic_spec())?;
    fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))?;
    let path = cfg.out.join("prices.csv");
    panel.save_csv(&path)?;
    w(out, format!("{} assets x {} prices written to {}", panel.n_assets(), panel.n_obs(), path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_formats() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(2.71234567), "2.71235");
        assert_eq!(sig6(-0.0366092831821743), "-0.0366093");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(999999.7), "1e6");
        assert_eq!(sig6(1.5e-7), "1.5e-7");
        assert_eq!(sig6(0.0001), "0.0001");
    }

    #[test]
    fn config_defaults_and_rejection() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.gammas.len(), 10);
        assert!(RunConfig::from_json(r#"{"model": {"p": 3, "gama": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"unknown": 1}"#).is_err());
        let c = RunConfig::from_json(
            r#"{"model": {"p": 3, "mu0": "index"}, "strategy": "cvar_cc", "solver": {"time_limit": 5}}"#,
        )
        .unwrap();
        assert_eq!(c.model.p, 3);
        assert_eq!(c.strategy, StrategyKind::CvarCc);
        assert_eq!(c.solver.time_limit, 5.0);
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from(["pmcvar", "solve", "--p", "4", "--mu0", "-0.001", "--gammas", "0.5,1"]).unwrap();
        let Command::Solve(c) = cli.command else { panic!() };
        let cfg = c.resolve().unwrap();
        assert_eq!(cfg.model.p, 4);
        assert_eq!(cfg.model.mu0, Mu0::Value(-0.001));
        assert_eq!(cfg.gammas, vec![0.5, 1.0]);
    }

    fn report(strategy: &str, gamma: Option<f64>, av: f64, sharpe: Option<f64>) -> BacktestReport {
        BacktestReport {
            strategy: strategy.into(),
            gamma,
            p: 5,
            beta: 0.05,
            mu0: Mu0::Index,
            in_len: 104,
            out_len: 52,
            n_problems: 1,
            av,
            sharpe,
            avg_gap: None,
            avg_nodes: None,
            avg_time: 0.0,
            oos_returns: vec![],
            windows: vec![],
        }
    }

    #[test]
    fn marks_follow_the_rules() {
        let rows = vec![
            report("unified", Some(0.5), 0.004, Some(0.3)),
            report("unified", Some(1.0), 0.004, Some(0.2)),
            report("cvar_cc", None, 0.003, Some(0.25)),
            report("index", None, 0.001, None),
        ];
        let m = compare_marks(&rows);
        assert_eq!(m[0].italic, Some(true));
        assert_eq!(m[1].italic, Some(false));
        assert_eq!(m[2].italic, None);
        // Equal Av: the lower gamma row wins.
        assert_eq!(m.iter().filter(|x| x.bold_av == Some(true)).count(), 1);
        assert_eq!(m[0].bold_av, Some(true));
        assert_eq!(m[0].bold_sharpe, Some(true));
        let single = compare_marks(&rows[..2]);
        assert!(single.iter().all(|x| *x == Marks::default()));
    }
}
