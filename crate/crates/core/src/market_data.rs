//! Price ingestion and the derived statistics every model consumes:
//! simple and logarithmic returns, Pearson correlations with their
//! `sqrt(2(1 - rho))` distances, and probability-weighted scenario sets.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed csv at line {line}: {msg}")]
    MalformedCsv { line: usize, msg: String },
    #[error("non-positive prices: {}", format_offenders(.0))]
    NonPositivePrice(Vec<(String, String)>),
    #[error("dates are not strictly increasing at line {0}")]
    UnorderedDates(usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("expected {expected} returns, got {got}")]
    WrongReturnKind { expected: ReturnKind, got: ReturnKind },
    #[error("bad scenario probabilities: {0}")]
    BadProbabilities(String),
    #[error("bad block specification: {0}")]
    BadBlockSpec(String),
}

fn format_offenders(v: &[(String, String)]) -> String {
    let shown: Vec<String> = v.iter().take(8).map(|(a, d)| format!("{a}@{d}")).collect();
    if v.len() > 8 {
        format!("{} (and {} more)", shown.join(", "), v.len() - 8)
    } else {
        shown.join(", ")
    }
}

pub type Result<T> = std::result::Result<T, MarketDataError>;

/// Dates x assets matrix of strictly positive prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<String>,
    prices: Array2<f64>,
    asset_ids: Vec<String>,
}

impl PricePanel {
    /// Builds a panel after checking positivity, shape and (for ISO dates) ordering.
    pub fn new(dates: Vec<String>, prices: Array2<f64>, asset_ids: Vec<String>) -> Result<Self> {
        if prices.nrows() != dates.len() || prices.ncols() != asset_ids.len() {
            return Err(MarketDataError::MalformedCsv {
                line: 0,
                msg: format!(
                    "shape {}x{} does not match {} dates and {} assets",
                    prices.nrows(),
                    prices.ncols(),
                    dates.len(),
                    asset_ids.len()
                ),
            });
        }
        let mut offenders = Vec::new();
        for (t, row) in prices.outer_iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                if !(v > 0.0) || !v.is_finite() {
                    offenders.push((asset_ids[i].clone(), dates[t].clone()));
                }
            }
        }
        if !offenders.is_empty() {
            return Err(MarketDataError::NonPositivePrice(offenders));
        }
        check_date_order(&dates)?;
        Ok(Self { dates, prices, asset_ids })
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn prices(&self) -> ArrayView2<'_, f64> {
        self.prices.view()
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn n_obs(&self) -> usize {
        self.dates.len()
    }

    /// Rows `[start, end)` as a new panel.
    pub fn slice_rows(&self, start: usize, end: usize) -> PricePanel {
        PricePanel {
            dates: self.dates[start..end].to_vec(),
            prices: self.prices.slice(s![start..end, ..]).to_owned(),
            asset_ids: self.asset_ids.clone(),
        }
    }

    /// Writes the panel in the same CSV shape `load_prices` reads. Values use
    /// the shortest representation that parses back to the identical `f64`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "date")?;
        for a in &self.asset_ids {
            write!(w, ",{a}")?;
        }
        writeln!(w)?;
        for (t, row) in self.prices.outer_iter().enumerate() {
            write!(w, "{}", self.dates[t])?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

fn check_date_order(dates: &[String]) -> Result<()> {
    let parsed: Option<Vec<NaiveDate>> =
        dates.iter().map(|d| NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d").ok()).collect();
    match parsed {
        Some(ds) => {
            for k in 1..ds.len() {
                if ds[k] <= ds[k - 1] {
                    return Err(MarketDataError::UnorderedDates(k + 2));
                }
            }
        }
        None => {
            // Opaque labels: order is the file order, but duplicates are still an error.
            let mut seen = std::collections::BTreeSet::new();
            for (k, d) in dates.iter().enumerate() {
                if !seen.insert(d) {
                    return Err(MarketDataError::UnorderedDates(k + 2));
                }
            }
        }
    }
    Ok(())
}

/// Reads a price CSV: header row `date,<asset>,...`, one row per date.
///
/// Missing or non-numeric cells reject the whole file; non-positive prices are
/// collected and reported together.
pub fn load_prices(path: &Path) -> Result<PricePanel> {
    if !path.exists() {
        return Err(MarketDataError::FileNotFound(path.display().to_string()));
    }
    let file = File::open(path)?;
    read_prices(file)
}

pub fn read_prices<R: std::io::Read>(reader: R) -> Result<PricePanel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| MarketDataError::MalformedCsv { line: 1, msg: e.to_string() })?.clone();
    if header.len() < 2 {
        return Err(MarketDataError::MalformedCsv {
            line: 1,
            msg: "header needs a date column and at least one asset".into(),
        });
    }
    let asset_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if asset_ids.iter().any(|a| a.is_empty()) {
        return Err(MarketDataError::MalformedCsv { line: 1, msg: "empty asset name".into() });
    }
    let n = asset_ids.len();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| MarketDataError::MalformedCsv { line, msg: e.to_string() })?;
        if rec.len() != n + 1 {
            return Err(MarketDataError::MalformedCsv {
                line,
                msg: format!("expected {} fields, found {}", n + 1, rec.len()),
            });
        }
        dates.push(rec[0].to_string());
        for (i, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() {
                return Err(MarketDataError::MalformedCsv { line, msg: format!("missing value for {}", asset_ids[i]) });
            }
            let v: f64 = cell.parse().map_err(|_| MarketDataError::MalformedCsv {
                line,
                msg: format!("non-numeric value {cell:?} for {}", asset_ids[i]),
            })?;
            values.push(v);
        }
    }
    let prices = Array2::from_shape_vec((dates.len(), n), values).expect("row-major buffer matches shape");
    PricePanel::new(dates, prices, asset_ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnKind {
    Simple,
    Logarithmic,
}

impl std::fmt::Display for ReturnKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReturnKind::Simple => f.write_str("simple"),
            ReturnKind::Logarithmic => f.write_str("logarithmic"),
        }
    }
}

/// T x n per-period returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub returns: Array2<f64>,
    pub kind: ReturnKind,
    pub asset_ids: Vec<String>,
}

impl ReturnPanel {
    pub fn n_periods(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> ReturnPanel {
        ReturnPanel {
            returns: self.returns.slice(s![start..end, ..]).to_owned(),
            kind: self.kind,
            asset_ids: self.asset_ids.clone(),
        }
    }
}

fn returns_with(p: &PricePanel, kind: ReturnKind, f: impl Fn(f64, f64) -> f64) -> Result<ReturnPanel> {
    let rows = p.n_obs();
    if rows < 2 {
        return Err(MarketDataError::TooFewObservations { needed: 2, got: rows });
    }
    let prices = p.prices();
    let mut r = Array2::zeros((rows - 1, p.n_assets()));
    for t in 1..rows {
        for i in 0..p.n_assets() {
            r[[t - 1, i]] = f(prices[[t - 1, i]], prices[[t, i]]);
        }
    }
    Ok(ReturnPanel { returns: r, kind, asset_ids: p.asset_ids().to_vec() })
}

/// `(P(t) - P(t-1)) / P(t-1)`.
pub fn simple_returns(p: &PricePanel) -> Result<ReturnPanel> {
    returns_with(p, ReturnKind::Simple, |prev, cur| (cur - prev) / prev)
}

/// `ln P(t) - ln P(t-1)`.
pub fn log_returns(p: &PricePanel) -> Result<ReturnPanel> {
    returns_with(p, ReturnKind::Logarithmic, |prev, cur| cur.ln() - prev.ln())
}

/// Symmetric correlation and distance matrices over a complete asset graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub d: Array2<f64>,
    pub rho: Array2<f64>,
    /// Assets whose return series had zero variance; their correlations are set to 0.
    pub zero_variance: Vec<usize>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    /// Builds a distance-only matrix (rho is back-computed from `d = sqrt(2(1 - rho))`).
    /// Used for hand-built clustering instances.
    pub fn from_distances(d: Array2<f64>) -> Self {
        let rho = d.mapv(|v| 1.0 - v * v / 2.0);
        Self { d, rho, zero_variance: Vec::new() }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[[i, j]]
    }
}

/// Pearson correlations (sample covariance) of logarithmic returns and the
/// induced distances `sqrt(2(1 - rho))`.
pub fn correlation_distances(r: &ReturnPanel) -> Result<DistanceMatrix> {
    if r.kind != ReturnKind::Logarithmic {
        return Err(MarketDataError::WrongReturnKind { expected: ReturnKind::Logarithmic, got: r.kind });
    }
    let t = r.n_periods();
    if t < 2 {
        return Err(MarketDataError::TooFewObservations { needed: 2, got: t });
    }
    let rho = pearson(r.returns.view());
    let n = r.n_assets();
    let mut zero_variance = Vec::new();
    let means = r.returns.mean_axis(Axis(0)).expect("t >= 2");
    for i in 0..n {
        let var: f64 = r.returns.column(i).iter().map(|v| (v - means[i]).powi(2)).sum();
        if var == 0.0 {
            log::warn!("asset {} has a zero-variance return series; correlations set to 0", r.asset_ids[i]);
            zero_variance.push(i);
        }
    }
    let d = rho.mapv(|c| (2.0 * (1.0 - c)).max(0.0).sqrt());
    Ok(DistanceMatrix { d, rho, zero_variance })
}

const RHO_SNAP: f64 = 64.0 * f64::EPSILON;

/// Pearson correlation of the columns of `x`, divisor `T - 1`. Zero-variance
/// columns get correlation 0 against every other column.
pub fn pearson(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let (t, n) = x.dim();
    let means = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(n));
    let centered = &x - &means;
    let denom = (t.max(2) - 1) as f64;
    let cov = centered.t().dot(&centered) / denom;
    let mut rho = Array2::zeros((n, n));
    for i in 0..n {
        rho[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let sii = cov[[i, i]];
            let sjj = cov[[j, j]];
            let c = if sii > 0.0 && sjj > 0.0 {
                let c: f64 = (cov[[i, j]] / (sii * sjj).sqrt()).clamp(-1.0, 1.0);
                // Snap rounding noise at +-1: the distance sqrt amplifies a
                // 1e-16 error into a 1e-8 coefficient.
                if 1.0 - c.abs() <= RHO_SNAP {
                    c.signum()
                } else {
                    c
                }
            } else {
                0.0
            };
            rho[[i, j]] = c;
            rho[[j, i]] = c;
        }
    }
    rho
}

/// T scenarios of simple returns with probabilities and expected asset returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub returns: Array2<f64>,
    pub probs: Array1<f64>,
    pub mu: Array1<f64>,
}

impl ScenarioSet {
    pub fn n_scenarios(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    /// Builds directly from a returns matrix (simple returns assumed).
    pub fn from_returns(returns: Array2<f64>, probs: Option<&[f64]>) -> Result<Self> {
        let t = returns.nrows();
        if t == 0 {
            return Err(MarketDataError::TooFewObservations { needed: 1, got: 0 });
        }
        let probs = match probs {
            None => Array1::from_elem(t, 1.0 / t as f64),
            Some(p) => {
                if p.len() != t {
                    return Err(MarketDataError::BadProbabilities(format!(
                        "{} probabilities for {} scenarios",
                        p.len(),
                        t
                    )));
                }
                if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                    return Err(MarketDataError::BadProbabilities("negative or non-finite entry".into()));
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(MarketDataError::BadProbabilities(format!("sum is {sum}, not 1")));
                }
                Array1::from_iter(p.iter().map(|v| v / sum))
            }
        };
        let mu = returns.t().dot(&probs);
        Ok(Self { returns, probs, mu })
    }

    /// Portfolio return in scenario `t`: `sum_j r_jt x_j`.
    pub fn portfolio_returns(&self, x: &[f64]) -> Vec<f64> {
        self.returns.outer_iter().map(|row| row.iter().zip(x).map(|(r, w)| r * w).sum()).collect()
    }

    /// Expected portfolio return `sum_j mu_j x_j`.
    pub fn mean_return(&self, x: &[f64]) -> f64 {
        self.mu.iter().zip(x).map(|(m, w)| m * w).sum()
    }
}

/// Scenario set over a simple-return panel; probabilities default to uniform.
pub fn scenario_set(r: &ReturnPanel, probs: Option<&[f64]>) -> Result<ScenarioSet> {
    if r.kind != ReturnKind::Simple {
        return Err(MarketDataError::WrongReturnKind { expected: ReturnKind::Simple, got: r.kind });
    }
    ScenarioSet::from_returns(r.returns.clone(), probs)
}

/// Parameters of the block factor market generator.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    /// Number of returns; the panel has `t + 1` price rows.
    pub t: usize,
    /// Block sizes, in asset order; must sum to `n`.
    pub blocks: Vec<usize>,
    pub seed: u64,
    #[serde(default = "default_market_vol")]
    pub market_vol: f64,
    #[serde(default = "default_block_vol")]
    pub block_vol: f64,
    #[serde(default = "default_idio_vol")]
    pub idio_vol: f64,
}

fn default_market_vol() -> f64 {
    0.012
}
fn default_block_vol() -> f64 {
    0.02
}
fn default_idio_vol() -> f64 {
    0.015
}

impl SyntheticSpec {
    pub fn new(n: usize, t: usize, blocks: Vec<usize>, seed: u64) -> Self {
        Self {
            n,
            t,
            blocks,
            seed,
            market_vol: default_market_vol(),
            block_vol: default_block_vol(),
            idio_vol: default_idio_vol(),
        }
    }

    /// `k` blocks of near-equal size.
    pub fn even_blocks(n: usize, k: usize) -> Vec<usize> {
        let k = k.max(1);
        (0..k).map(|b| n / k + usize::from(b < n % k)).filter(|&s| s > 0).collect()
    }
}

/// Weekly geometric random walk driven by a market factor, one factor per
/// block and idiosyncratic noise. Deterministic for a fixed seed.
pub fn synthetic_market(spec: &SyntheticSpec) -> Result<PricePanel> {
    let SyntheticSpec { n, t, ref blocks, seed, market_vol, block_vol, idio_vol } = *spec;
    if n < 1 || t < 1 {
        return Err(MarketDataError::BadBlockSpec(format!("need n >= 1 and t >= 1, got n={n}, t={t}")));
    }
    if blocks.is_empty() || blocks.contains(&0) {
        return Err(MarketDataError::BadBlockSpec("blocks must be non-empty".into()));
    }
    let total: usize = blocks.iter().sum();
    if total != n {
        return Err(MarketDataError::BadBlockSpec(format!("block sizes sum to {total}, expected {n}")));
    }
    for v in [market_vol, block_vol, idio_vol] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(MarketDataError::BadBlockSpec("volatilities must be finite and >= 0".into()));
        }
    }
    let mut block_of = Vec::with_capacity(n);
    for (b, &size) in blocks.iter().enumerate() {
        block_of.extend(std::iter::repeat_n(b, size));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    // Per-asset drift and loadings.
    let drift: Vec<f64> = (0..n).map(|_| 0.0015 + 0.0015 * std.sample(&mut rng)).collect();
    let beta_mkt: Vec<f64> = (0..n).map(|_| 0.8 + 0.2 * std.sample(&mut rng).abs()).collect();
    let beta_blk: Vec<f64> = (0..n).map(|_| 0.9 + 0.2 * std.sample(&mut rng).abs()).collect();

    let mut prices = Array2::zeros((t + 1, n));
    for i in 0..n {
        prices[[0, i]] = 50.0 + 10.0 * i as f64 / n as f64;
    }
    for k in 1..=t {
        let f_mkt = market_vol * std.sample(&mut rng);
        let f_blk: Vec<f64> = (0..blocks.len()).map(|_| block_vol * std.sample(&mut rng)).collect();
        for i in 0..n {
            let r = drift[i] + beta_mkt[i] * f_mkt + beta_blk[i] * f_blk[block_of[i]] + idio_vol * std.sample(&mut rng);
            prices[[k, i]] = prices[[k - 1, i]] * r.exp();
        }
    }
    let start = NaiveDate::from_ymd_opt(2000, 1, 7).expect("valid date");
    let dates = (0..=t).map(|k| (start + Duration::weeks(k as i64)).format("%Y-%m-%d").to_string()).collect();
    let width = (n.max(2) - 1).to_string().len();
    let asset_ids = (0..n).map(|i| format!("B{}A{:0width$}", block_of[i], i, width = width)).collect();
    PricePanel::new(dates, prices, asset_ids)
}
