//! Exact rational simplex (dense tableau, Bland's rule) used as a reference
//! for the floating-point engine. Small integer LPs only.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use pmcvar::model_ir::{MilpModel, Sense, VarKind};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

/// maximize c x  s.t. rows, 0 <= x_j <= upper_j (upper optional).
#[derive(Debug, Clone)]
pub struct IntLp {
    pub n: usize,
    pub c: Vec<i64>,
    pub rows: Vec<(Vec<i64>, RowSense, i64)>,
    pub upper: Vec<Option<i64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExactStatus {
    Optimal(BigRational),
    Infeasible,
    Unbounded,
}

fn q(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

pub fn random_lp<R: Rng>(rng: &mut R, max_rows: usize, max_cols: usize) -> IntLp {
    let n = rng.gen_range(1..=max_cols);
    let m = rng.gen_range(1..=max_rows);
    let c = (0..n).map(|_| rng.gen_range(-9..=9)).collect();
    let rows = (0..m)
        .map(|_| {
            let density = rng.gen_range(0.2..1.0);
            let mut a: Vec<i64> =
                (0..n).map(|_| if rng.gen_bool(density) { rng.gen_range(-9..=9) } else { 0 }).collect();
            if a.iter().all(|&v| v == 0) {
                let j = rng.gen_range(0..n);
                a[j] = rng.gen_range(1..=9);
            }
            let sense = match rng.gen_range(0..10) {
                0..=5 => RowSense::Le,
                6..=8 => RowSense::Ge,
                _ => RowSense::Eq,
            };
            (a, sense, rng.gen_range(-9..=9))
        })
        .collect();
    let bounded_share = rng.gen_range(0.0..1.0);
    let upper = (0..n).map(|_| rng.gen_bool(bounded_share).then(|| rng.gen_range(1..=9))).collect();
    IntLp { n, c, rows, upper }
}

pub fn to_model(lp: &IntLp) -> MilpModel {
    let mut m = MilpModel::new(Sense::Maximize);
    for j in 0..lp.n {
        let ub = lp.upper[j].map_or(f64::INFINITY, |u| u as f64);
        m.add_var(format!("x{j}"), VarKind::Continuous, 0.0, ub, lp.c[j] as f64);
    }
    for (i, (a, sense, b)) in lp.rows.iter().enumerate() {
        let coefs: Vec<(usize, f64)> =
            a.iter().enumerate().filter(|(_, &v)| v != 0).map(|(j, &v)| (j, v as f64)).collect();
        let b = *b as f64;
        let (lo, hi) = match sense {
            RowSense::Le => (f64::NEG_INFINITY, b),
            RowSense::Ge => (b, f64::INFINITY),
            RowSense::Eq => (b, b),
        };
        m.add_row(format!("r{i}"), &coefs, lo, hi);
    }
    m
}

pub fn solve_exact(lp: &IntLp) -> ExactStatus {
    // Gather rows: originals plus explicit upper bounds.
    let mut rows: Vec<(Vec<BigRational>, RowSense, BigRational)> =
        lp.rows.iter().map(|(a, s, b)| (a.iter().map(|&v| q(v)).collect(), *s, q(*b))).collect();
    for j in 0..lp.n {
        if let Some(u) = lp.upper[j] {
            let mut a = vec![BigRational::zero(); lp.n];
            a[j] = BigRational::one();
            rows.push((a, RowSense::Le, q(u)));
        }
    }
    // Nonnegative right-hand sides.
    for (a, s, b) in rows.iter_mut() {
        if b.is_negative() {
            for v in a.iter_mut() {
                *v = -v.clone();
            }
            *b = -b.clone();
            *s = match s {
                RowSense::Le => RowSense::Ge,
                RowSense::Ge => RowSense::Le,
                RowSense::Eq => RowSense::Eq,
            };
        }
    }
    let m = rows.len();
    let n = lp.n;
    let n_slack = rows.iter().filter(|r| r.1 != RowSense::Eq).count();
    let art0 = n + n_slack;
    let ncols = art0 + m;
    let mut t = vec![vec![BigRational::zero(); ncols + 1]; m];
    let mut s = n;
    for (i, (a, sense, b)) in rows.iter().enumerate() {
        for j in 0..n {
            t[i][j] = a[j].clone();
        }
        match sense {
            RowSense::Le => {
                t[i][s] = BigRational::one();
                s += 1;
            }
            RowSense::Ge => {
                t[i][s] = -BigRational::one();
                s += 1;
            }
            RowSense::Eq => {}
        }
        t[i][art0 + i] = BigRational::one();
        t[i][ncols] = b.clone();
    }
    let mut basis: Vec<usize> = (art0..art0 + m).collect();

    // Phase 1: minimise the sum of artificials.
    let mut cost1 = vec![BigRational::zero(); ncols];
    for j in art0..ncols {
        cost1[j] = BigRational::one();
    }
    match run_bland(&mut t, &mut basis, &cost1, ncols, ncols) {
        Outcome::Optimal => {}
        Outcome::Unbounded => unreachable!("phase 1 is bounded"),
    }
    let infeas: BigRational = basis
        .iter()
        .enumerate()
        .filter(|(_, &b)| b >= art0)
        .map(|(i, _)| t[i][ncols].clone())
        .fold(BigRational::zero(), |a, b| a + b);
    if infeas.is_positive() {
        return ExactStatus::Infeasible;
    }
    // Drive zero-level artificials out where possible.
    for i in 0..m {
        if basis[i] >= art0 {
            if let Some(j) = (0..art0).find(|&j| !t[i][j].is_zero()) {
                pivot(&mut t, &mut basis, i, j, ncols);
            }
        }
    }
    // Phase 2: minimise -c x; artificials may not enter.
    let mut cost2 = vec![BigRational::zero(); ncols];
    for j in 0..n {
        cost2[j] = q(-lp.c[j]);
    }
    match run_bland(&mut t, &mut basis, &cost2, art0, ncols) {
        Outcome::Unbounded => ExactStatus::Unbounded,
        Outcome::Optimal => {
            let mut obj = BigRational::zero();
            for (i, &b) in basis.iter().enumerate() {
                if b < n {
                    obj += q(lp.c[b]) * t[i][ncols].clone();
                }
            }
            ExactStatus::Optimal(obj)
        }
    }
}

enum Outcome {
    Optimal,
    Unbounded,
}

fn run_bland(
    t: &mut [Vec<BigRational>],
    basis: &mut [usize],
    cost: &[BigRational],
    enter_limit: usize,
    ncols: usize,
) -> Outcome {
    let m = t.len();
    loop {
        let mut enter = None;
        for j in 0..enter_limit {
            if basis.contains(&j) {
                continue;
            }
            let mut r = cost[j].clone();
            for i in 0..m {
                if !t[i][j].is_zero() {
                    r -= cost[basis[i]].clone() * t[i][j].clone();
                }
            }
            if r.is_negative() {
                enter = Some(j);
                break;
            }
        }
        let Some(j) = enter else { return Outcome::Optimal };
        let mut leave: Option<(usize, BigRational)> = None;
        for i in 0..m {
            if t[i][j].is_positive() {
                let ratio = t[i][ncols].clone() / t[i][j].clone();
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => ratio < *lr || (ratio == *lr && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((i, _)) = leave else { return Outcome::Unbounded };
        pivot(t, basis, i, j, ncols);
    }
}

fn pivot(t: &mut [Vec<BigRational>], basis: &mut [usize], r: usize, c: usize, ncols: usize) {
    let p = t[r][c].clone();
    for k in 0..=ncols {
        if !t[r][k].is_zero() {
            t[r][k] = t[r][k].clone() / p.clone();
        }
    }
    let prow = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i == r || row[c].is_zero() {
            continue;
        }
        let f = row[c].clone();
        for k in 0..=ncols {
            if !prow[k].is_zero() {
                row[k] -= f.clone() * prow[k].clone();
            }
        }
    }
    basis[r] = c;
}

pub fn to_f64(v: &BigRational) -> f64 {
    use num::ToPrimitive;
    v.to_f64().expect("finite rational")
}
