#![allow(dead_code, clippy::needless_range_loop, clippy::manual_memcpy)]

pub mod exact_lp;
pub mod instances;

use pmcvar::branch_bound::BnbOptions;

/// Branch and bound closed to a relative gap far below the comparison tolerances.
pub fn tight() -> BnbOptions {
    BnbOptions { rel_gap_tol: 1e-10, ..BnbOptions::default() }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
