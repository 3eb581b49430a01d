//! Joint clustering and CVaR portfolio selection.
//!
//! Assets are vertices of a complete graph weighted by correlation distances.
//! A single mixed-integer linear program picks `p` representatives (a p-median
//! clustering) that are also the only assets held, maximises the CVaR of the
//! resulting portfolio, and bounds the clustering cost by an interpolated
//! budget. The crate ships its own bounded simplex and branch-and-bound
//! engine, the bound computations for the clustering budget, and a
//! rolling-window backtester.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod backtest;
pub mod branch_bound;
pub mod cli;
pub mod formulations;
pub mod market_data;
pub mod model_ir;
pub mod simplex;
