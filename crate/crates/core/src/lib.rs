//! Space-time least-squares solvers for time-dependent Schrödinger equations.

// index loops mirror the formulas; negated comparisons deliberately reject NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::suspicious_arithmetic_impl)]

pub mod als_solver;
pub mod block_linalg;
pub mod error;
pub mod gaussian;
pub mod greedy_solver;
pub mod matrix_model;
pub mod matrix_reference;
pub mod projector_splitting;
pub mod spectral_reference;
pub mod time_grid;

pub use error::{Error, Result};
