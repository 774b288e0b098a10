//! Expenditure-aware rating prediction.
//!
//! Matrix factorization models whose predictions are corrected by an
//! expenditure term: a shared or per-user weight on normalized business
//! pricing, or per-user weights over expenditure grades found by a 1-D
//! Gaussian mixture. Includes RMSE/MAE evaluation protocols, a synthetic
//! review generator and the `earp` command line tool.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod matrix;
pub mod model;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
