//! Boost-converter stress workbench for GaN HEMTs.
//!
//! * [`device`]: ratings, live on-resistance, safe-operating-area checks
//! * [`converter`]: switched piecewise-linear boost simulation
//! * [`degradation`]: log-time hot-carrier on-resistance drift
//! * [`extraction`]: R_DS(on) from averaged drain voltage, log-time fits
//! * [`campaign`]: stress matrices over voltage and temperature
//! * [`config`] / [`output`]: TOML configuration and CSV/record output

// NaN must fail the range checks, so `!(x > 0.0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod campaign;
pub mod config;
pub mod converter;
pub mod degradation;
pub mod device;
pub mod error;
pub mod extraction;
pub mod output;
pub mod units;

pub use error::{Error, Result};
