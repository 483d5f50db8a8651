//! Bayesian Dirichlet autoregressive (BDARMA) forecasting of compositional
//! time series, with Gaussian VAR and naive baselines, proper scoring rules,
//! and a rolling-origin backtest driver.

pub mod backtest;
pub mod baselines;
pub mod dirichlet;
pub mod error;
pub mod fan;
pub mod hmc;
pub mod io;
mod linalg;
pub mod model;
pub mod scoring;
pub mod seasonal;
pub mod series;
pub mod simplex;
pub mod special;

pub use error::{Error, Result};
