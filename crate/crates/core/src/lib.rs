//! Event-locked causal analysis of bivariate time series.
//!
//! Trials are modelled by a time-inhomogeneous bivariate vector
//! autoregression fitted across trials at every time point. From the fitted
//! coefficients and the cross-trial moments of the lag vectors the crate
//! computes Granger causality, transfer entropy, dynamic causal strength and
//! relative dynamic causal strength as time-resolved traces.

// `!(x > 0.0)` is used on purpose so that NaN falls into the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod causality;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod estimation;
pub mod events;
pub mod linalg;
pub mod pipeline;
pub mod simulation;

pub use ensemble::{ModelConfig, TimeSeriesEnsemble};
pub use error::{Error, Result};
