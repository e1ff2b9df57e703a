//! Forecast combination laboratory.
//!
//! Streaming combiners (simple average, Bates-Granger inverse-variance
//! weighting, regression weights, AFTER and its two-level variant), the
//! simulation scenarios used to study them, best-subset screening, analytic
//! risk limits and an experiment harness that turns all of it into
//! normalized-risk tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combiners;
pub mod dgp;
pub mod error;
pub mod harness;
pub mod io;
pub mod mafter;
pub mod metrics;
pub mod numerics;
pub mod oracle;
pub mod screening;
pub mod types;

pub use error::{Error, Result};
pub use types::{EvaluationWindow, ForecastPanel, RiskReport, WeightKind, WeightVector};
