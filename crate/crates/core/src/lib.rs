//! Calibration toolkit: hard and soft-binned calibration error, soft AvUC,
//! temperature scaling, and a small trainer that uses the soft objectives as
//! secondary losses.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod avuc;
pub mod binning;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod numeric;
pub mod recalibration;
pub mod trainer;

pub use data::{argmax_stable, summarize, EvalSet, PredictionSummary};
pub use error::{CalrefError, Result};
