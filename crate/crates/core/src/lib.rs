//! Slow-light pulse propagation, storage and retrieval in a three-level
//! medium: Maxwell-Bloch march, closed-form reference and protocol metrics.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atomic;
pub mod config;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod output;
pub mod physics;
pub mod pulse;
pub mod quad;
pub mod report;
pub mod solver;

pub use error::{Error, Result};
