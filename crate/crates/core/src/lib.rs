// Negated comparisons such as `!(x > 0.0)` are used on purpose to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod hilbert;
pub mod jw;
pub mod linalg;
pub mod liouville;
pub mod metrics;
pub mod modes;
pub mod runner;
pub mod stochastic;
pub mod theory;

pub use config::{ChainConfig, TimeGrid};
pub use error::{Error, Result};
