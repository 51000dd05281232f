//! Regime-switching areal product partition model.
//!
//! Time series observed on a rectangular grid are clustered per regime into
//! spatially coherent groups sharing regression coefficients, with a Leroux
//! CAR spatial effect and regime change-points that switch which partition
//! is active.

pub mod cli;
pub mod error;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod model;
pub mod partitions;
pub mod sampler;
pub mod summaries;
pub mod timeline;

pub use error::{Error, Result};
