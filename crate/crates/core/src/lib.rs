//! Catastrophic-claim risk modelling.
//!
//! Fits claim-severity distributions and non-homogeneous Poisson intensities to
//! event data, amplifies small datasets with bootstrap, bootknife or externally
//! generated synthetic samples, simulates the aggregate claim and risk-reserve
//! processes, and summarises simulated outcomes as an empirical LR fuzzy number.
//!
//! Monetary amounts are in thousands of currency units; times are in fractional
//! years.

pub mod data_ingest;
pub mod error;
pub mod fuzzy;
pub mod intensity;
pub mod resampling;
pub mod riskproc;
pub mod rng;
pub mod severity;
pub mod special;

/// Version of this library, echoed in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use data_ingest::{ClaimDataset, ClaimRecord};
pub use error::{Error, Result};
pub use fuzzy::EmpiricalFuzzyNumber;
pub use intensity::{IntensityFamily, IntensityModel};
pub use resampling::{ResampleMethod, ResampleSpec, SyntheticBatch};
pub use riskproc::{RiskConfig, TrajectorySummary, Window};
pub use severity::{GofResult, GofTest, SeverityFamily, SeverityModel};
