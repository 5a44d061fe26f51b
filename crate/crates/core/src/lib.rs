//! Covariate adjustment for average treatment effects in stratified
//! (covariate-adaptive) randomized trials.
//!
//! The crate covers the whole pipeline: reading and validating trial data,
//! generating randomization lists, estimating the effect with the difference
//! in means, the OLS estimator or the U-statistic adjusted estimator, variance
//! estimation with Wald intervals, and a reproducible Monte Carlo harness for
//! the two simulation models used to study them.

pub mod analysis;
pub mod cli;
pub mod data;
pub mod error;
pub mod estimators;
pub mod gram;
pub mod numeric;
pub mod randomization;
pub mod sim;
pub mod variance;

pub use analysis::{analyze, Analysis, AnalysisOptions};
pub use data::{load_csv, read_csv, ColumnSchema, TrialDataset};
pub use error::{Error, Result};
pub use estimators::{AdjustMode, EstimateReport, EstimatorKind};
