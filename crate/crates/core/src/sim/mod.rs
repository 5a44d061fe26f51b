//! Simulation models, true effects and the Monte Carlo harness.

mod dgp;
mod engine;
mod scenario;
mod truth;

pub use dgp::{generate, true_gram, Dgp, DgpConfig, Model, Replicate, ScaleKind, SchemeConfig, SchemeName};
pub use engine::{
    replicate_rng, run_monte_carlo, summarize_metrics, EstimateRecord, EstimatorMetrics, MCResult, MonteCarloRun,
    ReplicateRecord, RunDiagnostics, RunSettings,
};
pub use scenario::{GridPoint, GridSection, PointResult, RunSection, Scenario, ScenarioResults, SCHEMA_VERSION};
pub use truth::{monte_carlo_truth, true_tau, Truth, TRUTH_DRAWS, TRUTH_SEED};
