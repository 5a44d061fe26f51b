//! Scenario files and result tables.
//!
//! A scenario is a TOML file with a `[dgp]` table (any [`DgpConfig`] field),
//! a `[run]` table and an optional `[grid]` over sample size and dimension:
//!
//! ```toml
//! name = "model1_small"
//!
//! [run]
//! replicates = 1000
//! seed = 20250101
//! estimators = ["unadjusted", "ols", "oracle", "feasible"]
//!
//! [grid]
//! n = [600]
//! ratio = [0.05, 0.3]   # or: p = [10, 60]
//!
//! [dgp]
//! model = 1
//!
//! [dgp.randomization]
//! scheme = "permuted_block"
//! block_size = 6
//! ```
//!
//! Unknown keys are rejected.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dgp::DgpConfig;
use super::engine::{run_monte_carlo, MCResult, RunSettings};
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::gram::DEFAULT_RCOND;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub replicates: usize,
    pub seed: u64,
    pub workers: usize,
    pub alpha: f64,
    pub rcond: f64,
    pub estimators: Vec<EstimatorKind>,
}

impl Default for RunSection {
    fn default() -> Self {
        let s = RunSettings::default();
        Self {
            replicates: s.replicates,
            seed: s.seed,
            workers: s.workers,
            alpha: s.alpha,
            rcond: DEFAULT_RCOND,
            estimators: s.kinds,
        }
    }
}

impl RunSection {
    pub fn settings(&self) -> RunSettings {
        RunSettings {
            kinds: self.estimators.clone(),
            replicates: self.replicates,
            seed: self.seed,
            workers: self.workers,
            alpha: self.alpha,
            rcond: self.rcond,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: Option<Vec<usize>>,
    pub ratio: Option<Vec<f64>>,
    pub p: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub dgp: DgpConfig,
}

/// One cell of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub p: usize,
    pub ratio: Option<f64>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.ratio.is_some() && self.grid.p.is_some() {
            return Err(Error::Config("grid sets both `ratio` and `p`".into()));
        }
        if let Some(r) = self.grid.ratio.iter().flatten().find(|r| !(**r >= 0.0 && r.is_finite())) {
            return Err(Error::Config(format!("ratio {r} must be finite and >= 0")));
        }
        if self.run.estimators.is_empty() {
            return Err(Error::Config("no estimators listed".into()));
        }
        for point in self.points() {
            self.config_at(&point).validate()?;
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<GridPoint> {
        let ns = self.grid.n.clone().unwrap_or_else(|| vec![self.dgp.n]);
        let mut out = Vec::new();
        for n in ns {
            match (&self.grid.ratio, &self.grid.p) {
                (Some(ratios), _) => out.extend(ratios.iter().map(|&r| GridPoint {
                    n,
                    p: DgpConfig::dimension_for_ratio(n, r),
                    ratio: Some(r),
                })),
                (None, Some(ps)) => out.extend(ps.iter().map(|&p| GridPoint { n, p, ratio: None })),
                (None, None) => out.push(GridPoint {
                    n,
                    p: self.dgp.p,
                    ratio: None,
                }),
            }
        }
        out
    }

    pub fn config_at(&self, point: &GridPoint) -> DgpConfig {
        DgpConfig {
            n: point.n,
            p: point.p,
            ..self.dgp.clone()
        }
    }

    /// Run every grid point in order.
    pub fn run(&self) -> Result<ScenarioResults> {
        let settings = self.run.settings();
        let results = self
            .points()
            .into_iter()
            .map(|point| {
                let result = run_monte_carlo(&self.config_at(&point), &settings)?.result;
                Ok(PointResult { point, result })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ScenarioResults {
            schema_version: SCHEMA_VERSION,
            scenario: self.name.clone(),
            results,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    #[serde(flatten)]
    pub point: GridPoint,
    pub result: MCResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResults {
    pub schema_version: u32,
    pub scenario: String,
    pub results: Vec<PointResult>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

impl ScenarioResults {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidData(e.to_string()))
    }

    /// Long format: one row per grid point, estimator and metric.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["schema_version", "scenario", "model", "n", "p", "ratio", "estimator", "metric", "value"])?;
        let version = self.schema_version.to_string();
        for pr in &self.results {
            let model = u8::from(pr.result.config.model).to_string();
            let n = pr.point.n.to_string();
            let p = pr.point.p.to_string();
            let ratio = fmt_opt(pr.point.ratio);
            let mut row = |estimator: &str, metric: &str, value: String| {
                w.write_record([
                    version.as_str(),
                    self.scenario.as_str(),
                    model.as_str(),
                    n.as_str(),
                    p.as_str(),
                    ratio.as_str(),
                    estimator,
                    metric,
                    value.as_str(),
                ])
            };
            row("truth", "tau", format!("{:?}", pr.result.true_tau))?;
            row("truth", "tau_se", format!("{:?}", pr.result.true_tau_se))?;
            for m in &pr.result.metrics {
                let name = m.kind.name();
                row(name, "mean", format!("{:?}", m.mean))?;
                row(name, "bias", format!("{:?}", m.bias))?;
                row(name, "sd", format!("{:?}", m.sd))?;
                row(name, "mean_se", format!("{:?}", m.mean_se))?;
                row(name, "sd_se", format!("{:?}", m.sd_se))?;
                row(name, "cp", format!("{:?}", m.cp))?;
                row(name, "mc_cp", format!("{:?}", m.mc_cp))?;
            }
            let d = &pr.result.diagnostics;
            row("diagnostic", "mean_diag_bias", fmt_opt(d.mean_diag_bias))?;
            row("diagnostic", "mean_diag_bias_oracle", fmt_opt(d.mean_diag_bias_oracle))?;
            row("diagnostic", "mean_zeta2_ii", fmt_opt(d.mean_zeta2_ii))?;
            row("diagnostic", "zeta2_ii_mc_se", fmt_opt(d.zeta2_ii_mc_se))?;
            row("diagnostic", "consistency_failures", d.consistency_failures.to_string())?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<csv output>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}
