//! Parallel Monte Carlo engine.
//!
//! Every replicate draws from its own ChaCha stream, identified by the master
//! seed, a purpose tag and the replicate index, so a run is a pure function
//! of its inputs whatever the worker count. Replicates are collected by index
//! and reduced in that order.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{Dgp, DgpConfig};
use super::truth::true_tau;
use crate::analysis::{analyze_stratified, AnalysisOptions};
use crate::data::Stratified;
use crate::error::{Error, Result};
use crate::estimators::{ols_bias_diagnostic, AdjustMode, EstimatorKind};
use crate::gram::{GramPair, DEFAULT_RCOND};
use crate::numeric::{mean, sample_sd};
use crate::variance::normal_quantile;

const DATA_STREAM: u64 = 0xda7a;
const ASSIGN_STREAM: u64 = 0xa551;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG for one (purpose, replicate) pair.
pub fn replicate_rng(master: u64, tag: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master ^ splitmix64(tag)));
    rng.set_stream(replicate);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub kinds: Vec<EstimatorKind>,
    pub replicates: usize,
    pub seed: u64,
    pub workers: usize,
    pub alpha: f64,
    pub rcond: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            kinds: EstimatorKind::ALL.to_vec(),
            replicates: 1000,
            seed: 20_250_101,
            workers: 1,
            alpha: 0.05,
            rcond: DEFAULT_RCOND,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub kind: EstimatorKind,
    pub tau_hat: f64,
    pub sigma2_hat: f64,
    pub se: f64,
    pub covered: bool,
    pub clamped: bool,
    pub pseudo_inverse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub estimates: Vec<EstimateRecord>,
    /// Excess variance component with sample Grams.
    pub zeta2_ii: Option<f64>,
    pub zeta2_ii_oracle: Option<f64>,
    /// `sum_k p_k (D_k1 - D_k0)` with sample and true inverse Grams.
    pub diag_bias: Option<f64>,
    pub diag_bias_oracle: Option<f64>,
    pub sample_ate: f64,
    pub consistent: bool,
}

impl ReplicateRecord {
    pub fn estimate(&self, kind: EstimatorKind) -> Option<&EstimateRecord> {
        self.estimates.iter().find(|e| e.kind == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorMetrics {
    pub kind: EstimatorKind,
    pub mean: f64,
    /// `|mean - tau|`
    pub bias: f64,
    pub sd: f64,
    pub mean_se: f64,
    pub sd_se: f64,
    pub cp: f64,
    /// Coverage with the Monte Carlo SD in place of the estimated SE.
    pub mc_cp: f64,
    pub clamped: usize,
    pub pseudo_inverse: usize,
}

/// Averages of the per-replicate diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub mean_diag_bias: Option<f64>,
    pub mean_diag_bias_oracle: Option<f64>,
    pub mean_zeta2_ii: Option<f64>,
    /// Monte Carlo standard error of `mean_zeta2_ii`.
    pub zeta2_ii_mc_se: Option<f64>,
    pub mean_sample_ate: f64,
    pub consistency_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCResult {
    pub config: DgpConfig,
    pub replicates: usize,
    pub alpha: f64,
    pub true_tau: f64,
    pub true_tau_se: f64,
    pub metrics: Vec<EstimatorMetrics>,
    pub diagnostics: RunDiagnostics,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl MCResult {
    pub fn metrics(&self, kind: EstimatorKind) -> Option<&EstimatorMetrics> {
        self.metrics.iter().find(|m| m.kind == kind)
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloRun {
    pub result: MCResult,
    pub records: Vec<ReplicateRecord>,
}

/// Metrics of one estimator over the replicates.
pub fn summarize_metrics(records: &[EstimateRecord], tau: f64, alpha: f64) -> Result<EstimatorMetrics> {
    if records.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 replicates, got {}",
            records.len()
        )));
    }
    let kind = records[0].kind;
    let taus: Vec<f64> = records.iter().map(|r| r.tau_hat).collect();
    let ses: Vec<f64> = records.iter().map(|r| r.se).collect();
    let m = mean(&taus);
    let sd = sample_sd(&taus);
    let mean_se = mean(&ses);
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    let r = records.len() as f64;
    let covered = records.iter().filter(|x| x.covered).count() as f64;
    let mc_covered = taus.iter().filter(|&&t| (t - tau).abs() <= z * sd).count() as f64;
    Ok(EstimatorMetrics {
        kind,
        mean: m,
        bias: (m - tau).abs(),
        sd,
        mean_se,
        sd_se: sd / mean_se,
        cp: covered / r,
        mc_cp: mc_covered / r,
        clamped: records.iter().filter(|x| x.clamped).count(),
        pseudo_inverse: records.iter().filter(|x| x.pseudo_inverse).count(),
    })
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean(&v))
}

struct Prepared {
    dgp: Dgp,
    oracle: Vec<GramPair>,
    options: AnalysisOptions,
    seed: u64,
    tau: f64,
}

fn run_replicate(prep: &Prepared, index: usize) -> Result<ReplicateRecord> {
    let mut data_rng = replicate_rng(prep.seed, DATA_STREAM, index as u64);
    let mut assign_rng = replicate_rng(prep.seed, ASSIGN_STREAM, index as u64);
    let rep = prep.dgp.generate(&mut data_rng, &mut assign_rng)?;
    let strat = Stratified::new(&rep.dataset);
    let analysis = analyze_stratified(&strat, &prep.options, Some(&prep.oracle))?;
    let tau = prep.tau;
    let estimates = analysis
        .reports
        .iter()
        .map(|r| {
            let (lo, hi) = r.ci.expect("analysis fills intervals");
            EstimateRecord {
                kind: r.kind,
                tau_hat: r.tau_hat,
                sigma2_hat: r.sigma2_hat.expect("analysis fills variances"),
                se: r.se.expect("analysis fills standard errors"),
                covered: lo <= tau && tau <= hi,
                clamped: r.diagnostics.clamped,
                pseudo_inverse: r.diagnostics.pseudo_inverse,
            }
        })
        .collect();
    let diag_bias = analysis
        .report(EstimatorKind::Ols)
        .and_then(|r| r.diagnostics.diagonal_bias);
    let diag_bias_oracle = if prep.options.kinds.contains(&EstimatorKind::Ols) {
        Some(ols_bias_diagnostic(&strat, &prep.oracle)?)
    } else {
        None
    };
    Ok(ReplicateRecord {
        index,
        estimates,
        zeta2_ii: analysis.components(AdjustMode::Feasible).map(|c| c.zeta2_ii),
        zeta2_ii_oracle: analysis.components(AdjustMode::Oracle).map(|c| c.zeta2_ii),
        diag_bias,
        diag_bias_oracle,
        sample_ate: rep.sample_ate(),
        consistent: rep.consistency_holds(),
    })
}

/// Run `settings.replicates` trials of `config` and summarise every estimator.
pub fn run_monte_carlo(config: &DgpConfig, settings: &RunSettings) -> Result<MonteCarloRun> {
    let start = Instant::now();
    if settings.replicates < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 replicates, got {}",
            settings.replicates
        )));
    }
    if settings.workers == 0 {
        return Err(Error::InvalidParameter("workers must be at least 1".into()));
    }
    let dgp = Dgp::new(config.clone())?;
    let truth = true_tau(config)?;
    let oracle = dgp.oracle_grams()?;
    let options = AnalysisOptions {
        kinds: settings.kinds.clone(),
        alpha: settings.alpha,
        rcond: settings.rcond,
    };
    options.validate()?;
    let prep = Prepared {
        dgp,
        oracle,
        options,
        seed: settings.seed,
        tau: truth.tau,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<ReplicateRecord>> = pool.install(|| {
        (0..settings.replicates)
            .into_par_iter()
            .map(|i| run_replicate(&prep, i))
            .collect()
    });
    let records = outcomes
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::Replicate {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let result = summarize_run(config, settings, truth.tau, truth.se, &records, start.elapsed())?;
    Ok(MonteCarloRun { result, records })
}

fn summarize_run(
    config: &DgpConfig,
    settings: &RunSettings,
    tau: f64,
    tau_se: f64,
    records: &[ReplicateRecord],
    wall_time: Duration,
) -> Result<MCResult> {
    let metrics = settings
        .kinds
        .iter()
        .map(|&kind| {
            let rows: Vec<EstimateRecord> = records
                .iter()
                .map(|r| *r.estimate(kind).expect("every replicate reports every kind"))
                .collect();
            summarize_metrics(&rows, tau, settings.alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    let zeta: Option<Vec<f64>> = records.iter().map(|r| r.zeta2_ii).collect();
    let zeta2_ii_mc_se = zeta.as_ref().map(|z| sample_sd(z) / (z.len() as f64).sqrt());
    let diagnostics = RunDiagnostics {
        mean_diag_bias: mean_of(records.iter().map(|r| r.diag_bias)),
        mean_diag_bias_oracle: mean_of(records.iter().map(|r| r.diag_bias_oracle)),
        mean_zeta2_ii: zeta.as_ref().map(|z| mean(z)),
        zeta2_ii_mc_se,
        mean_sample_ate: mean(&records.iter().map(|r| r.sample_ate).collect::<Vec<_>>()),
        consistency_failures: records.iter().filter(|r| !r.consistent).count(),
    };
    Ok(MCResult {
        config: config.clone(),
        replicates: records.len(),
        alpha: settings.alpha,
        true_tau: tau,
        true_tau_se: tau_se,
        metrics,
        diagnostics,
        wall_time,
    })
}
