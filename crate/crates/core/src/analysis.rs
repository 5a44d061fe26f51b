//! One-call analysis: point estimates, variances and Wald intervals for a
//! chosen set of estimators on one dataset.

use serde::{Deserialize, Serialize};

use crate::data::{Stratified, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::{
    sample_grams, tau_adjusted_with, tau_ols_with, tau_unadjusted_stratified, AdjustMode, EstimateReport,
    EstimatorKind,
};
use crate::gram::{GramPair, DEFAULT_RCOND};
use crate::variance::{sigma2_baseline_with, sigma2_hat_with, wald_ci, VarianceComponents};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub kinds: Vec<EstimatorKind>,
    pub alpha: f64,
    pub rcond: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            kinds: vec![EstimatorKind::Unadjusted, EstimatorKind::Ols, EstimatorKind::Feasible],
            alpha: 0.05,
            rcond: DEFAULT_RCOND,
        }
    }
}

impl AnalysisOptions {
    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::InvalidParameter("no estimators requested".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(self.rcond >= 0.0 && self.rcond.is_finite()) {
            return Err(Error::InvalidParameter(format!("rcond must be finite and >= 0, got {}", self.rcond)));
        }
        Ok(())
    }
}

/// Completed reports, plus the component breakdown for the adjusted estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub n: usize,
    pub p: usize,
    pub reports: Vec<EstimateReport>,
    pub components: Vec<VarianceComponents>,
}

impl Analysis {
    pub fn report(&self, kind: EstimatorKind) -> Option<&EstimateReport> {
        self.reports.iter().find(|r| r.kind == kind)
    }

    pub fn components(&self, mode: AdjustMode) -> Option<&VarianceComponents> {
        self.components.iter().find(|c| c.mode == mode)
    }
}

fn complete(mut report: EstimateReport, sigma2: f64, n: usize, alpha: f64) -> Result<EstimateReport> {
    let ci = wald_ci(report.tau_hat, sigma2, n, alpha)?;
    report.sigma2_hat = Some(sigma2);
    report.se = Some(ci.se);
    report.ci = Some((ci.lo, ci.hi));
    report.diagnostics.clamped = ci.clamped;
    Ok(report)
}

pub fn analyze(dataset: &TrialDataset, options: &AnalysisOptions, oracle_grams: Option<&[GramPair]>) -> Result<Analysis> {
    analyze_stratified(&Stratified::new(dataset), options, oracle_grams)
}

/// Run every requested estimator; sample Grams are computed once and shared.
pub fn analyze_stratified(
    strat: &Stratified,
    options: &AnalysisOptions,
    oracle_grams: Option<&[GramPair]>,
) -> Result<Analysis> {
    options.validate()?;
    let needs_sample = options
        .kinds
        .iter()
        .any(|k| matches!(k, EstimatorKind::Ols | EstimatorKind::Feasible));
    let sample = if needs_sample {
        sample_grams(strat, options.rcond)?
    } else {
        Vec::new()
    };
    let n = strat.n();
    let mut reports = Vec::with_capacity(options.kinds.len());
    let mut components = Vec::new();
    for &kind in &options.kinds {
        let report = match kind {
            EstimatorKind::Unadjusted => {
                let r = tau_unadjusted_stratified(strat)?;
                let s2 = sigma2_baseline_with(strat, kind, &[])?;
                complete(r, s2, n, options.alpha)?
            }
            EstimatorKind::Ols => {
                let r = tau_ols_with(strat, &sample)?;
                let s2 = sigma2_baseline_with(strat, kind, &sample)?;
                complete(r, s2, n, options.alpha)?
            }
            EstimatorKind::Oracle | EstimatorKind::Feasible => {
                let (mode, grams) = if kind == EstimatorKind::Oracle {
                    let grams = oracle_grams.ok_or_else(|| {
                        Error::InvalidParameter("the oracle estimator needs the true Gram matrices".into())
                    })?;
                    (AdjustMode::Oracle, grams)
                } else {
                    (AdjustMode::Feasible, sample.as_slice())
                };
                let r = tau_adjusted_with(strat, grams, mode)?;
                let v = sigma2_hat_with(strat, grams, mode)?;
                let r = complete(r, v.sigma2, n, options.alpha)?;
                components.push(v);
                r
            }
        };
        reports.push(report);
    }
    Ok(Analysis {
        n,
        p: strat.p(),
        reports,
        components,
    })
}
