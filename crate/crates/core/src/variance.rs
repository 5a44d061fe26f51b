//! Variance estimation and Wald intervals.
//!
//! The adjusted estimator's asymptotic variance splits into three parts:
//! between-stratum heterogeneity (`zeta_h`), a residual sampling term
//! (`zeta_i`) and an `O(p/n)` excess (`zeta_ii`) that the U-statistic pays
//! relative to OLS. Each part is estimated per stratum and combined with the
//! stratum weights `p_k = n_k / n`. All returned variances are on the
//! `n * Var(tau_hat)` scale.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{Arm, StratumBlock, Stratified, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::{ols_coefficients, sample_grams, AdjustMode, EstimatorKind};
use crate::gram::{GramPair, Kernel, DEFAULT_RCOND};
use crate::numeric::compensated_sum;

/// Variances below this are clamped before taking square roots.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Per-stratum pieces of the variance estimate, before weighting by `p_k`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StratumVariance {
    pub label: String,
    pub weight: f64,
    /// `var_1 / pi + var_0 / (1 - pi)` with `1/n_a` divisors.
    pub sigma2_y: f64,
    /// Same-arm off-diagonal sums, already weighted by `(1-pi)/pi` and `pi/(1-pi)`.
    pub eta_treated: f64,
    pub eta_control: f64,
    /// Cross-arm sum.
    pub eta_cross: f64,
    /// `n_a^{-1} sum 1{A_i=a} x_i'Mx_i Y_i^2`
    pub second_diag_treated: f64,
    pub second_diag_control: f64,
    /// Same-arm squared-kernel U-statistics.
    pub second_pair_treated: f64,
    pub second_pair_control: f64,
    /// Cross-arm squared-kernel sum.
    pub second_cross: f64,
    pub zeta_ii_treated: f64,
    pub zeta_ii_control: f64,
    pub zeta_ii_cross: f64,
}

impl StratumVariance {
    pub fn zeta_i(&self) -> f64 {
        self.sigma2_y - self.eta_treated - self.eta_control - 2.0 * self.eta_cross
    }

    pub fn zeta_ii(&self) -> f64 {
        self.zeta_ii_treated + self.zeta_ii_control - 2.0 * self.zeta_ii_cross
    }
}

/// The three variance components and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub zeta2_h: f64,
    pub zeta2_i: f64,
    pub sigma2_y: f64,
    pub sigma2_i_eta: f64,
    pub sigma_i_eta10: f64,
    pub zeta2_ii: f64,
    pub zeta2_ii_y1: f64,
    pub zeta2_ii_y0: f64,
    pub zeta2_ii_y10: f64,
    pub sigma2: f64,
    pub mode: AdjustMode,
    pub pseudo_inverse: bool,
    pub strata: Vec<StratumVariance>,
}

impl VarianceComponents {
    /// `sigma2` floored at [`VARIANCE_FLOOR`], with a flag when the floor bit.
    pub fn clamped(&self) -> (f64, bool) {
        clamp_variance(self.sigma2)
    }
}

pub fn clamp_variance(sigma2: f64) -> (f64, bool) {
    if sigma2 < VARIANCE_FLOOR || sigma2.is_nan() {
        (VARIANCE_FLOOR, true)
    } else {
        (sigma2, false)
    }
}

fn weight(strat: &Stratified, block: &StratumBlock) -> f64 {
    block.n() as f64 / strat.n() as f64
}

/// Between-stratum heterogeneity of the arm-mean differences.
pub fn zeta_h_hat(dataset: &TrialDataset) -> Result<f64> {
    zeta_h_stratified(&Stratified::new(dataset))
}

pub fn zeta_h_stratified(strat: &Stratified) -> Result<f64> {
    let blocks = strat.blocks();
    let mut means = Vec::with_capacity(blocks.len());
    for b in blocks {
        b.require_both_arms()?;
        means.push((weight(strat, b), b.arm_mean(Arm::Treated)?, b.arm_mean(Arm::Control)?));
    }
    let overall1 = compensated_sum(means.iter().map(|(w, m1, _)| w * m1));
    let overall0 = compensated_sum(means.iter().map(|(w, _, m0)| w * m0));
    Ok(compensated_sum(means.iter().map(|(w, m1, m0)| {
        let d = (m1 - overall1) - (m0 - overall0);
        w * d * d
    })))
}

/// Arm variance with the `1/n_a` divisor.
fn arm_variance(values: &DVector<f64>, block: &StratumBlock, arm: Arm) -> Result<f64> {
    let count = block.count(arm) as f64;
    let idx: Vec<usize> = (0..block.n()).filter(|&i| arm.indicator(block.a[i]) == 1.0).collect();
    let mean = compensated_sum(idx.iter().map(|&i| values[i])) / count;
    Ok(compensated_sum(idx.iter().map(|&i| (values[i] - mean).powi(2))) / count)
}

/// `var_1(v)/pi + var_0(v)/(1-pi)` for one stratum.
fn two_sample_variance(values: &DVector<f64>, block: &StratumBlock) -> Result<f64> {
    block.require_both_arms()?;
    let pi = block.pi();
    Ok(arm_variance(values, block, Arm::Treated)? / pi + arm_variance(values, block, Arm::Control)? / (1.0 - pi))
}

fn require_two_per_arm(block: &StratumBlock) -> Result<()> {
    block.require_both_arms()?;
    for arm in [Arm::Treated, Arm::Control] {
        if block.count(arm) < 2 {
            return Err(Error::degenerate(
                block.label(),
                format!(
                    "need at least 2 {} units for the variance estimate",
                    if arm == Arm::Treated { "treated" } else { "control" }
                ),
            ));
        }
    }
    Ok(())
}

/// All per-stratum variance pieces with inverse Gram matrix `gram.inverse`.
pub fn stratum_variance(block: &StratumBlock, weight: f64, gram: &GramPair) -> Result<StratumVariance> {
    require_two_per_arm(block)?;
    let kernel = Kernel::new(&block.x, &gram.inverse)?;
    stratum_variance_kernel(block, weight, &kernel)
}

pub fn stratum_variance_kernel(block: &StratumBlock, weight: f64, kernel: &Kernel<'_>) -> Result<StratumVariance> {
    require_two_per_arm(block)?;
    let pi = block.pi();
    let q = 1.0 - pi;
    let n = block.n() as f64;
    let n1 = block.count(Arm::Treated) as f64;
    let n0 = block.count(Arm::Control) as f64;
    let y1 = block.arm_outcomes(Arm::Treated);
    let y0 = block.arm_outcomes(Arm::Control);

    let sigma2_y = two_sample_variance(&block.y, block)?;
    let eta_treated = q / pi / (n1 * (n1 - 1.0)) * kernel.bilinear(&y1, &y1)?;
    let eta_control = pi / q / (n0 * (n0 - 1.0)) * kernel.bilinear(&y0, &y0)?;
    let eta_cross = kernel.bilinear(&y1, &y0)? / (n1 * n0);

    let diag = kernel.diagonal();
    let second_diag_treated = compensated_sum((0..block.n()).map(|i| diag[i] * y1[i] * y1[i])) / n1;
    let second_diag_control = compensated_sum((0..block.n()).map(|i| diag[i] * y0[i] * y0[i])) / n0;
    let second_pair_treated = kernel.squared(&y1, &y1)? / (n1 * (n1 - 1.0));
    let second_pair_control = kernel.squared(&y0, &y0)? / (n0 * (n0 - 1.0));
    let second_cross = kernel.squared(&y1, &y0)? / (n1 * n0);

    let scale = 1.0 / (n - 1.0);
    let zeta_ii_treated =
        scale * (q / (pi * pi) * second_diag_treated + (q * q) / (pi * pi) * second_pair_treated);
    let zeta_ii_control =
        scale * (pi / (q * q) * second_diag_control + (pi * pi) / (q * q) * second_pair_control);
    let zeta_ii_cross = scale * second_cross;

    Ok(StratumVariance {
        label: block.label().to_string(),
        weight,
        sigma2_y,
        eta_treated,
        eta_control,
        eta_cross,
        second_diag_treated,
        second_diag_control,
        second_pair_treated,
        second_pair_control,
        second_cross,
        zeta_ii_treated,
        zeta_ii_control,
        zeta_ii_cross,
    })
}

fn check_grams(strat: &Stratified, grams: &[GramPair]) -> Result<()> {
    if grams.len() != strat.blocks().len() {
        return Err(Error::Dimension(format!(
            "{} Gram matrices for {} strata",
            grams.len(),
            strat.blocks().len()
        )));
    }
    Ok(())
}

fn per_stratum(strat: &Stratified, grams: &[GramPair]) -> Result<Vec<StratumVariance>> {
    check_grams(strat, grams)?;
    strat
        .blocks()
        .iter()
        .zip(grams)
        .map(|(b, g)| stratum_variance(b, weight(strat, b), g))
        .collect()
}

fn weighted<F: Fn(&StratumVariance) -> f64>(parts: &[StratumVariance], f: F) -> f64 {
    compensated_sum(parts.iter().map(|s| s.weight * f(s)))
}

/// Residual sampling component `sigma2_y - sigma2_eta - 2 sigma_eta10`.
pub fn zeta_i_hat(dataset: &TrialDataset, grams: &[GramPair]) -> Result<f64> {
    let strat = Stratified::new(dataset);
    Ok(weighted(&per_stratum(&strat, grams)?, StratumVariance::zeta_i))
}

/// Excess component of the U-statistic estimator.
pub fn zeta_ii_hat(dataset: &TrialDataset, grams: &[GramPair]) -> Result<f64> {
    let strat = Stratified::new(dataset);
    Ok(weighted(&per_stratum(&strat, grams)?, StratumVariance::zeta_ii))
}

/// Combine per-stratum pieces with the heterogeneity term.
pub fn assemble(zeta2_h: f64, strata: Vec<StratumVariance>, mode: AdjustMode, pseudo_inverse: bool) -> VarianceComponents {
    let sigma2_y = weighted(&strata, |s| s.sigma2_y);
    let sigma2_i_eta = weighted(&strata, |s| s.eta_treated + s.eta_control);
    let sigma_i_eta10 = weighted(&strata, |s| s.eta_cross);
    let zeta2_i = weighted(&strata, StratumVariance::zeta_i);
    let zeta2_ii_y1 = weighted(&strata, |s| s.zeta_ii_treated);
    let zeta2_ii_y0 = weighted(&strata, |s| s.zeta_ii_control);
    let zeta2_ii_y10 = weighted(&strata, |s| s.zeta_ii_cross);
    let zeta2_ii = weighted(&strata, StratumVariance::zeta_ii);
    VarianceComponents {
        zeta2_h,
        zeta2_i,
        sigma2_y,
        sigma2_i_eta,
        sigma_i_eta10,
        zeta2_ii,
        zeta2_ii_y1,
        zeta2_ii_y0,
        zeta2_ii_y10,
        sigma2: zeta2_h + zeta2_i + zeta2_ii,
        mode,
        pseudo_inverse,
        strata,
    }
}

/// Variance estimate of the adjusted estimator.
///
/// `Feasible` uses each stratum's sample Gram inverse; `Oracle` uses the
/// supplied true Gram pairs.
pub fn sigma2_hat(
    dataset: &TrialDataset,
    mode: AdjustMode,
    oracle_grams: Option<&[GramPair]>,
) -> Result<VarianceComponents> {
    let strat = Stratified::new(dataset);
    match (mode, oracle_grams) {
        (AdjustMode::Oracle, Some(grams)) => sigma2_hat_with(&strat, grams, mode),
        (AdjustMode::Oracle, None) => Err(Error::InvalidParameter("oracle mode needs the true Gram matrices".into())),
        (AdjustMode::Feasible, None) => sigma2_hat_with(&strat, &sample_grams(&strat, DEFAULT_RCOND)?, mode),
        (AdjustMode::Feasible, Some(_)) => Err(Error::InvalidParameter(
            "feasible mode computes its own Gram matrices".into(),
        )),
    }
}

pub fn sigma2_hat_with(strat: &Stratified, grams: &[GramPair], mode: AdjustMode) -> Result<VarianceComponents> {
    let zeta2_h = zeta_h_stratified(strat)?;
    let strata = per_stratum(strat, grams)?;
    Ok(assemble(zeta2_h, strata, mode, grams.iter().any(|g| g.pseudo)))
}

/// Plug-in variance for the unadjusted or OLS estimator.
///
/// Unadjusted: `zeta_h + sum_k p_k [var_1(Y)/pi + var_0(Y)/(1-pi)]`.
/// OLS: the same with `Y` replaced by residuals `Y - x' beta_k`, where
/// `beta_k = (1 - pi) beta(1) + pi beta(0)`.
pub fn sigma2_baseline_hat(dataset: &TrialDataset, kind: EstimatorKind) -> Result<f64> {
    let strat = Stratified::new(dataset);
    match kind {
        EstimatorKind::Unadjusted => sigma2_baseline_with(&strat, kind, &[]),
        EstimatorKind::Ols => sigma2_baseline_with(&strat, kind, &sample_grams(&strat, DEFAULT_RCOND)?),
        _ => Err(Error::InvalidParameter(format!("no baseline variance for `{kind}`"))),
    }
}

/// Baseline variance with precomputed sample Grams (ignored for `Unadjusted`).
pub fn sigma2_baseline_with(strat: &Stratified, kind: EstimatorKind, grams: &[GramPair]) -> Result<f64> {
    let zeta2_h = zeta_h_stratified(strat)?;
    let terms = match kind {
        EstimatorKind::Unadjusted => strat
            .blocks()
            .iter()
            .map(|b| Ok(weight(strat, b) * two_sample_variance(&b.y, b)?))
            .collect::<Result<Vec<_>>>()?,
        EstimatorKind::Ols => {
            check_grams(strat, grams)?;
            strat
                .blocks()
                .iter()
                .zip(grams)
                .map(|(b, g)| {
                    let (beta1, beta0) = ols_coefficients(b, g)?;
                    let pi = b.pi();
                    let beta = beta1 * (1.0 - pi) + beta0 * pi;
                    let resid = &b.y - &b.x * beta;
                    Ok(weight(strat, b) * two_sample_variance(&resid, b)?)
                })
                .collect::<Result<Vec<_>>>()?
        }
        _ => return Err(Error::InvalidParameter(format!("no baseline variance for `{kind}`"))),
    };
    Ok(zeta2_h + compensated_sum(terms))
}

/// A two-sided Wald interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldInterval {
    pub lo: f64,
    pub hi: f64,
    /// Standard error `sqrt(sigma2 / n)` after clamping.
    pub se: f64,
    /// The variance was below [`VARIANCE_FLOOR`] and was raised to it.
    pub clamped: bool,
}

/// `tau_hat +- z_{1-alpha/2} sqrt(max(sigma2, floor) / n)`.
pub fn wald_ci(tau_hat: f64, sigma2: f64, n: usize, alpha: f64) -> Result<WaldInterval> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must be in (0, 1], got {alpha}")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    let (sigma2, clamped) = clamp_variance(sigma2);
    let se = (sigma2 / n as f64).sqrt();
    let half = normal_quantile(1.0 - alpha / 2.0)? * se;
    Ok(WaldInterval {
        lo: tau_hat - half,
        hi: tau_hat + half,
        se,
        clamped,
    })
}

const CENTRAL_NUM: [f64; 8] = [
    3.387132872796366608,
    133.14166789178437745,
    1971.5909503065514427,
    13731.693765509461125,
    45921.953931549871457,
    67265.770927008700853,
    33430.575583588128105,
    2509.0809287301226727,
];
const CENTRAL_DEN: [f64; 8] = [
    1.0,
    42.313330701600911252,
    687.1870074920579083,
    5394.1960214247511077,
    21213.794301586595867,
    39307.89580009271061,
    28729.085735721942674,
    5226.495278852545925,
];
const NEAR_NUM: [f64; 8] = [
    1.42343711074968357734,
    4.6303378461565452959,
    5.7694972214606914055,
    3.64784832476320460504,
    1.27045825245236838258,
    0.24178072517745061177,
    0.0227238449892691845833,
    7.7454501427834140764e-4,
];
const NEAR_DEN: [f64; 8] = [
    1.0,
    2.05319162663775882187,
    1.6763848301838038494,
    0.68976733498510000455,
    0.14810397642748007459,
    0.0151986665636164571966,
    5.475938084995344946e-4,
    1.05075007164441684324e-9,
];
const FAR_NUM: [f64; 8] = [
    6.6579046435011037772,
    5.4637849111641143699,
    1.7848265399172913358,
    0.29656057182850489123,
    0.026532189526576123093,
    0.0012426609473880784386,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
];
const FAR_DEN: [f64; 8] = [
    1.0,
    0.59983220655588793769,
    0.13692988092273580531,
    0.0148753612908506148525,
    7.868691311456132591e-4,
    1.8463183175100546818e-5,
    1.4215117583164458887e-7,
    2.04426310338993978564e-15,
];

/// Polynomial with coefficients in increasing degree.
fn horner(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Standard normal quantile (Wichura's AS241, about 1e-16 relative accuracy).
pub fn normal_quantile(prob: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::InvalidParameter(format!("probability must be in (0, 1), got {prob}")));
    }
    let q = prob - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return Ok(q * horner(&CENTRAL_NUM, r) / horner(&CENTRAL_DEN, r));
    }
    let tail = if q < 0.0 { prob } else { 1.0 - prob };
    let r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        let r = r - 1.6;
        horner(&NEAR_NUM, r) / horner(&NEAR_DEN, r)
    } else {
        let r = r - 5.0;
        horner(&FAR_NUM, r) / horner(&FAR_DEN, r)
    };
    Ok(if q < 0.0 { -value } else { value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(y: &[f64], a: &[u8], s: &[&str], x: &[f64], p: usize) -> TrialDataset {
        let x = DMatrix::from_row_slice(y.len(), p, x);
        TrialDataset::new(y.to_vec(), a.to_vec(), s, x, vec![]).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize) -> TrialDataset {
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut a: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        a[..4].copy_from_slice(&[1, 1, 0, 0]);
        let x: Vec<f64> = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
        dataset(&y, &a, &vec!["1"; n], &x, p)
    }

    /// Direct double loops over the defining sums, M from LU inversion.
    fn naive_components(d: &TrialDataset) -> (f64, f64) {
        let n = d.n();
        let x = d.covariates();
        let y = d.outcomes();
        let a: Vec<f64> = d.assignments().iter().map(|&v| v as f64).collect();
        let m = (x.transpose() * x / n as f64).try_inverse().unwrap();
        let h = |i: usize, j: usize| (x.row(i) * &m * x.row(j).transpose())[(0, 0)];
        let n1: f64 = a.iter().sum();
        let n0 = n as f64 - n1;
        let pi = n1 / n as f64;
        let q = 1.0 - pi;
        let ybar1 = (0..n).map(|i| a[i] * y[i]).sum::<f64>() / n1;
        let ybar0 = (0..n).map(|i| (1.0 - a[i]) * y[i]).sum::<f64>() / n0;
        let v1 = (0..n).map(|i| a[i] * (y[i] - ybar1).powi(2)).sum::<f64>() / n1;
        let v0 = (0..n).map(|i| (1.0 - a[i]) * (y[i] - ybar0).powi(2)).sum::<f64>() / n0;
        let (mut e1, mut e0, mut e10) = (0.0, 0.0, 0.0);
        let (mut s1, mut s0, mut s10) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let k = h(i, j);
                e10 += a[i] * (1.0 - a[j]) * y[i] * k * y[j];
                if i != j {
                    e1 += a[i] * a[j] * y[i] * k * y[j];
                    e0 += (1.0 - a[i]) * (1.0 - a[j]) * y[i] * k * y[j];
                    s1 += a[i] * a[j] * k * k * y[i] * y[j];
                    s0 += (1.0 - a[i]) * (1.0 - a[j]) * k * k * y[i] * y[j];
                    s10 += a[i] * (1.0 - a[j]) * k * k * y[i] * y[j];
                }
            }
        }
        let sigma2_y = v1 / pi + v0 / q;
        let eta = q / pi * e1 / (n1 * (n1 - 1.0)) + pi / q * e0 / (n0 * (n0 - 1.0));
        let zeta_i = sigma2_y - eta - 2.0 * e10 / (n1 * n0);
        let d1 = (0..n).map(|i| a[i] * h(i, i) * y[i] * y[i]).sum::<f64>() / n1;
        let d0 = (0..n).map(|i| (1.0 - a[i]) * h(i, i) * y[i] * y[i]).sum::<f64>() / n0;
        let zeta_ii = (q / (pi * pi) * d1
            + q * q / (pi * pi) * s1 / (n1 * (n1 - 1.0))
            + pi / (q * q) * d0
            + pi * pi / (q * q) * s0 / (n0 * (n0 - 1.0))
            - 2.0 * s10 / (n1 * n0))
            / (n as f64 - 1.0);
        (zeta_i, zeta_ii)
    }

    #[test]
    fn heterogeneity_hand_values() {
        // arm-mean differences 2 and 0 in two equal strata
        let d = dataset(&[3.0, 1.0, 5.0, 5.0], &[1, 0, 1, 0], &["a", "a", "b", "b"], &[], 0);
        assert!((zeta_h_hat(&d).unwrap() - 1.0).abs() < 1e-15);
        let same = dataset(&[3.0, 1.0, 7.0, 5.0], &[1, 0, 1, 0], &["a", "a", "b", "b"], &[], 0);
        assert_eq!(zeta_h_hat(&same).unwrap(), 0.0);
        let single = dataset(&[3.0, 1.0, 7.0, 5.0], &[1, 0, 1, 0], &["a"; 4], &[], 0);
        assert_eq!(zeta_h_hat(&single).unwrap(), 0.0);
    }

    #[test]
    fn components_match_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let n = rng.random_range(8..=20);
            let p = rng.random_range(1..=3);
            let d = random_dataset(&mut rng, n, p);
            let grams = sample_grams(&Stratified::new(&d), DEFAULT_RCOND).unwrap();
            if grams[0].pseudo {
                continue;
            }
            let (zi, zii) = naive_components(&d);
            assert!(close(zeta_i_hat(&d, &grams).unwrap(), zi, 1e-10));
            assert!(close(zeta_ii_hat(&d, &grams).unwrap(), zii, 1e-10));
        }
    }

    #[test]
    fn zero_outcomes_give_zero_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_dataset(&mut rng, 20, 3);
        let d = d.with_outcomes(vec![0.0; 20]).unwrap();
        let v = sigma2_hat(&d, AdjustMode::Feasible, None).unwrap();
        assert_eq!(v.sigma2, 0.0);
        assert_eq!(v.sigma2_i_eta, 0.0);
        assert_eq!(v.zeta2_ii, 0.0);
        assert!(v.clamped().1);
        assert_eq!(sigma2_baseline_hat(&d, EstimatorKind::Unadjusted).unwrap(), 0.0);
        assert_eq!(sigma2_baseline_hat(&d, EstimatorKind::Ols).unwrap(), 0.0);
    }

    #[test]
    fn zero_kernel_kills_second_order_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = random_dataset(&mut rng, 20, 3);
        let strat = Stratified::new(&d);
        let mut g = sample_grams(&strat, DEFAULT_RCOND).unwrap();
        g[0].inverse = DMatrix::zeros(3, 3);
        assert_eq!(zeta_ii_hat(&d, &g).unwrap(), 0.0);
    }

    #[test]
    fn no_covariates_reduce_to_two_sample_variance() {
        let d = dataset(&[1.0, 2.0, 4.0, 0.0, 3.0, 5.0], &[1, 1, 1, 0, 0, 0], &["1"; 6], &[], 0);
        let v = sigma2_hat(&d, AdjustMode::Feasible, None).unwrap();
        // var1 = 14/9, var0 = 38/9, pi = 1/2
        let expected = 2.0 * (14.0 / 9.0) + 2.0 * (38.0 / 9.0);
        assert!((v.sigma2 - expected).abs() < 1e-13);
        assert_eq!(v.zeta2_i, v.sigma2_y);
        let unadj = sigma2_baseline_hat(&d, EstimatorKind::Unadjusted).unwrap();
        assert_eq!(sigma2_baseline_hat(&d, EstimatorKind::Ols).unwrap(), unadj);
    }

    #[test]
    fn oracle_with_sample_grams_equals_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_dataset(&mut rng, 30, 2);
        let grams = sample_grams(&Stratified::new(&d), DEFAULT_RCOND).unwrap();
        let f = sigma2_hat(&d, AdjustMode::Feasible, None).unwrap();
        let o = sigma2_hat(&d, AdjustMode::Oracle, Some(&grams)).unwrap();
        assert_eq!(f.sigma2, o.sigma2);
    }

    #[test]
    fn single_treated_unit_is_degenerate() {
        let d = dataset(&[1.0, 2.0, 4.0, 0.0], &[1, 0, 0, 0], &["1"; 4], &[1.0, 2.0, 3.0, 1.0], 1);
        let err = sigma2_hat(&d, AdjustMode::Feasible, None).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn wald_interval_values() {
        let ci = wald_ci(0.0, 1.0, 100, 0.05).unwrap();
        assert!((ci.hi - 0.1959964).abs() < 1e-7);
        assert!((ci.lo + 0.1959964).abs() < 1e-7);
        assert!(!ci.clamped);
        let ci = wald_ci(2.0, 1.0, 100, 1.0).unwrap();
        assert_eq!((ci.lo, ci.hi), (2.0, 2.0));
        let ci = wald_ci(0.0, 0.0, 100, 0.05).unwrap();
        assert!(ci.clamped && ci.hi > ci.lo);
        assert!(wald_ci(0.0, 1.0, 100, 0.0).is_err());
        assert!(wald_ci(0.0, 1.0, 100, 1.5).is_err());
    }

    #[test]
    fn normal_quantile_reference_values() {
        let cases = [
            (0.5, 0.0),
            (0.975, 1.959963984540054),
            (0.95, 1.6448536269514722),
            (0.995, 2.5758293035489004),
            (0.025, -1.959963984540054),
            (1e-10, -6.361340902404056),
            (1e-300, -37.0470962993612),
        ];
        for (p, z) in cases {
            assert!((normal_quantile(p).unwrap() - z).abs() < 1e-9 * (1.0 + z.abs()), "p = {p}");
        }
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }
}
