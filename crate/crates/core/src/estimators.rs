//! Point estimators of the average treatment effect under stratified designs.
//!
//! Four estimators share one report type:
//!
//! * the stratified difference in means;
//! * the OLS estimator with arm-specific within-stratum coefficients;
//! * the U-statistic adjusted estimator with a known inverse Gram matrix
//!   ("oracle") or with the sample Gram inverse ("feasible").
//!
//! The adjusted estimators replace the OLS augmentation term, which is a
//! V-statistic in the outcomes, by a second-order U-statistic that drops the
//! `i = j` terms responsible for an `O(p/n)` bias.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Arm, StratumBlock, Stratified, TrialDataset};
use crate::error::{Error, Result};
use crate::gram::{sample_gram_pair, GramMode, GramPair, Kernel, DEFAULT_RCOND};
use crate::numeric::compensated_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Unadjusted,
    Ols,
    Oracle,
    Feasible,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Unadjusted,
        EstimatorKind::Ols,
        EstimatorKind::Oracle,
        EstimatorKind::Feasible,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Unadjusted => "unadjusted",
            EstimatorKind::Ols => "ols",
            EstimatorKind::Oracle => "oracle",
            EstimatorKind::Feasible => "feasible",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown estimator `{s}`")))
    }
}

/// Where the inverse Gram matrix of the adjusted estimator comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjustMode {
    Oracle,
    Feasible,
}

impl From<AdjustMode> for EstimatorKind {
    fn from(mode: AdjustMode) -> Self {
        match mode {
            AdjustMode::Oracle => EstimatorKind::Oracle,
            AdjustMode::Feasible => EstimatorKind::Feasible,
        }
    }
}

/// One stratum's share of an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumContribution {
    pub label: String,
    pub n: usize,
    /// `n_k / n`
    pub weight: f64,
    /// Treated-arm term, the arm mean minus its adjustment.
    pub treated: f64,
    /// Control-arm term.
    pub control: f64,
    /// `treated - control`, unweighted.
    pub effect: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Some stratum Gram matrix was rank-deficient and its pseudo-inverse was used.
    pub pseudo_inverse: bool,
    /// Weighted diagonal term of the OLS augmentation, `sum_k p_k (D_k1 - D_k0)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagonal_bias: Option<f64>,
    /// The variance estimate fell below the floor and was raised to it.
    #[serde(default)]
    pub clamped: bool,
}

/// A point estimate, optionally completed with variance and interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub kind: EstimatorKind,
    pub tau_hat: f64,
    pub strata: Vec<StratumContribution>,
    pub sigma2_hat: Option<f64>,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    fn from_strata(kind: EstimatorKind, strata: Vec<StratumContribution>, diagnostics: Diagnostics) -> Self {
        let tau_hat = compensated_sum(strata.iter().map(|s| s.weight * s.effect));
        Self {
            kind,
            tau_hat,
            strata,
            sigma2_hat: None,
            se: None,
            ci: None,
            diagnostics,
        }
    }
}

fn contribution(block: &StratumBlock, weight: f64, treated: f64, control: f64) -> StratumContribution {
    StratumContribution {
        label: block.label().to_string(),
        n: block.n(),
        weight,
        treated,
        control,
        effect: treated - control,
    }
}

fn weight(strat: &Stratified, block: &StratumBlock) -> f64 {
    block.n() as f64 / strat.n() as f64
}

/// Stratified difference in means.
pub fn tau_unadjusted(dataset: &TrialDataset) -> Result<EstimateReport> {
    tau_unadjusted_stratified(&Stratified::new(dataset))
}

pub fn tau_unadjusted_stratified(strat: &Stratified) -> Result<EstimateReport> {
    let strata = strat
        .blocks()
        .iter()
        .map(|b| {
            b.require_both_arms()?;
            Ok(contribution(b, weight(strat, b), b.arm_mean(Arm::Treated)?, b.arm_mean(Arm::Control)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimateReport::from_strata(EstimatorKind::Unadjusted, strata, Diagnostics::default()))
}

/// Sample Gram matrix and (pseudo-)inverse for every stratum.
pub fn sample_grams(strat: &Stratified, rcond: f64) -> Result<Vec<GramPair>> {
    strat.blocks().iter().map(|b| sample_gram_pair(&b.x, rcond)).collect()
}

fn check_grams(strat: &Stratified, grams: &[GramPair]) -> Result<()> {
    if grams.len() != strat.blocks().len() {
        return Err(Error::Dimension(format!(
            "{} Gram matrices for {} strata",
            grams.len(),
            strat.blocks().len()
        )));
    }
    if let Some(g) = grams.iter().find(|g| g.dim() != strat.p()) {
        return Err(Error::Dimension(format!(
            "Gram matrix of size {} for {} covariates",
            g.dim(),
            strat.p()
        )));
    }
    Ok(())
}

/// `sum_i 1{A_i = arm} x_i Y_i / n_{k,arm}`
fn arm_moment(block: &StratumBlock, arm: Arm) -> Result<DVector<f64>> {
    let count = block.count(arm);
    if count == 0 {
        block.require_both_arms()?;
    }
    Ok(block.x.tr_mul(&block.arm_outcomes(arm)) / count as f64)
}

/// Arm-specific regression coefficients `(beta(1), beta(0))` of one stratum.
pub fn ols_coefficients(block: &StratumBlock, gram: &GramPair) -> Result<(DVector<f64>, DVector<f64>)> {
    block.require_both_arms()?;
    if gram.dim() != block.x.ncols() {
        return Err(Error::Dimension(format!(
            "Gram matrix of size {} for {} covariates",
            gram.dim(),
            block.x.ncols()
        )));
    }
    let treated = &gram.inverse * arm_moment(block, Arm::Treated)?;
    let control = &gram.inverse * arm_moment(block, Arm::Control)?;
    Ok((treated, control))
}

/// Centred assignment weights: `A_i - pi` for the treated arm, `pi - A_i` for control.
fn centred_assignment(block: &StratumBlock, arm: Arm) -> DVector<f64> {
    let pi = block.pi();
    DVector::from_iterator(
        block.n(),
        block.a.iter().map(|&a| match arm {
            Arm::Treated => a as f64 - pi,
            Arm::Control => pi - a as f64,
        }),
    )
}

/// OLS estimator with the sample Gram matrix of each stratum.
pub fn tau_ols(dataset: &TrialDataset) -> Result<EstimateReport> {
    let strat = Stratified::new(dataset);
    let grams = sample_grams(&strat, DEFAULT_RCOND)?;
    tau_ols_with(&strat, &grams)
}

/// OLS estimator with caller-supplied Gram pairs.
///
/// Also reports the weighted diagonal term of the augmentation, computed
/// with the same inverse.
pub fn tau_ols_with(strat: &Stratified, grams: &[GramPair]) -> Result<EstimateReport> {
    check_grams(strat, grams)?;
    let mut diag = Vec::with_capacity(grams.len());
    let strata = strat
        .blocks()
        .iter()
        .zip(grams)
        .map(|(b, g)| {
            let (beta1, beta0) = ols_coefficients(b, g)?;
            let adj1 = centred_assignment(b, Arm::Treated).dot(&(&b.x * beta1)) / b.count(Arm::Treated) as f64;
            let adj0 = centred_assignment(b, Arm::Control).dot(&(&b.x * beta0)) / b.count(Arm::Control) as f64;
            let w = weight(strat, b);
            diag.push(w * ols_diag_bias_pair(b, &g.inverse)?);
            Ok(contribution(
                b,
                w,
                b.arm_mean(Arm::Treated)? - adj1,
                b.arm_mean(Arm::Control)? - adj0,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let diagnostics = Diagnostics {
        pseudo_inverse: grams.iter().any(|g| g.pseudo),
        diagonal_bias: Some(compensated_sum(diag)),
        clamped: false,
    };
    Ok(EstimateReport::from_strata(EstimatorKind::Ols, strata, diagnostics))
}

fn require_u_statistic(block: &StratumBlock) -> Result<()> {
    if block.n() < 2 {
        return Err(Error::degenerate(block.label(), "fewer than 2 units"));
    }
    block.require_both_arms()
}

fn u_prefactor(block: &StratumBlock, arm: Arm) -> f64 {
    let n = block.n() as f64;
    let share = match arm {
        Arm::Treated => block.pi(),
        Arm::Control => 1.0 - block.pi(),
    };
    1.0 / (n * (n - 1.0) * share * share)
}

/// U-statistic of one arm using a prebuilt kernel over the stratum covariates.
pub fn u_statistic_kernel(block: &StratumBlock, kernel: &Kernel<'_>, arm: Arm) -> Result<f64> {
    require_u_statistic(block)?;
    let sum = kernel.bilinear(&centred_assignment(block, arm), &block.arm_outcomes(arm))?;
    Ok(u_prefactor(block, arm) * sum)
}

/// Second-order U-statistic removing the arm's linear augmentation.
///
/// Treated: `[n(n-1) pi^2]^{-1} sum_{i != j} (A_i - pi) x_i' M x_j A_j Y_j`;
/// control mirrors it with `pi - A_i`, `1 - A_j` and `(1 - pi)^2`.
pub fn u_statistic_pair(block: &StratumBlock, m: &DMatrix<f64>, arm: Arm) -> Result<f64> {
    require_u_statistic(block)?;
    u_statistic_kernel(block, &Kernel::new(&block.x, m)?, arm)
}

/// The same U-statistic through leave-one-out regression coefficients.
///
/// `beta^{-i} = M (n - 1)^{-1} sum_{j != i} w(A_j) x_j Y_j` with inverse
/// propensity weights `w`, then `n_a^{-1} sum_i c_i x_i' beta^{-i}` where
/// `c_i` is the centred assignment.
pub fn u_statistic_loo(block: &StratumBlock, m: &DMatrix<f64>, arm: Arm) -> Result<f64> {
    require_u_statistic(block)?;
    if m.nrows() != block.x.ncols() || m.ncols() != block.x.ncols() {
        return Err(Error::Dimension(format!(
            "kernel matrix is {}x{} for {} covariates",
            m.nrows(),
            m.ncols(),
            block.x.ncols()
        )));
    }
    let n = block.n();
    let share = match arm {
        Arm::Treated => block.pi(),
        Arm::Control => 1.0 - block.pi(),
    };
    let weighted = block.arm_outcomes(arm) / share;
    let total = block.x.tr_mul(&weighted);
    let centred = centred_assignment(block, arm);
    let terms = (0..n).map(|i| {
        let xi = block.x.row(i).transpose();
        let leave_out = &total - &xi * weighted[i];
        let beta = m * leave_out / (n - 1) as f64;
        centred[i] * xi.dot(&beta)
    });
    Ok(compensated_sum(terms) / block.count(arm) as f64)
}

/// U-statistic adjusted estimator.
///
/// `Oracle` needs one true Gram pair per stratum in `oracle_grams`;
/// `Feasible` computes the sample Gram of each stratum and rejects supplied
/// matrices.
pub fn tau_adjusted(
    dataset: &TrialDataset,
    mode: AdjustMode,
    oracle_grams: Option<&[GramPair]>,
) -> Result<EstimateReport> {
    let strat = Stratified::new(dataset);
    match (mode, oracle_grams) {
        (AdjustMode::Oracle, Some(grams)) => tau_adjusted_with(&strat, grams, mode),
        (AdjustMode::Oracle, None) => Err(Error::InvalidParameter("oracle mode needs the true Gram matrices".into())),
        (AdjustMode::Feasible, None) => tau_adjusted_with(&strat, &sample_grams(&strat, DEFAULT_RCOND)?, mode),
        (AdjustMode::Feasible, Some(_)) => Err(Error::InvalidParameter(
            "feasible mode computes its own Gram matrices".into(),
        )),
    }
}

/// U-statistic adjusted estimator with caller-supplied inverse Gram matrices.
pub fn tau_adjusted_with(strat: &Stratified, grams: &[GramPair], mode: AdjustMode) -> Result<EstimateReport> {
    check_grams(strat, grams)?;
    let strata = strat
        .blocks()
        .iter()
        .zip(grams)
        .map(|(b, g)| {
            require_u_statistic(b)?;
            let kernel = Kernel::new(&b.x, &g.inverse)?;
            let u1 = u_statistic_kernel(b, &kernel, Arm::Treated)?;
            let u0 = u_statistic_kernel(b, &kernel, Arm::Control)?;
            Ok(contribution(
                b,
                weight(strat, b),
                b.arm_mean(Arm::Treated)? - u1,
                b.arm_mean(Arm::Control)? - u0,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let diagnostics = Diagnostics {
        pseudo_inverse: grams.iter().any(|g| g.pseudo),
        diagonal_bias: None,
        clamped: false,
    };
    Ok(EstimateReport::from_strata(mode.into(), strata, diagnostics))
}

/// Diagonal term of one arm's OLS augmentation.
///
/// Treated: `(1 - pi) / n_1^2 sum_i A_i x_i' M x_i Y_i`;
/// control: `pi / n_0^2 sum_i (1 - A_i) x_i' M x_i Y_i`.
pub fn ols_diag_bias(block: &StratumBlock, m: &DMatrix<f64>, arm: Arm) -> Result<f64> {
    let count = block.count(arm);
    if count == 0 {
        return Err(Error::degenerate(
            block.label(),
            format!("no {} units", if arm == Arm::Treated { "treated" } else { "control" }),
        ));
    }
    let kernel = Kernel::new(&block.x, m)?;
    let sum = compensated_sum(
        (0..block.n()).map(|i| arm.indicator(block.a[i]) * kernel.diagonal()[i] * block.y[i]),
    );
    let factor = match arm {
        Arm::Treated => 1.0 - block.pi(),
        Arm::Control => block.pi(),
    };
    Ok(factor * sum / (count * count) as f64)
}

/// `D_1 - D_0` for one stratum.
pub fn ols_diag_bias_pair(block: &StratumBlock, m: &DMatrix<f64>) -> Result<f64> {
    Ok(ols_diag_bias(block, m, Arm::Treated)? - ols_diag_bias(block, m, Arm::Control)?)
}

/// `sum_k p_k (D_k1 - D_k0)`; the OLS estimator's bias is approximately its negative.
pub fn ols_bias_diagnostic(strat: &Stratified, grams: &[GramPair]) -> Result<f64> {
    check_grams(strat, grams)?;
    let terms = strat
        .blocks()
        .iter()
        .zip(grams)
        .map(|(b, g)| Ok(weight(strat, b) * ols_diag_bias_pair(b, &g.inverse)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(compensated_sum(terms))
}

/// Oracle Gram pairs from known population Gram matrices, one per stratum.
pub fn oracle_grams(matrices: &[DMatrix<f64>], rcond: f64) -> Result<Vec<GramPair>> {
    matrices
        .iter()
        .map(|g| Ok(crate::gram::invert_or_pseudo(g, rcond)?.with_mode(GramMode::Oracle)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(y: &[f64], a: &[u8], s: &[&str], x: &[f64], p: usize) -> TrialDataset {
        let x = DMatrix::from_row_slice(y.len(), p, x);
        TrialDataset::new(y.to_vec(), a.to_vec(), s, x, vec![]).unwrap()
    }

    fn single_block(y: &[f64], a: &[u8], x: &[f64], p: usize) -> StratumBlock {
        let s = vec!["1"; y.len()];
        Stratified::new(&dataset(y, a, &s, x, p)).blocks()[0].clone()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    /// Double loop over ordered pairs, straight from the definition.
    fn naive_u(block: &StratumBlock, m: &DMatrix<f64>, arm: Arm) -> f64 {
        let n = block.n();
        let pi = block.a.iter().map(|&a| a as f64).sum::<f64>() / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let k = (block.x.row(i) * m * block.x.row(j).transpose())[(0, 0)];
                let (ai, aj) = (block.a[i] as f64, block.a[j] as f64);
                s += match arm {
                    Arm::Treated => (ai - pi) * k * aj * block.y[j],
                    Arm::Control => (pi - ai) * k * (1.0 - aj) * block.y[j],
                };
            }
        }
        let share = if arm == Arm::Treated { pi } else { 1.0 - pi };
        s / (n as f64 * (n as f64 - 1.0) * share * share)
    }

    fn random_block(rng: &mut ChaCha8Rng) -> StratumBlock {
        let n = rng.random_range(2..=30);
        let p = rng.random_range(1..=5);
        let mut a: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        a[0] = 1;
        a[1] = 0;
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let x: Vec<f64> = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
        single_block(&y, &a, &x, p)
    }

    #[test]
    fn unadjusted_hand_value() {
        let d = dataset(
            &[2.0, 4.0, 1.0, 0.0, 0.0, 2.0],
            &[1, 1, 0, 1, 0, 0],
            &["A", "A", "A", "B", "B", "B"],
            &[],
            0,
        );
        let r = tau_unadjusted(&d).unwrap();
        assert!((r.tau_hat - 0.5).abs() < 1e-15);
        assert_eq!(r.strata.len(), 2);
    }

    #[test]
    fn constant_outcomes_give_zero() {
        let d = dataset(&[3.0; 4], &[1, 0, 1, 0], &["1"; 4], &[1.0, 2.0, 3.0, 4.0], 1);
        assert_eq!(tau_unadjusted(&d).unwrap().tau_hat, 0.0);
    }

    #[test]
    fn empty_arm_is_degenerate() {
        let d = dataset(&[1.0, 2.0, 3.0], &[1, 1, 1], &["1"; 3], &[], 0);
        let err = tau_unadjusted(&d).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    fn ols_example() -> TrialDataset {
        dataset(&[2.0, 4.0, 0.0, 0.0], &[1, 1, 0, 0], &["1"; 4], &[1.0, 2.0, 1.0, 2.0], 1)
    }

    #[test]
    fn ols_hand_values() {
        let d = ols_example();
        let strat = Stratified::new(&d);
        let grams = sample_grams(&strat, DEFAULT_RCOND).unwrap();
        assert!((grams[0].matrix[(0, 0)] - 2.5).abs() < 1e-15);
        let (b1, b0) = ols_coefficients(&strat.blocks()[0], &grams[0]).unwrap();
        assert!((b1[0] - 2.0).abs() < 1e-14);
        assert!(b0[0].abs() < 1e-14);
        let r = tau_ols(&d).unwrap();
        assert!((r.tau_hat - 3.0).abs() < 1e-14);
        let m = DMatrix::from_element(1, 1, 0.4);
        assert!((ols_diag_bias(&strat.blocks()[0], &m, Arm::Treated).unwrap() - 0.9).abs() < 1e-14);
    }

    #[test]
    fn ols_zero_response_and_no_covariates() {
        let d = dataset(&[0.0; 4], &[1, 1, 0, 0], &["1"; 4], &[1.0, 2.0, 1.0, 2.0], 1);
        let strat = Stratified::new(&d);
        let grams = sample_grams(&strat, DEFAULT_RCOND).unwrap();
        let (b1, b0) = ols_coefficients(&strat.blocks()[0], &grams[0]).unwrap();
        assert_eq!((b1[0], b0[0]), (0.0, 0.0));
        assert_eq!(tau_ols(&d).unwrap().tau_hat, 0.0);

        let d = dataset(&[1.0, 5.0, 2.0, 0.0], &[1, 1, 0, 0], &["1"; 4], &[], 0);
        let strat = Stratified::new(&d);
        let grams = sample_grams(&strat, DEFAULT_RCOND).unwrap();
        let (b1, b0) = ols_coefficients(&strat.blocks()[0], &grams[0]).unwrap();
        assert_eq!((b1.len(), b0.len()), (0, 0));
        let unadj = tau_unadjusted(&d).unwrap().tau_hat;
        assert_eq!(tau_ols(&d).unwrap().tau_hat, unadj);
        assert_eq!(tau_adjusted(&d, AdjustMode::Feasible, None).unwrap().tau_hat, unadj);
    }

    #[test]
    fn u_statistic_hand_values() {
        let b = single_block(&[3.0, 5.0], &[1, 0], &[1.0, 2.0], 1);
        let m = DMatrix::from_element(1, 1, 1.0);
        assert!((u_statistic_pair(&b, &m, Arm::Treated).unwrap() + 6.0).abs() < 1e-14);
        assert!((u_statistic_pair(&b, &m, Arm::Control).unwrap() + 10.0).abs() < 1e-14);
        assert!((u_statistic_loo(&b, &m, Arm::Treated).unwrap() + 6.0).abs() < 1e-14);
        assert!((u_statistic_loo(&b, &m, Arm::Control).unwrap() + 10.0).abs() < 1e-14);
        let zero = DMatrix::zeros(1, 1);
        assert_eq!(u_statistic_pair(&b, &zero, Arm::Treated).unwrap(), 0.0);
        let b0 = single_block(&[0.0, 0.0], &[1, 0], &[1.0, 2.0], 1);
        assert_eq!(u_statistic_pair(&b0, &m, Arm::Control).unwrap(), 0.0);
        assert_eq!(u_statistic_loo(&b0, &m, Arm::Treated).unwrap(), 0.0);
    }

    #[test]
    fn u_statistic_matches_naive_and_loo() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let b = random_block(&mut rng);
            let p = b.x.ncols();
            let m = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
            for arm in [Arm::Treated, Arm::Control] {
                let pair = u_statistic_pair(&b, &m, arm).unwrap();
                assert!(close(pair, naive_u(&b, &m, arm), 1e-10));
                assert!(close(u_statistic_loo(&b, &m, arm).unwrap(), pair, 1e-10));
            }
        }
    }

    #[test]
    fn oracle_mode_with_sample_grams_equals_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 40;
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let s: Vec<&str> = (0..n).map(|i| if i < 20 { "1" } else { "2" }).collect();
        let x: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = dataset(&y, &a, &s, &x, 3);
        let grams = sample_grams(&Stratified::new(&d), DEFAULT_RCOND).unwrap();
        let feasible = tau_adjusted(&d, AdjustMode::Feasible, None).unwrap();
        let oracle = tau_adjusted(&d, AdjustMode::Oracle, Some(&grams)).unwrap();
        assert_eq!(feasible.tau_hat, oracle.tau_hat);
        assert_eq!(oracle.kind, EstimatorKind::Oracle);
        assert!(tau_adjusted(&d, AdjustMode::Oracle, None).is_err());
        assert!(tau_adjusted(&d, AdjustMode::Feasible, Some(&grams)).is_err());
    }

    /// From scratch: sample Gram by loops, LU inverse, double-loop U-statistics.
    fn naive_feasible(y: &[f64], a: &[u8], x: &DMatrix<f64>) -> f64 {
        let n = y.len();
        let p = x.ncols();
        let mut g = DMatrix::zeros(p, p);
        for i in 0..n {
            for r in 0..p {
                for c in 0..p {
                    g[(r, c)] += x[(i, r)] * x[(i, c)] / n as f64;
                }
            }
        }
        let m = g.try_inverse().unwrap();
        let n1 = a.iter().filter(|&&v| v == 1).count() as f64;
        let n0 = n as f64 - n1;
        let pi = n1 / n as f64;
        let mut u1 = 0.0;
        let mut u0 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let k = (x.row(i) * &m * x.row(j).transpose())[(0, 0)];
                    let (ai, aj) = (a[i] as f64, a[j] as f64);
                    u1 += (ai - pi) * k * aj * y[j];
                    u0 += (pi - ai) * k * (1.0 - aj) * y[j];
                }
            }
        }
        let denom = n as f64 * (n as f64 - 1.0);
        u1 /= denom * pi * pi;
        u0 /= denom * (1.0 - pi) * (1.0 - pi);
        let ybar1: f64 = (0..n).filter(|&i| a[i] == 1).map(|i| y[i]).sum::<f64>() / n1;
        let ybar0: f64 = (0..n).filter(|&i| a[i] == 0).map(|i| y[i]).sum::<f64>() / n0;
        (ybar1 - u1) - (ybar0 - u0)
    }

    #[test]
    fn feasible_matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let y: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = vec![1, 0, 1, 0, 0, 1];
            let x: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d = dataset(&y, &a, &["1"; 6], &x, 2);
            let fast = tau_adjusted(&d, AdjustMode::Feasible, None).unwrap().tau_hat;
            let slow = naive_feasible(&y, &a, d.covariates());
            assert!(close(fast, slow, 1e-10), "{fast} vs {slow}");
        }
    }

    #[test]
    fn adding_constant_to_all_outcomes() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 30;
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
        let x: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d = dataset(&y, &a, &vec!["1"; n], &x, 2);
        let c = 2.5;
        let shifted = d.with_outcomes(y.iter().map(|v| v + c).collect()).unwrap();
        let before = tau_unadjusted(&d).unwrap().tau_hat;
        assert!((tau_unadjusted(&shifted).unwrap().tau_hat - before).abs() < 1e-12);

        let ones = d.with_outcomes(vec![1.0; n]).unwrap();
        let strat = Stratified::new(&ones);
        let g = &sample_grams(&strat, DEFAULT_RCOND).unwrap()[0];
        let b = &strat.blocks()[0];
        let shift = u_statistic_pair(b, &g.inverse, Arm::Treated).unwrap()
            - u_statistic_pair(b, &g.inverse, Arm::Control).unwrap();
        let adj_before = tau_adjusted(&d, AdjustMode::Feasible, None).unwrap().tau_hat;
        let adj_after = tau_adjusted(&shifted, AdjustMode::Feasible, None).unwrap().tau_hat;
        assert!(close(adj_after - adj_before, -c * shift, 1e-10));
    }

    #[test]
    fn tau_is_weighted_sum_of_contributions() {
        let d = dataset(
            &[2.0, 4.0, 1.0, 0.0, 0.0, 2.0, 1.0],
            &[1, 1, 0, 1, 0, 0, 1],
            &["A", "A", "A", "B", "B", "B", "B"],
            &[],
            0,
        );
        let r = tau_unadjusted(&d).unwrap();
        let sum: f64 = r.strata.iter().map(|s| s.weight * s.effect).sum();
        assert!((r.tau_hat - sum).abs() < 1e-12);
    }

    #[test]
    fn kind_round_trips_through_name() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.name().parse::<EstimatorKind>().unwrap(), k);
        }
        assert!("ridge".parse::<EstimatorKind>().is_err());
    }
}
