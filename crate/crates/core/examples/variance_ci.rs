//! Variance components of the adjusted estimator and Wald intervals.

use caradj::data::Stratified;
use caradj::estimators::{sample_grams, AdjustMode, EstimatorKind};
use caradj::sim::{generate, DgpConfig};
use caradj::variance::{normal_quantile, sigma2_baseline_with, sigma2_hat_with, wald_ci};

fn main() -> caradj::Result<()> {
    let rep = generate(&DgpConfig::model1(800, 10), 5, 6)?;
    let strat = Stratified::new(&rep.dataset);
    let grams = sample_grams(&strat, 1e-10)?;

    let v = sigma2_hat_with(&strat, &grams, AdjustMode::Feasible)?;
    println!("zeta2_H  = {:.4}", v.zeta2_h);
    println!("zeta2_I  = {:.4}  (sigma2_Y {:.4}, eta terms {:.4}, cross {:.4})", v.zeta2_i, v.sigma2_y, v.sigma2_i_eta, v.sigma_i_eta10);
    println!("zeta2_II = {:.4}", v.zeta2_ii);
    println!("sigma2   = {:.4}", v.sigma2);
    println!("unadjusted sigma2 = {:.4}", sigma2_baseline_with(&strat, EstimatorKind::Unadjusted, &[])?);
    println!("ols sigma2        = {:.4}", sigma2_baseline_with(&strat, EstimatorKind::Ols, &grams)?);

    let ci = wald_ci(3.3, v.sigma2, strat.n(), 0.05)?;
    println!("z_0.975 = {:.7}; CI around 3.3: [{:.4}, {:.4}]", normal_quantile(0.975)?, ci.lo, ci.hi);
    Ok(())
}
