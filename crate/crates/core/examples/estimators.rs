//! The four point estimators on one simulated trial, and the two equivalent
//! forms of the U-statistic adjustment.

use caradj::data::{Arm, Stratified};
use caradj::estimators::{
    ols_bias_diagnostic, sample_grams, tau_adjusted_with, tau_ols_with, tau_unadjusted, u_statistic_loo,
    u_statistic_pair, AdjustMode,
};
use caradj::sim::{true_tau, Dgp, DgpConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> caradj::Result<()> {
    let config = DgpConfig::model1(1000, 60);
    let dgp = Dgp::new(config.clone())?;
    let rep = dgp.generate(&mut ChaCha8Rng::seed_from_u64(3), &mut ChaCha8Rng::seed_from_u64(4))?;
    let strat = Stratified::new(&rep.dataset);
    let sample = sample_grams(&strat, 1e-10)?;
    let oracle = dgp.oracle_grams()?;

    println!("true tau      {:.4}", true_tau(&config)?.tau);
    println!("unadjusted    {:.4}", tau_unadjusted(&rep.dataset)?.tau_hat);
    println!("ols           {:.4}", tau_ols_with(&strat, &sample)?.tau_hat);
    println!("oracle        {:.4}", tau_adjusted_with(&strat, &oracle, AdjustMode::Oracle)?.tau_hat);
    println!("feasible      {:.4}", tau_adjusted_with(&strat, &sample, AdjustMode::Feasible)?.tau_hat);
    println!("ols diagonal term {:.4}", ols_bias_diagnostic(&strat, &sample)?);

    let block = &strat.blocks()[0];
    let m = &sample[0].inverse;
    for arm in [Arm::Treated, Arm::Control] {
        println!(
            "stratum {} {arm:?}: pair form {:.10}, leave-one-out form {:.10}",
            block.label(),
            u_statistic_pair(block, m, arm)?,
            u_statistic_loo(block, m, arm)?
        );
    }
    Ok(())
}
