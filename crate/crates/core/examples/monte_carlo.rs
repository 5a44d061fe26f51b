//! A small Monte Carlo study of all four estimators.

use caradj::sim::{run_monte_carlo, DgpConfig, RunSettings};

fn main() -> caradj::Result<()> {
    let config = DgpConfig::model1(600, 30);
    let settings = RunSettings {
        replicates: 200,
        workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        ..RunSettings::default()
    };
    let run = run_monte_carlo(&config, &settings)?;
    let res = &run.result;
    println!("tau = {:.4}, {} replicates", res.true_tau, res.replicates);
    println!("{:<11} {:>8} {:>8} {:>8} {:>7} {:>7}", "estimator", "bias", "sd", "sd/se", "cp", "mc cp");
    for m in &res.metrics {
        println!(
            "{:<11} {:>8.4} {:>8.4} {:>8.3} {:>7.3} {:>7.3}",
            m.kind.name(),
            m.bias,
            m.sd,
            m.sd_se,
            m.cp,
            m.mc_cp
        );
    }
    if let Some(d) = res.diagnostics.mean_diag_bias {
        println!("mean ols diagonal term {d:.4}");
    }
    Ok(())
}
