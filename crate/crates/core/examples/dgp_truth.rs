//! The two simulation models: true effects, population Gram matrices and
//! one generated trial each.

use caradj::sim::{generate, true_gram, true_tau, DgpConfig};

fn main() -> caradj::Result<()> {
    let m1 = DgpConfig::model1(600, 3);
    println!("model 1 tau = {:.6} (closed form)", true_tau(&m1)?.tau);
    println!("model 1 population Gram, p = 3 {}", true_gram(&m1)?.matrix);

    let m2 = DgpConfig::model2(600, 3);
    let t2 = true_tau(&m2)?;
    println!("model 2 tau = {:.6} (Monte Carlo se {:.1e})", t2.tau, t2.se);

    for (name, cfg) in [("model 1", &m1), ("model 2", &m2)] {
        let rep = generate(cfg, 1, 2)?;
        println!(
            "{name}: {} units, sample ATE {:.4}, consistency holds: {}",
            rep.dataset.n(),
            rep.sample_ate(),
            rep.consistency_holds()
        );
    }
    Ok(())
}
