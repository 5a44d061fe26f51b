//! True average treatment effects of the simulation models.
//!
//! Model 1 has a closed form: only the nonlinear terms have nonzero mean,
//! `E[X0' S^{-1} X0] = c p0` and `E[X0[4]^2] = c S_44` with
//! `c = df / (df - 2)`. Model 2 is integrated by Monte Carlo over the
//! covariate distribution using the conditional success probabilities, and
//! the result is cached per configuration.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{Dgp, DgpConfig, Model};
use crate::error::Result;
use crate::numeric::CompensatedSum;

pub const TRUTH_DRAWS: u64 = 10_000_000;
pub const TRUTH_SEED: u64 = 0x7e57_7a0e;
const CHUNK: u64 = 250_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub tau: f64,
    /// Monte Carlo standard error; zero for closed forms.
    pub se: f64,
}

/// True ATE of the configured model.
pub fn true_tau(config: &DgpConfig) -> Result<Truth> {
    match config.model {
        Model::Continuous => {
            let dgp = Dgp::new(config.clone())?;
            let c = dgp.config().variance_factor();
            let tau = if config.nonlinear_terms {
                let s44 = config.scale_matrix()[(3, 3)];
                0.05 * c * config.p0 as f64 + 0.5 * c * s44
            } else {
                0.0
            };
            Ok(Truth { tau, se: 0.0 })
        }
        Model::Binary => cached_binary_truth(config),
    }
}

/// Fields that change the model-2 truth; the rest (n, p, randomization) do not.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct TruthKey(String);

impl TruthKey {
    fn new(c: &DgpConfig) -> Self {
        TruthKey(format!(
            "{:?}|{}|{:?}|{:?}|{:?}|{}|{}|{:?}|{:?}|{:?}|{:?}",
            c.model,
            c.p0,
            c.scale,
            c.rho,
            c.df,
            c.linear_terms,
            c.nonlinear_terms,
            c.control_intercept,
            c.treated_intercept,
            c.control_slope,
            c.treated_slope
        ))
    }
}

fn cached_binary_truth(config: &DgpConfig) -> Result<Truth> {
    static CACHE: OnceLock<Mutex<HashMap<TruthKey, Truth>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = TruthKey::new(config);
    if let Some(t) = cache.lock().expect("truth cache poisoned").get(&key) {
        return Ok(*t);
    }
    let t = monte_carlo_truth(config, TRUTH_DRAWS, TRUTH_SEED)?;
    cache.lock().expect("truth cache poisoned").insert(key, t);
    Ok(t)
}

/// `E[mu1(X) - mu0(X)]` averaged over `draws` covariate vectors.
///
/// Draws are split into fixed chunks with their own streams, so the value
/// does not depend on the thread count.
pub fn monte_carlo_truth(config: &DgpConfig, draws: u64, seed: u64) -> Result<Truth> {
    let dgp = Dgp::new(DgpConfig {
        n: config.n.max(2 * config.k()),
        ..config.clone()
    })?;
    let chunks = draws.div_ceil(CHUNK);
    let partial: Vec<(CompensatedSum, CompensatedSum, u64)> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let m = CHUNK.min(draws - chunk * CHUNK);
            let mut sum = CompensatedSum::new();
            let mut sq = CompensatedSum::new();
            for _ in 0..m {
                let d = dgp.draw_covariates(&mut rng);
                // the stratum shifts both arms equally in model 1 and is absent in model 2
                let (m0, m1) = dgp.mean_outcomes(&d, 1);
                let diff = m1 - m0;
                sum.add(diff);
                sq.add(diff * diff);
            }
            (sum, sq, m)
        })
        .collect();
    let mut sum = CompensatedSum::new();
    let mut sq = CompensatedSum::new();
    for (s, q, _) in &partial {
        sum.add(s.value());
        sq.add(q.value());
    }
    let n = draws as f64;
    let mean = sum.value() / n;
    let var = (sq.value() / n - mean * mean) * n / (n - 1.0);
    Ok(Truth {
        tau: mean,
        se: (var.max(0.0) / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model1_default_is_ten_thirds() {
        let t = true_tau(&DgpConfig::default()).unwrap();
        assert!((t.tau - 10.0 / 3.0).abs() < 1e-12);
        let flat = DgpConfig {
            nonlinear_terms: false,
            ..DgpConfig::default()
        };
        assert_eq!(true_tau(&flat).unwrap().tau, 0.0);
    }

    #[test]
    fn model1_closed_form_matches_monte_carlo() {
        let cfg = DgpConfig::default();
        let mc = monte_carlo_truth(&cfg, 200_000, 3).unwrap();
        assert!((mc.tau - 10.0 / 3.0).abs() < 4.0 * mc.se, "{mc:?}");
    }
}
