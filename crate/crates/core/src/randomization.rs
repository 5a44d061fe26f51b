//! Covariate-adaptive randomization: stratum sampling and treatment assignment.
//!
//! Assignments are a pure function of the scheme, the stratum labels and the
//! seed. Outcomes and covariates never enter, so every scheme here draws
//! treatment independently of potential outcomes given the strata.
//!
//! Stratum labels are 1-based (`1..=K`); the label `k` selects the `k`-th
//! target proportion.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BLOCK_SIZE: usize = 6;
pub const DEFAULT_COIN_BIAS: f64 = 2.0 / 3.0;

const SIMPLEX_TOL: f64 = 1e-12;

/// Which randomization procedure to run within each stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeKind {
    Simple,
    PermutedBlock { block_size: usize },
    BiasedCoin { bias: f64 },
}

/// A validated randomization scheme.
///
/// `targets` holds one target treated fraction per stratum, or a single value
/// shared by all strata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationScheme {
    kind: SchemeKind,
    targets: Vec<f64>,
}

impl RandomizationScheme {
    pub fn new(kind: SchemeKind, targets: Vec<f64>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::InvalidScheme("no target proportions".into()));
        }
        for &pi in &targets {
            if !(pi > 0.0 && pi < 1.0) {
                return Err(Error::InvalidScheme(format!("target proportion {pi} not in (0, 1)")));
            }
        }
        match kind {
            SchemeKind::Simple => {}
            SchemeKind::PermutedBlock { block_size } => {
                if block_size == 0 {
                    return Err(Error::InvalidScheme("block size must be positive".into()));
                }
                for &pi in &targets {
                    let treated = block_size as f64 * pi;
                    if (treated - treated.round()).abs() > 1e-9 {
                        return Err(Error::InvalidScheme(format!(
                            "block size {block_size} times target {pi} is not an integer"
                        )));
                    }
                }
            }
            SchemeKind::BiasedCoin { bias } => {
                if !(bias > 0.5 && bias <= 1.0) {
                    return Err(Error::InvalidScheme(format!("coin bias {bias} not in (1/2, 1]")));
                }
                if targets.iter().any(|&pi| pi != 0.5) {
                    return Err(Error::InvalidScheme(
                        "biased coin requires a target proportion of 1/2".into(),
                    ));
                }
            }
        }
        Ok(Self { kind, targets })
    }

    pub fn simple(pi: f64) -> Result<Self> {
        Self::new(SchemeKind::Simple, vec![pi])
    }

    pub fn permuted_block(block_size: usize, pi: f64) -> Result<Self> {
        Self::new(SchemeKind::PermutedBlock { block_size }, vec![pi])
    }

    pub fn biased_coin(bias: f64) -> Result<Self> {
        Self::new(SchemeKind::BiasedCoin { bias }, vec![0.5])
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Target proportion for 1-based stratum `label`.
    pub fn target(&self, label: usize) -> Result<f64> {
        if label == 0 {
            return Err(Error::InvalidParameter("stratum labels start at 1".into()));
        }
        if self.targets.len() == 1 {
            return Ok(self.targets[0]);
        }
        self.targets.get(label - 1).copied().ok_or_else(|| {
            Error::InvalidParameter(format!(
                "stratum {label} outside the {} configured strata",
                self.targets.len()
            ))
        })
    }
}

fn check_simplex(probs: &[f64]) -> Result<()> {
    if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidParameter("stratum probabilities must be non-negative".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidParameter(format!("stratum probabilities sum to {total}, not 1")));
    }
    Ok(())
}

/// I.i.d. categorical stratum labels in `1..=probs.len()`.
pub fn draw_strata(probs: &[f64], n: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_strata_with(probs, n, &mut rng)
}

pub fn draw_strata_with<R: Rng + ?Sized>(probs: &[f64], n: usize, rng: &mut R) -> Result<Vec<usize>> {
    check_simplex(probs)?;
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one unit".into()));
    }
    let dist = WeightedIndex::new(probs).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok((0..n).map(|_| dist.sample(rng) + 1).collect())
}

/// Treatment assignments for units arriving in the given order.
pub fn assign(scheme: &RandomizationScheme, strata: &[usize], seed: u64) -> Result<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    assign_with(scheme, strata, &mut rng)
}

pub fn assign_with<R: Rng + ?Sized>(
    scheme: &RandomizationScheme,
    strata: &[usize],
    rng: &mut R,
) -> Result<Vec<u8>> {
    let k = strata.iter().copied().max().unwrap_or(0);
    let targets = (1..=k).map(|label| scheme.target(label)).collect::<Result<Vec<_>>>()?;
    if strata.contains(&0) {
        return Err(Error::InvalidParameter("stratum labels start at 1".into()));
    }

    match scheme.kind {
        SchemeKind::Simple => Ok(strata
            .iter()
            .map(|&s| u8::from(rng.random_bool(targets[s - 1])))
            .collect()),
        SchemeKind::PermutedBlock { block_size } => {
            let mut remaining = vec![0usize; k];
            for &s in strata {
                remaining[s - 1] += 1;
            }
            let mut queues: Vec<Vec<u8>> = vec![Vec::new(); k];
            let mut out = Vec::with_capacity(strata.len());
            for &s in strata {
                let idx = s - 1;
                if queues[idx].is_empty() {
                    let treated = (block_size as f64 * targets[idx]).round() as usize;
                    let mut block: Vec<u8> = (0..block_size).map(|j| u8::from(j < treated)).collect();
                    block.shuffle(rng);
                    // a short final block keeps a prefix of a full permutation
                    block.truncate(remaining[idx].min(block_size));
                    block.reverse();
                    queues[idx] = block;
                }
                remaining[idx] -= 1;
                out.push(queues[idx].pop().expect("queue refilled above"));
            }
            Ok(out)
        }
        SchemeKind::BiasedCoin { bias } => {
            let mut imbalance = vec![0i64; k];
            Ok(strata
                .iter()
                .map(|&s| {
                    let d = &mut imbalance[s - 1];
                    let p = match (*d).cmp(&0) {
                        std::cmp::Ordering::Equal => 0.5,
                        std::cmp::Ordering::Less => bias,
                        std::cmp::Ordering::Greater => 1.0 - bias,
                    };
                    let a = rng.random_bool(p);
                    *d += if a { 1 } else { -1 };
                    u8::from(a)
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn treated_fraction(a: &[u8]) -> f64 {
        a.iter().map(|&v| v as f64).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn degenerate_simplex_gives_single_label() {
        assert!(draw_strata(&[1.0], 50, 3).unwrap().iter().all(|&s| s == 1));
    }

    #[test]
    fn stratum_frequencies_match_targets() {
        let probs = [0.2, 0.2, 0.3, 0.3];
        let s = draw_strata(&probs, 100_000, 17).unwrap();
        for (k, &p) in probs.iter().enumerate() {
            let freq = s.iter().filter(|&&v| v == k + 1).count() as f64 / s.len() as f64;
            assert!((freq - p).abs() < 0.01, "stratum {} freq {freq}", k + 1);
        }
        assert_eq!(s, draw_strata(&probs, 100_000, 17).unwrap());
    }

    #[test]
    fn bad_simplex_rejected() {
        assert!(draw_strata(&[0.5, 0.6], 10, 1).is_err());
        assert!(draw_strata(&[-0.5, 1.5], 10, 1).is_err());
        assert!(draw_strata(&[], 10, 1).is_err());
        assert!(draw_strata(&[1.0], 0, 1).is_err());
    }

    #[test]
    fn scheme_validation() {
        assert!(RandomizationScheme::permuted_block(3, 0.5).is_err());
        assert!(RandomizationScheme::permuted_block(0, 0.5).is_err());
        assert!(RandomizationScheme::permuted_block(4, 0.25).is_ok());
        assert!(RandomizationScheme::biased_coin(0.5).is_err());
        assert!(RandomizationScheme::biased_coin(1.0).is_ok());
        assert!(RandomizationScheme::new(SchemeKind::BiasedCoin { bias: 0.7 }, vec![0.4]).is_err());
        assert!(RandomizationScheme::simple(1.0).is_err());
        assert!(RandomizationScheme::simple(0.0).is_err());
    }

    #[test]
    fn pairs_balance_under_block_of_two() {
        let scheme = RandomizationScheme::permuted_block(2, 0.5).unwrap();
        for seed in 0..20 {
            let a = assign(&scheme, &[1, 1, 1, 1], seed).unwrap();
            assert_eq!(a.iter().map(|&v| v as usize).sum::<usize>(), 2);
            assert_eq!(a[0] + a[1], 1);
            assert_eq!(a[2] + a[3], 1);
        }
    }

    #[test]
    fn interleaved_strata_fill_blocks_in_arrival_order() {
        let scheme = RandomizationScheme::permuted_block(4, 0.5).unwrap();
        let strata: Vec<usize> = (0..40).map(|i| 1 + (i * 7 % 3)).collect();
        let a = assign(&scheme, &strata, 99).unwrap();
        for label in 1..=3 {
            let arm: Vec<u8> = strata.iter().zip(&a).filter(|(s, _)| **s == label).map(|(_, &v)| v).collect();
            for block in arm.chunks_exact(4) {
                assert_eq!(block.iter().sum::<u8>(), 2);
            }
        }
    }

    #[test]
    fn partial_final_block_is_a_prefix() {
        let scheme = RandomizationScheme::permuted_block(6, 0.5).unwrap();
        for seed in 0..50 {
            let a = assign(&scheme, &[1; 8], seed).unwrap();
            assert_eq!(a[..6].iter().sum::<u8>(), 3);
            assert!(a[6..].iter().sum::<u8>() <= 2);
        }
    }

    #[test]
    fn biased_coin_stays_balanced() {
        let scheme = RandomizationScheme::biased_coin(DEFAULT_COIN_BIAS).unwrap();
        let a = assign(&scheme, &vec![1; 10_000], 5).unwrap();
        assert!((treated_fraction(&a) - 0.5).abs() <= 0.02);
    }

    #[test]
    fn deterministic_coin_alternates() {
        let scheme = RandomizationScheme::biased_coin(1.0).unwrap();
        let a = assign(&scheme, &vec![1; 100], 8).unwrap();
        let d: i64 = a.iter().map(|&v| if v == 1 { 1 } else { -1 }).sum();
        assert_eq!(d, 0);
        for pair in a.chunks_exact(2) {
            assert_eq!(pair[0] + pair[1], 1);
        }
    }

    #[test]
    fn simple_within_binomial_envelope() {
        let scheme = RandomizationScheme::simple(0.3).unwrap();
        let a = assign(&scheme, &vec![1; 10_000], 12).unwrap();
        let envelope = 4.0 * (0.3f64 * 0.7 / 1e4).sqrt();
        assert!((treated_fraction(&a) - 0.3).abs() <= envelope);
    }

    #[test]
    fn per_stratum_targets() {
        let scheme = RandomizationScheme::new(SchemeKind::PermutedBlock { block_size: 4 }, vec![0.25, 0.75]).unwrap();
        let strata: Vec<usize> = (0..80).map(|i| 1 + i % 2).collect();
        let a = assign(&scheme, &strata, 1).unwrap();
        let t1: u8 = a.iter().step_by(2).sum();
        let t2: u8 = a.iter().skip(1).step_by(2).sum();
        assert_eq!((t1, t2), (10, 30));
        assert!(assign(&scheme, &[3], 1).is_err());
        assert!(assign(&scheme, &[0], 1).is_err());
    }
}
