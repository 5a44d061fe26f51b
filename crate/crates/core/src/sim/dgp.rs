//! Data-generating processes for the two simulation models.
//!
//! Both models draw a heavy-tailed covariate vector `X0 ~ t_df(0, S)` of
//! dimension `p0`, a stratum label in `1..=K` that also enters the outcome
//! additively, and potential outcomes from fixed nonlinear mean functions:
//!
//! * model 1 (continuous):
//!   `Y(0) = B + 2 X0'b - 0.5 X0[4]^2 + e0`,
//!   `Y(1) = B + 0.05 X0' S^{-1} X0 + e1`;
//! * model 2 (binary): `Y(0) ~ Bern(expit(-1 + X0'b0 - 2 X0[1]^2))`,
//!   `Y(1) ~ Bern(expit(-3 + X0'b1 + 2 X0[2]^2 + 0.5 X0[3]^4))`.
//!
//! The analysis sees the first `p` columns of `X0`, padded with independent
//! `t_df` noise columns when `p > p0`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::gram::{invert_or_pseudo, GramMode, GramPair, DEFAULT_RCOND};
use crate::randomization::{
    assign_with, draw_strata_with, RandomizationScheme, SchemeKind, DEFAULT_BLOCK_SIZE, DEFAULT_COIN_BIAS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Model {
    Continuous,
    Binary,
}

impl TryFrom<u8> for Model {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Model::Continuous),
            2 => Ok(Model::Binary),
            other => Err(format!("model must be 1 or 2, got {other}")),
        }
    }
}

impl From<Model> for u8 {
    fn from(m: Model) -> u8 {
        match m {
            Model::Continuous => 1,
            Model::Binary => 2,
        }
    }
}

/// Scale matrix of the covariate distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleKind {
    /// `S_ij = rho^|i-j|`
    Ar,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Simple,
    PermutedBlock,
    BiasedCoin,
}

/// Randomization settings as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub scheme: SchemeName,
    pub block_size: usize,
    pub bias: f64,
    pub pi: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeName::PermutedBlock,
            block_size: DEFAULT_BLOCK_SIZE,
            bias: DEFAULT_COIN_BIAS,
            pi: 0.5,
        }
    }
}

impl SchemeConfig {
    pub fn build(&self) -> Result<RandomizationScheme> {
        let kind = match self.scheme {
            SchemeName::Simple => SchemeKind::Simple,
            SchemeName::PermutedBlock => SchemeKind::PermutedBlock {
                block_size: self.block_size,
            },
            SchemeName::BiasedCoin => SchemeKind::BiasedCoin { bias: self.bias },
        };
        RandomizationScheme::new(kind, vec![self.pi])
    }
}

/// Everything needed to generate one simulated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DgpConfig {
    pub model: Model,
    pub n: usize,
    /// Adjusted covariate dimension.
    pub p: usize,
    /// Dimension of the outcome-relevant covariates.
    pub p0: usize,
    pub scale: ScaleKind,
    pub rho: f64,
    /// Degrees of freedom of the multivariate t.
    pub df: f64,
    pub strata_probs: Vec<f64>,
    /// Use exactly `round(prob * n)` units per stratum instead of i.i.d. labels.
    pub fixed_strata: bool,
    pub noise_sd: f64,
    /// Include the linear `X0'b` terms.
    pub linear_terms: bool,
    /// Include the quadratic, quartic and Mahalanobis terms.
    pub nonlinear_terms: bool,
    pub control_intercept: f64,
    pub treated_intercept: f64,
    pub control_slope: f64,
    pub treated_slope: f64,
    /// Seed for the model-1 coefficient vector, drawn once per scenario.
    pub coef_seed: u64,
    pub randomization: SchemeConfig,
}

impl Default for DgpConfig {
    fn default() -> Self {
        Self {
            model: Model::Continuous,
            n: 600,
            p: 30,
            p0: 30,
            scale: ScaleKind::Ar,
            rho: 0.1,
            df: 5.0,
            strata_probs: vec![0.2, 0.2, 0.3, 0.3],
            fixed_strata: false,
            noise_sd: 0.1,
            linear_terms: true,
            nonlinear_terms: true,
            control_intercept: -1.0,
            treated_intercept: -3.0,
            control_slope: 1.5,
            treated_slope: 0.5,
            coef_seed: 1,
            randomization: SchemeConfig::default(),
        }
    }
}

impl DgpConfig {
    pub fn model1(n: usize, p: usize) -> Self {
        Self {
            n,
            p,
            ..Self::default()
        }
    }

    pub fn model2(n: usize, p: usize) -> Self {
        Self {
            model: Model::Binary,
            n,
            p,
            ..Self::default()
        }
    }

    /// `p = ceil(ratio * n)`
    pub fn dimension_for_ratio(n: usize, ratio: f64) -> usize {
        // guard against 0.3 * 600 = 180.00000000000003
        let raw = ratio * n as f64;
        let rounded = raw.round();
        if (raw - rounded).abs() < 1e-9 {
            rounded as usize
        } else {
            raw.ceil() as usize
        }
    }

    pub fn k(&self) -> usize {
        self.strata_probs.len()
    }

    /// `df / (df - 2)`, the covariance inflation of the t distribution.
    pub fn variance_factor(&self) -> f64 {
        self.df / (self.df - 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.strata_probs.is_empty() {
            return bad("strata_probs is empty".into());
        }
        let total: f64 = self.strata_probs.iter().sum();
        if self.strata_probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return bad(format!("strata_probs must be a probability vector, sum is {total}"));
        }
        if self.n < 2 * self.k() {
            return bad(format!("n = {} is below 2K = {}", self.n, 2 * self.k()));
        }
        if !(self.df > 2.0) {
            return bad(format!("df must exceed 2, got {}", self.df));
        }
        let needed = match self.model {
            Model::Continuous => 4,
            Model::Binary => 3,
        };
        if self.p0 < needed {
            return bad(format!("p0 must be at least {needed} for this model, got {}", self.p0));
        }
        if self.scale == ScaleKind::Ar && !(self.rho.abs() < 1.0) {
            return bad(format!("rho must lie in (-1, 1), got {}", self.rho));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be finite and >= 0, got {}", self.noise_sd));
        }
        self.randomization.build().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Scale matrix `S` of `X0`.
    pub fn scale_matrix(&self) -> DMatrix<f64> {
        match self.scale {
            ScaleKind::Identity => DMatrix::identity(self.p0, self.p0),
            ScaleKind::Ar => DMatrix::from_fn(self.p0, self.p0, |i, j| self.rho.powi(i.abs_diff(j) as i32)),
        }
    }

    /// Model-1 coefficient vector: uniform on `[-1, 1]`, rescaled to unit norm.
    pub fn model1_coefficients(&self) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.coef_seed);
        let beta = DVector::from_fn(self.p0, |_, _| rng.random_range(-1.0..=1.0));
        let norm = beta.norm();
        beta / norm
    }
}

/// One simulated trial with its potential outcomes.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub dataset: TrialDataset,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// Stratum label per unit, `1..=K`.
    pub strata: Vec<usize>,
}

impl Replicate {
    /// Observed outcomes equal `A Y(1) + (1 - A) Y(0)` bit for bit.
    pub fn consistency_holds(&self) -> bool {
        self.dataset
            .outcomes()
            .iter()
            .zip(self.dataset.assignments())
            .enumerate()
            .all(|(i, (&y, &a))| y == if a == 1 { self.y1[i] } else { self.y0[i] })
    }

    /// `mean(Y(1) - Y(0))` over all units.
    pub fn sample_ate(&self) -> f64 {
        crate::numeric::mean(&self.y1.iter().zip(&self.y0).map(|(a, b)| a - b).collect::<Vec<_>>())
    }
}

fn expit(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A validated configuration with its fixed matrices precomputed.
#[derive(Debug, Clone)]
pub struct Dgp {
    config: DgpConfig,
    chol: DMatrix<f64>,
    beta0: DVector<f64>,
    beta1: DVector<f64>,
    scheme: RandomizationScheme,
    chi2: ChiSquared<f64>,
    noise_t: StudentT<f64>,
}

/// One covariate draw: `x = L w / sqrt(g / df)`.
pub(crate) struct CovariateDraw {
    pub x: DVector<f64>,
    /// `x' S^{-1} x`
    pub mahalanobis: f64,
}

impl Dgp {
    pub fn new(config: DgpConfig) -> Result<Self> {
        config.validate()?;
        let chol = Cholesky::new(config.scale_matrix())
            .ok_or_else(|| Error::Config("scale matrix is not positive definite".into()))?
            .l();
        let (beta0, beta1) = match config.model {
            Model::Continuous => (config.model1_coefficients(), DVector::zeros(config.p0)),
            Model::Binary => (
                DVector::from_element(config.p0, config.control_slope),
                DVector::from_element(config.p0, config.treated_slope),
            ),
        };
        let scheme = config.randomization.build()?;
        let chi2 = ChiSquared::new(config.df).map_err(|e| Error::Config(e.to_string()))?;
        let noise_t = StudentT::new(config.df).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            config,
            chol,
            beta0,
            beta1,
            scheme,
            chi2,
            noise_t,
        })
    }

    pub fn config(&self) -> &DgpConfig {
        &self.config
    }

    pub fn scheme(&self) -> &RandomizationScheme {
        &self.scheme
    }

    pub(crate) fn draw_covariates<R: Rng + ?Sized>(&self, rng: &mut R) -> CovariateDraw {
        let p0 = self.config.p0;
        let w = DVector::from_fn(p0, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = self.chi2.sample(rng);
        let shrink = (g / self.config.df).sqrt();
        let x = (&self.chol * &w) / shrink;
        CovariateDraw {
            x,
            mahalanobis: w.norm_squared() / (g / self.config.df),
        }
    }

    /// Conditional means `(E[Y(0) | X0, B], E[Y(1) | X0, B])` without noise.
    pub(crate) fn mean_outcomes(&self, draw: &CovariateDraw, stratum: usize) -> (f64, f64) {
        let c = &self.config;
        let x = &draw.x;
        let lin = if c.linear_terms { 1.0 } else { 0.0 };
        let nl = if c.nonlinear_terms { 1.0 } else { 0.0 };
        match c.model {
            Model::Continuous => {
                let b = stratum as f64;
                let m0 = b + lin * 2.0 * x.dot(&self.beta0) - nl * 0.5 * x[3] * x[3];
                let m1 = b + nl * 0.05 * draw.mahalanobis;
                (m0, m1)
            }
            Model::Binary => {
                let eta0 = c.control_intercept + lin * x.dot(&self.beta0) - nl * 2.0 * x[0] * x[0];
                let eta1 = c.treated_intercept + lin * x.dot(&self.beta1) + nl * (2.0 * x[1] * x[1] + 0.5 * x[2].powi(4));
                (expit(eta0), expit(eta1))
            }
        }
    }

    fn draw_strata<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<usize>> {
        let c = &self.config;
        if !c.fixed_strata {
            return draw_strata_with(&c.strata_probs, c.n, rng);
        }
        // largest remainder apportionment, then a random arrival order
        let raw: Vec<f64> = c.strata_probs.iter().map(|p| p * c.n as f64).collect();
        let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
        let short = c.n - counts.iter().sum::<usize>();
        for &k in order.iter().take(short) {
            counts[k] += 1;
        }
        let mut labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(k, &m)| std::iter::repeat_n(k + 1, m))
            .collect();
        labels.shuffle(rng);
        Ok(labels)
    }

    /// Generate one trial. Covariates and outcomes come from `data_rng`,
    /// treatment from `assign_rng` only.
    pub fn generate<R1: Rng + ?Sized, R2: Rng + ?Sized>(&self, data_rng: &mut R1, assign_rng: &mut R2) -> Result<Replicate> {
        let c = &self.config;
        let n = c.n;
        let strata = self.draw_strata(data_rng)?;
        let mut covariates = DMatrix::zeros(n, c.p);
        let mut y0 = Vec::with_capacity(n);
        let mut y1 = Vec::with_capacity(n);
        let used = c.p.min(c.p0);
        for i in 0..n {
            let draw = self.draw_covariates(data_rng);
            for j in 0..used {
                covariates[(i, j)] = draw.x[j];
            }
            for j in c.p0..c.p {
                covariates[(i, j)] = self.noise_t.sample(data_rng);
            }
            let (m0, m1) = self.mean_outcomes(&draw, strata[i]);
            match c.model {
                Model::Continuous => {
                    let e0: f64 = data_rng.sample(StandardNormal);
                    let e1: f64 = data_rng.sample(StandardNormal);
                    y0.push(m0 + c.noise_sd * e0);
                    y1.push(m1 + c.noise_sd * e1);
                }
                Model::Binary => {
                    y0.push(if data_rng.random::<f64>() < m0 { 1.0 } else { 0.0 });
                    y1.push(if data_rng.random::<f64>() < m1 { 1.0 } else { 0.0 });
                }
            }
        }
        let assignments = assign_with(&self.scheme, &strata, assign_rng)?;
        let outcomes = (0..n)
            .map(|i| if assignments[i] == 1 { y1[i] } else { y0[i] })
            .collect();
        let labels: Vec<String> = strata.iter().map(|s| s.to_string()).collect();
        let dataset = TrialDataset::new(outcomes, assignments, &labels, covariates, vec![])?;
        Ok(Replicate {
            dataset,
            y0,
            y1,
            strata,
        })
    }

    /// Population Gram matrix of the adjusted covariates, the same in every stratum.
    pub fn true_gram(&self) -> Result<GramPair> {
        let c = &self.config;
        let factor = c.variance_factor();
        let scale = c.scale_matrix();
        let g = DMatrix::from_fn(c.p, c.p, |i, j| {
            if i < c.p0 && j < c.p0 {
                factor * scale[(i, j)]
            } else if i == j {
                factor
            } else {
                0.0
            }
        });
        Ok(invert_or_pseudo(&g, DEFAULT_RCOND)?.with_mode(GramMode::Oracle))
    }

    /// One oracle Gram pair per stratum.
    pub fn oracle_grams(&self) -> Result<Vec<GramPair>> {
        let g = self.true_gram()?;
        Ok(vec![g; self.config.k()])
    }
}

/// Population Gram pair for `config`; identical across strata.
pub fn true_gram(config: &DgpConfig) -> Result<GramPair> {
    Dgp::new(config.clone())?.true_gram()
}

/// Generate a single trial from two seeds.
pub fn generate(config: &DgpConfig, data_seed: u64, assign_seed: u64) -> Result<Replicate> {
    let dgp = Dgp::new(config.clone())?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(data_seed);
    let mut assign_rng = ChaCha8Rng::seed_from_u64(assign_seed);
    dgp.generate(&mut data_rng, &mut assign_rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_coefficients_leave_stratum_effect() {
        let cfg = DgpConfig {
            noise_sd: 0.0,
            linear_terms: false,
            nonlinear_terms: false,
            ..DgpConfig::model1(200, 5)
        };
        let rep = generate(&cfg, 1, 2).unwrap();
        for i in 0..200 {
            assert_eq!(rep.y0[i], rep.strata[i] as f64);
            assert_eq!(rep.y1[i], rep.strata[i] as f64);
        }
    }

    #[test]
    fn same_seeds_same_trial() {
        let cfg = DgpConfig::model1(100, 40);
        let a = generate(&cfg, 5, 6).unwrap();
        let b = generate(&cfg, 5, 6).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert!(a.consistency_holds());
        let c = generate(&cfg, 5, 7).unwrap();
        assert_eq!(a.dataset.covariates(), c.dataset.covariates());
        assert_eq!(a.y1, c.y1);
    }

    #[test]
    fn binary_outcomes_and_monotone_intercept() {
        let cfg = DgpConfig::model2(2000, 10);
        let low = generate(&cfg, 3, 4).unwrap();
        assert!(low.y0.iter().chain(&low.y1).all(|&y| y == 0.0 || y == 1.0));
        let high = generate(
            &DgpConfig {
                treated_intercept: 10.0,
                ..cfg
            },
            3,
            4,
        )
        .unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&high.y1) > mean(&low.y1));
    }

    #[test]
    fn mahalanobis_matches_explicit_inverse() {
        let cfg = DgpConfig::model1(10, 30);
        let dgp = Dgp::new(cfg.clone()).unwrap();
        let s_inv = cfg.scale_matrix().try_inverse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let d = dgp.draw_covariates(&mut rng);
            let direct = d.x.dot(&(&s_inv * &d.x));
            assert!((d.mahalanobis - direct).abs() < 1e-9 * (1.0 + direct));
        }
    }

    #[test]
    fn true_gram_shapes() {
        let id = true_gram(&DgpConfig {
            scale: ScaleKind::Identity,
            ..DgpConfig::model1(100, 30)
        })
        .unwrap();
        assert!((id.matrix.clone() - DMatrix::identity(30, 30) * (5.0 / 3.0)).amax() < 1e-15);
        let ar = true_gram(&DgpConfig::model1(100, 2)).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 1.0]) * (5.0 / 3.0);
        assert!((ar.matrix - expected).amax() < 1e-15);
        let wide = true_gram(&DgpConfig::model1(100, 40)).unwrap();
        for i in 0..30 {
            for j in 30..40 {
                assert_eq!(wide.matrix[(i, j)], 0.0);
            }
        }
        assert_eq!(wide.mode, GramMode::Oracle);
    }

    #[test]
    fn fixed_strata_sizes() {
        let cfg = DgpConfig {
            fixed_strata: true,
            ..DgpConfig::model1(1000, 5)
        };
        let rep = generate(&cfg, 1, 1).unwrap();
        let counts: Vec<usize> = (1..=4).map(|k| rep.strata.iter().filter(|&&s| s == k).count()).collect();
        assert_eq!(counts, vec![200, 200, 300, 300]);
    }

    #[test]
    fn ratio_to_dimension() {
        assert_eq!(DgpConfig::dimension_for_ratio(600, 0.3), 180);
        assert_eq!(DgpConfig::dimension_for_ratio(600, 0.05), 30);
        assert_eq!(DgpConfig::dimension_for_ratio(1000, 0.02), 20);
        assert_eq!(DgpConfig::dimension_for_ratio(7, 0.5), 4);
    }

    #[test]
    fn invalid_configs() {
        assert!(Dgp::new(DgpConfig { df: 2.0, ..DgpConfig::default() }).is_err());
        assert!(Dgp::new(DgpConfig { n: 7, ..DgpConfig::default() }).is_err());
        assert!(Dgp::new(DgpConfig { strata_probs: vec![0.5, 0.6], ..DgpConfig::default() }).is_err());
        let mut cfg = DgpConfig::default();
        cfg.randomization.block_size = 3;
        assert!(Dgp::new(cfg).is_err());
    }
}
