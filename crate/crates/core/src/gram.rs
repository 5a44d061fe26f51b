//! Gram matrices, their (pseudo-)inverses, Sherman-Morrison downdates and the
//! off-diagonal kernel sums every U-statistic in this crate is built from.
//!
//! The kernel sums avoid the naive `O(n^2 p^2)` double loop:
//!
//! * `sum_{i != j} w_i v_j x_i' M x_j` is `(X'w)' M (X'v)` minus the diagonal;
//! * `sum_{i != j} w_i v_j (x_i' M x_j)^2` is `tr(M B_v M' B_w)` minus the
//!   diagonal, with `B_w = X' diag(w) X`. When the block has fewer rows than
//!   columns the `n x n` matrix `X M X'` is cheaper and is used instead.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalue cutoff, relative to the largest eigenvalue.
pub const DEFAULT_RCOND: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-10;
const DOWNDATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GramMode {
    Sample,
    Oracle,
}

/// A Gram matrix together with the inverse actually used downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct GramPair {
    pub matrix: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub mode: GramMode,
    /// Set when the Moore-Penrose pseudo-inverse replaced the inverse.
    pub pseudo: bool,
    pub rcond: f64,
    pub rank: usize,
}

impl GramPair {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn with_mode(mut self, mode: GramMode) -> Self {
        self.mode = mode;
        self
    }
}

/// `(1/n_k) sum_i x_i x_i'` over the rows of `rows`.
pub fn sample_gram(rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = rows.nrows();
    if n == 0 {
        return Err(Error::Empty("no rows for Gram matrix".into()));
    }
    let mut g = rows.tr_mul(rows);
    g /= n as f64;
    // mirror the upper triangle so the result is exactly symmetric
    for j in 0..g.ncols() {
        for i in (j + 1)..g.nrows() {
            g[(i, j)] = g[(j, i)];
        }
    }
    Ok(g)
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Invert a symmetric PSD matrix through its eigendecomposition.
///
/// Eigenvalues at or below `rcond * lambda_max` are treated as zero; if any
/// is, the result is the Moore-Penrose pseudo-inverse and `pseudo` is set.
pub fn invert_or_pseudo(g: &DMatrix<f64>, rcond: f64) -> Result<GramPair> {
    if !g.is_square() {
        return Err(Error::Dimension(format!("Gram matrix is {}x{}", g.nrows(), g.ncols())));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if !(rcond >= 0.0 && rcond.is_finite()) {
        return Err(Error::InvalidParameter(format!("rcond must be finite and >= 0, got {rcond}")));
    }
    let p = g.nrows();
    if p == 0 {
        return Ok(GramPair {
            matrix: g.clone(),
            inverse: g.clone(),
            mode: GramMode::Sample,
            pseudo: false,
            rcond,
            rank: 0,
        });
    }
    let scale = max_abs(g);
    let asym = (g - g.transpose()).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Asymmetric(asym));
    }

    let eig = SymmetricEigen::new(g.clone());
    let lambda_max = eig.eigenvalues.max();
    let lambda_min = eig.eigenvalues.min();
    let cutoff = rcond * lambda_max;
    let pseudo = !(lambda_max > 0.0 && lambda_min > cutoff);

    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    let mut rank = 0;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let factor = if lambda > cutoff && lambda > 0.0 {
            rank += 1;
            1.0 / lambda
        } else {
            0.0
        };
        scaled.column_mut(j).scale_mut(factor);
    }
    let mut inverse = scaled * v.transpose();
    for j in 0..p {
        for i in (j + 1)..p {
            let s = 0.5 * (inverse[(i, j)] + inverse[(j, i)]);
            inverse[(i, j)] = s;
            inverse[(j, i)] = s;
        }
    }
    Ok(GramPair {
        matrix: g.clone(),
        inverse,
        mode: GramMode::Sample,
        pseudo,
        rcond,
        rank,
    })
}

/// Sample Gram of `rows` and its (pseudo-)inverse.
pub fn sample_gram_pair(rows: &DMatrix<f64>, rcond: f64) -> Result<GramPair> {
    if rows.ncols() == 0 {
        let empty = DMatrix::zeros(0, 0);
        return invert_or_pseudo(&empty, rcond);
    }
    invert_or_pseudo(&sample_gram(rows)?, rcond)
}

/// `(G - c u u')^{-1}` from `G^{-1}` by the Sherman-Morrison formula.
pub fn rank_one_downdate(g_inv: &DMatrix<f64>, u: &DVector<f64>, c: f64) -> Result<DMatrix<f64>> {
    if !g_inv.is_square() || g_inv.nrows() != u.len() {
        return Err(Error::Dimension(format!(
            "inverse is {}x{}, vector has length {}",
            g_inv.nrows(),
            g_inv.ncols(),
            u.len()
        )));
    }
    if c == 0.0 {
        return Ok(g_inv.clone());
    }
    let left = g_inv * u;
    let right = g_inv.tr_mul(u);
    let denom = 1.0 - c * u.dot(&left);
    if denom.abs() < DOWNDATE_TOL || !denom.is_finite() {
        return Err(Error::SingularDowndate(denom));
    }
    Ok(g_inv + (left * right.transpose()) * (c / denom))
}

fn check_dims(x: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != x.ncols() || m.ncols() != x.ncols() {
        return Err(Error::Dimension(format!(
            "kernel matrix is {}x{} for {} covariates",
            m.nrows(),
            m.ncols(),
            x.ncols()
        )));
    }
    Ok(())
}

fn check_weights(n: usize, w: &DVector<f64>, v: &DVector<f64>) -> Result<()> {
    if w.len() != n || v.len() != n {
        return Err(Error::Dimension(format!(
            "weights of length {} and {} for {} rows",
            w.len(),
            v.len(),
            n
        )));
    }
    Ok(())
}

/// Precomputed pieces for repeated kernel sums over one stratum block.
///
/// Holds `X M`, the diagonal `x_i' M x_i`, and (for wide blocks) the full
/// `n x n` kernel `X M X'`.
#[derive(Debug, Clone)]
pub struct Kernel<'a> {
    x: &'a DMatrix<f64>,
    m: &'a DMatrix<f64>,
    xm: DMatrix<f64>,
    diag: DVector<f64>,
    full: Option<DMatrix<f64>>,
}

impl<'a> Kernel<'a> {
    pub fn new(x: &'a DMatrix<f64>, m: &'a DMatrix<f64>) -> Result<Self> {
        check_dims(x, m)?;
        let n = x.nrows();
        let p = x.ncols();
        let xm = x * m;
        let diag = DVector::from_fn(n, |i, _| xm.row(i).dot(&x.row(i)));
        let full = (p > 0 && n <= p).then(|| &xm * x.transpose());
        Ok(Self { x, m, xm, diag, full })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// `x_i' M x_i` for every row.
    pub fn diagonal(&self) -> &DVector<f64> {
        &self.diag
    }

    /// `x_i' M x_j`
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.full {
            Some(h) => h[(i, j)],
            None => self.xm.row(i).dot(&self.x.row(j)),
        }
    }

    /// `sum_{i != j} w_i v_j x_i' M x_j`
    pub fn bilinear(&self, w: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        check_weights(self.n(), w, v)?;
        if self.x.ncols() == 0 {
            return Ok(0.0);
        }
        let sw = self.xm.tr_mul(w); // M' X' w
        let sv = self.x.tr_mul(v);
        let total = sw.dot(&sv);
        let diag: f64 = (0..self.n()).map(|i| w[i] * v[i] * self.diag[i]).sum();
        Ok(total - diag)
    }

    /// `sum_{i != j} w_i v_j (x_i' M x_j)^2`
    pub fn squared(&self, w: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        check_weights(self.n(), w, v)?;
        if self.x.ncols() == 0 {
            return Ok(0.0);
        }
        let diag: f64 = (0..self.n())
            .map(|i| w[i] * v[i] * self.diag[i] * self.diag[i])
            .sum();
        let total = match &self.full {
            Some(h) => {
                let hv = h.map(|e| e * e) * v;
                w.dot(&hv)
            }
            None => {
                let bw = weighted_gram(self.x, w);
                let bv = weighted_gram(self.x, v);
                let left = self.m * bv;
                let right = self.m.tr_mul(&bw);
                // tr(L R) = sum_ab L_ab R_ba
                left.component_mul(&right.transpose()).sum()
            }
        };
        Ok(total - diag)
    }
}

/// `X' diag(w) X`
fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = x.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= w[i];
    }
    x.tr_mul(&scaled)
}

/// `sum_{i != j} w_i v_j x_i' M x_j`
pub fn bilinear_offdiag_sum(
    x: &DMatrix<f64>,
    w: &DVector<f64>,
    v: &DVector<f64>,
    m: &DMatrix<f64>,
) -> Result<f64> {
    Kernel::new(x, m)?.bilinear(w, v)
}

/// `sum_{i != j} w_i v_j (x_i' M x_j)^2`
pub fn squared_kernel_offdiag_sum(
    x: &DMatrix<f64>,
    w: &DVector<f64>,
    v: &DVector<f64>,
    m: &DMatrix<f64>,
) -> Result<f64> {
    Kernel::new(x, m)?.squared(w, v)
}
