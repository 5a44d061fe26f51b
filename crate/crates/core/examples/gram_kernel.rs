//! Sample Gram matrices, pseudo-inverses, leave-one-out downdates and the
//! off-diagonal kernel sums behind the U-statistics.

use caradj::gram::{bilinear_offdiag_sum, rank_one_downdate, sample_gram, sample_gram_pair, squared_kernel_offdiag_sum};
use nalgebra::{DMatrix, DVector};

fn main() -> caradj::Result<()> {
    let x = DMatrix::from_row_slice(5, 2, &[1.0, 0.5, -0.3, 1.2, 0.8, -1.0, 0.1, 0.4, -1.5, 0.2]);
    let pair = sample_gram_pair(&x, 1e-10)?;
    println!("Gram {}inverse {}pseudo-inverse used: {}", pair.matrix, pair.inverse, pair.pseudo);

    // drop unit 0 without re-inverting
    let x0: DVector<f64> = x.row(0).transpose();
    let loo = rank_one_downdate(&pair.inverse, &x0, 1.0 / 5.0)?;
    println!("leave-unit-0-out inverse of (G - x0 x0'/5) {loo}");

    // a rank-deficient Gram: more covariates than units
    let wide = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
    let g = sample_gram(&wide)?;
    let wide_pair = caradj::gram::invert_or_pseudo(&g, 1e-10)?;
    println!("wide block: rank {} of 3, pseudo-inverse: {}", wide_pair.rank, wide_pair.pseudo);

    let w = DVector::from_vec(vec![0.5, -0.5, 0.5, -0.5, 0.5]);
    let v = DVector::from_vec(vec![3.0, 0.0, 1.0, 0.0, 2.0]);
    println!(
        "sum_(i!=j) w_i v_j x_i'Mx_j = {:.6}, squared kernel = {:.6}",
        bilinear_offdiag_sum(&x, &w, &v, &pair.inverse)?,
        squared_kernel_offdiag_sum(&x, &w, &v, &pair.inverse)?
    );
    Ok(())
}
