//! Small dense helpers shared by the solver, the update and the metrics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values sorted in decreasing order.
pub fn singular_values_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Fails with [`Error::RankDeficient`] when the smallest singular value is not
/// strictly above `rank_tol` times the largest.
pub fn check_rank(singular_values_desc: &[f64], rank_tol: f64) -> Result<()> {
    let largest = singular_values_desc.first().copied().unwrap_or(0.0);
    let threshold = rank_tol * largest;
    for (index, &value) in singular_values_desc.iter().enumerate() {
        if !(value > threshold) || !value.is_finite() {
            return Err(Error::RankDeficient {
                index,
                value,
                largest,
                threshold,
            });
        }
    }
    if largest == 0.0 {
        return Err(Error::RankDeficient {
            index: 0,
            value: 0.0,
            largest,
            threshold,
        });
    }
    Ok(())
}

/// Thin QR factorization `m = Q R` of a tall matrix, `Q` is `n×r` with
/// orthonormal columns and `R` is `r×r` upper triangular.
pub fn thin_qr(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.clone().qr();
    (qr.q(), qr.r())
}

/// Solves `R x = y` for upper-triangular `R` by back substitution.
pub fn back_substitute(r: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let k = r.ncols();
    let mut x = DVector::zeros(k);
    for i in (0..k).rev() {
        let mut acc = y[i];
        for j in (i + 1)..k {
            acc -= r[(i, j)] * x[j];
        }
        x[i] = acc / r[(i, i)];
    }
    x
}

/// Orthogonal projector `Q Qᵀ` onto the column span of `m`.
pub fn projector(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (q, _) = thin_qr(m);
    &q * q.transpose()
}

pub fn frobenius_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Orthonormalized `n×r` matrix of i.i.d. standard Gaussians.
pub fn random_orthonormal<R: rand::Rng + ?Sized>(n: usize, r: usize, rng: &mut R) -> DMatrix<f64> {
    let g = gaussian_matrix(n, r, rng);
    thin_qr(&g).0
}

/// `n×r` matrix of i.i.d. standard Gaussians, filled column by column.
pub fn gaussian_matrix<R: rand::Rng + ?Sized>(n: usize, r: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

pub fn gaussian_vector<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}
