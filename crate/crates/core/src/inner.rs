//! Per-frame LASSO fit of coefficients, sparse outliers and completion.
//!
//! With the basis `U` held fixed, each iteration performs three exact block
//! updates in order:
//!
//! ```text
//! a ← U†(b − s − e)
//! e ← −Ω^c(U a)
//! s ← S_λ(b − U a − e)
//! ```
//!
//! starting from `s = 0`, `e = 0` (or from a previous fit when warm starting).
//! The loss weight on the misfit is 1, so the threshold is exactly `λ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{shrink, FitResult, Frame, Hyperparams, SubspaceBasis};

/// Diagnostics of one inner solve.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolveReport {
    pub iterations: usize,
    /// Loss after each iteration, starting with iteration 1.
    pub loss_trace: Vec<f64>,
    pub converged: bool,
}

/// Reusable least-squares operator `v ↦ argmin_a ‖U a − v‖₂` backed by a thin
/// QR factorization of `U`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl LeastSquares {
    pub fn new(u: &SubspaceBasis, rank_tol: f64) -> Result<Self> {
        let (q, r) = linalg::thin_qr(u.matrix());
        linalg::check_rank(&linalg::singular_values_desc(&r), rank_tol)?;
        Ok(LeastSquares { q, r })
    }

    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let y = self.q.tr_mul(v);
        linalg::back_substitute(&self.r, &y)
    }
}

/// `U† v` for a full-column-rank `U`.
pub fn least_squares_apply(u: &SubspaceBasis, v: &DVector<f64>) -> Result<DVector<f64>> {
    Error::check_dim("least_squares_apply", u.ambient_dim(), v.len())?;
    Ok(LeastSquares::new(u, crate::model::DEFAULT_RANK_TOL)?.solve(v))
}

/// Cold-started fit (`s⁰ = 0`, `e⁰ = 0`).
pub fn solve_fit(
    u: &SubspaceBasis,
    b: &Frame,
    params: &Hyperparams,
) -> Result<(FitResult, InnerSolveReport)> {
    let n = u.ambient_dim();
    let r = u.rank();
    let start = FitResult::zeros(n, r);
    solve_from(u, b, params, &start)
}

/// Fit started from `warm`'s outliers, completion and coefficients.
pub fn solve_fit_warm(
    u: &SubspaceBasis,
    b: &Frame,
    params: &Hyperparams,
    warm: &FitResult,
) -> Result<(FitResult, InnerSolveReport)> {
    solve_from(u, b, params, warm)
}

fn solve_from(
    u: &SubspaceBasis,
    b: &Frame,
    params: &Hyperparams,
    start: &FitResult,
) -> Result<(FitResult, InnerSolveReport)> {
    let n = u.ambient_dim();
    Error::check_dim("frame length vs. basis rows", n, b.ambient_dim())?;
    Error::check_dim("warm coefficients", u.rank(), start.coeffs.len())?;
    Error::check_dim("warm outliers", n, start.outliers.len())?;
    Error::check_dim("warm completion", n, start.completion.len())?;
    if params.inner_max_iters == 0 {
        return Err(Error::invalid("inner_max_iters must be at least 1"));
    }
    let lambda = params.lambda_for(n);
    let ls = LeastSquares::new(u, params.rank_tol)?;
    let observed = b.mask().indicator();
    let bv = b.values();

    let mut a = start.coeffs.clone();
    let mut s = start.outliers.clone();
    let mut e = start.completion.clone();
    let mut loss_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.inner_max_iters {
        iterations += 1;
        let a_next = ls.solve(&(bv - &s - &e));
        let ua = u.matrix() * &a_next;

        let mut e_next = DVector::zeros(n);
        let mut s_next = DVector::zeros(n);
        let mut misfit = 0.0;
        let mut l1 = 0.0;
        for i in 0..n {
            if !observed[i] {
                e_next[i] = -ua[i];
            }
            let x = (bv[i] - ua[i]) - e_next[i];
            let si = shrink(x, lambda);
            s_next[i] = si;
            let ri = x - si;
            misfit += ri * ri;
            l1 += si.abs();
        }
        loss_trace.push(0.5 * misfit + lambda * l1);

        let da = (&a_next - &a).norm() / a.norm().max(1.0);
        let ds = (&s_next - &s).norm() / s.norm().max(1.0);
        a = a_next;
        s = s_next;
        e = e_next;
        if da < params.inner_tol && ds < params.inner_tol {
            converged = true;
            break;
        }
    }

    let final_loss = *loss_trace.last().expect("at least one iteration");
    Ok((
        FitResult {
            coeffs: a,
            outliers: s,
            completion: e,
            iterations,
            final_loss,
        },
        InnerSolveReport {
            iterations,
            loss_trace,
            converged,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{loss_value, ObservationMask};
    use nalgebra::dvector;

    fn basis_2d() -> SubspaceBasis {
        // orthonormal 4×2
        let s = std::f64::consts::FRAC_1_SQRT_2;
        SubspaceBasis::new(DMatrix::from_row_slice(
            4,
            2,
            &[s, 0.0, s, 0.0, 0.0, s, 0.0, -s],
        ))
        .unwrap()
    }

    #[test]
    fn least_squares_consistent_and_orthogonal() {
        let u = basis_2d();
        let v = u.matrix() * dvector![1.0, 2.0];
        let a = least_squares_apply(&u, &v).unwrap();
        assert!((a - dvector![1.0, 2.0]).norm() < 1e-14);

        let perp = dvector![1.0, -1.0, 1.0, 1.0];
        let a = least_squares_apply(&u, &perp).unwrap();
        assert!(a.norm() < 1e-14);
    }

    #[test]
    fn least_squares_reports_rank_deficiency() {
        let u = SubspaceBasis::from_matrix_unchecked(DMatrix::from_row_slice(
            3,
            2,
            &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0],
        ));
        let err = least_squares_apply(&u, &dvector![1.0, 1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { index: 1, .. }));
        assert!(err.to_string().contains("singular value #1"));
    }

    #[test]
    fn exact_frame_with_large_lambda() {
        let u = basis_2d();
        let b = Frame::fully_observed(u.matrix() * dvector![1.0, -2.0]);
        let params = Hyperparams {
            lambda: Some(10.0),
            inner_max_iters: 1,
            ..Hyperparams::default()
        };
        let (fit, _) = solve_fit(&u, &b, &params).unwrap();
        assert!((&fit.coeffs - dvector![1.0, -2.0]).norm() < 1e-14);
        assert_eq!(fit.outlier_nnz(), 0);
        assert_eq!(fit.completion.norm(), 0.0);

        // the convergence test needs a second iterate to confirm
        let params = Hyperparams {
            lambda: Some(10.0),
            ..Hyperparams::default()
        };
        let (fit, report) = solve_fit(&u, &b, &params).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 2);
        assert!((&fit.coeffs - dvector![1.0, -2.0]).norm() < 1e-14);
    }

    #[test]
    fn zero_frame_converges_immediately() {
        let u = basis_2d();
        let mask = ObservationMask::new(4, vec![0, 3]).unwrap();
        let b = Frame::new(DVector::zeros(4), mask).unwrap();
        let (fit, report) = solve_fit(&u, &b, &Hyperparams::default()).unwrap();
        assert_eq!(report.iterations, 1);
        assert!(report.converged);
        assert_eq!(fit.coeffs.norm(), 0.0);
        assert_eq!(fit.outliers.norm(), 0.0);
        assert_eq!(fit.completion.norm(), 0.0);
    }

    #[test]
    fn supports_and_completion_constraint() {
        let u = basis_2d();
        let mask = ObservationMask::new(4, vec![0, 1, 3]).unwrap();
        let b = Frame::new(dvector![1.0, 3.0, 0.0, -0.5], mask.clone()).unwrap();
        let params = Hyperparams {
            lambda: Some(0.2),
            ..Hyperparams::default()
        };
        let (fit, report) = solve_fit(&u, &b, &params).unwrap();
        let ua = u.matrix() * &fit.coeffs;
        assert_eq!(fit.completion[2], -ua[2]);
        assert_eq!(fit.outliers[2], 0.0);
        for &i in mask.indices() {
            assert_eq!(fit.completion[i], 0.0);
        }
        let direct = loss_value(&u, &fit, &b, 1.0, 0.2).unwrap();
        assert!((direct - fit.final_loss).abs() < 1e-12);
        assert_eq!(report.loss_trace.len(), report.iterations);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let u = basis_2d();
        let b = Frame::fully_observed(dvector![1.0, 2.0, 3.0]);
        assert!(matches!(
            solve_fit(&u, &b, &Hyperparams::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
