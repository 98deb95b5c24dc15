//! Descent direction, additive basis update and the adaptive step size.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{FitResult, Frame, Hyperparams, SigmoidMode, SubspaceBasis};

/// Adaptive step-size controller state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSizeState {
    /// Current `μ`; the basis moves by `D/μ`.
    pub mu: f64,
    pub eta: f64,
    /// Descent direction of the previous frame.
    pub prev_direction: Option<DMatrix<f64>>,
}

impl StepSizeState {
    /// `η₀ = η_min` (which defaults to `C`) and `μ₀ = C/(1+η₀)`.
    pub fn initial(params: &Hyperparams) -> Self {
        let eta = params.eta_min();
        StepSizeState {
            mu: params.c / (1.0 + eta),
            eta,
            prev_direction: None,
        }
    }

    /// Whether `η` and `μ` lie in their admissible ranges.
    pub fn is_within_bounds(&self, params: &Hyperparams) -> bool {
        let (lo, hi) = params.mu_bounds();
        let tol = 1e-12 * hi.abs().max(1.0);
        self.eta >= params.eta_min()
            && self.eta <= params.eta_max
            && self.mu >= lo - tol
            && self.mu <= hi + tol
    }
}

/// `D = (b − (U a + s + e))·aᵀ / (1 + aᵀa)`.
///
/// This is `residual·aᵀ(I + aaᵀ)⁻¹` with the inverse collapsed by
/// Sherman–Morrison.
pub fn descent_direction(u: &SubspaceBasis, fit: &FitResult, b: &Frame) -> Result<DMatrix<f64>> {
    let residual = fit.residual(u, b)?;
    let a = &fit.coeffs;
    let scale = 1.0 / (1.0 + a.norm_squared());
    Ok((residual * a.transpose()) * scale)
}

/// `U + D/μ`, the minimizer of the quadratic surrogate of the loss around `U`.
///
/// The result is not rank checked; see [`SubspaceBasis::check_rank`].
pub fn apply_update(u: &SubspaceBasis, direction: &DMatrix<f64>, mu: f64) -> Result<SubspaceBasis> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::invalid(format!("mu must be positive and finite, got {mu}")));
    }
    Error::check_dim("direction rows", u.ambient_dim(), direction.nrows())?;
    Error::check_dim("direction columns", u.rank(), direction.ncols())?;
    Ok(SubspaceBasis::from_matrix_unchecked(
        u.matrix() + direction / mu,
    ))
}

/// Step-size sigmoid. The exponent argument is clamped so large `|x|`
/// saturates instead of overflowing.
pub fn sigmoid(x: f64, f: f64, slope: f64, mode: SigmoidMode) -> f64 {
    const MAX_EXP: f64 = 700.0;
    match mode {
        SigmoidMode::Default => {
            let z = (-slope * x).clamp(-MAX_EXP, MAX_EXP);
            -f + 2.0 * f / (1.0 + z.exp())
        }
        SigmoidMode::Literal => {
            let z = (slope * x).clamp(-MAX_EXP, MAX_EXP);
            f + 2.0 * f / (1.0 + z.exp())
        }
    }
}

/// Advances `η` by the sigmoid of the cosine between the previous and the new
/// direction, clamps it to `[η_min, η_max]` and recomputes `μ = C/(1+η)`.
///
/// Without a previous direction, or when either direction is zero, the
/// increment is 0.
pub fn update_step_size(
    state: StepSizeState,
    direction: DMatrix<f64>,
    params: &Hyperparams,
) -> StepSizeState {
    let increment = match &state.prev_direction {
        Some(prev) if prev.shape() == direction.shape() => {
            let denom = prev.norm() * direction.norm();
            if denom > 0.0 && denom.is_finite() {
                let cosine = (linalg::frobenius_inner(prev, &direction) / denom).clamp(-1.0, 1.0);
                sigmoid(cosine, params.f, params.sigmoid_slope, params.sigmoid)
            } else {
                0.0
            }
        }
        _ => 0.0,
    };
    let eta = (state.eta + increment).max(params.eta_min()).min(params.eta_max);
    StepSizeState {
        mu: params.c / (1.0 + eta),
        eta,
        prev_direction: Some(direction),
    }
}

/// Orthonormal basis of the same column span (thin QR).
pub fn reorthonormalize(u: &SubspaceBasis, rank_tol: f64) -> Result<SubspaceBasis> {
    let (q, r) = linalg::thin_qr(u.matrix());
    linalg::check_rank(&linalg::singular_values_desc(&r), rank_tol)?;
    Ok(SubspaceBasis::from_matrix_unchecked(q))
}
