//! Domain types, the observation projections, soft thresholding and the loss.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Default relative tolerance for the numerical rank of a basis.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Set of observed coordinates `Ω` of an `n`-dimensional frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationMask {
    ambient_dim: usize,
    indices: Vec<usize>,
}

impl ObservationMask {
    /// Indices must be strictly increasing and below `ambient_dim`.
    pub fn new(ambient_dim: usize, indices: Vec<usize>) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(Error::invalid("ambient dimension must be positive"));
        }
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::invalid(format!(
                    "mask indices must be strictly increasing ({} followed by {})",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= ambient_dim {
                return Err(Error::invalid(format!(
                    "mask index {last} out of range for dimension {ambient_dim}"
                )));
            }
        }
        Ok(ObservationMask {
            ambient_dim,
            indices,
        })
    }

    /// Sorts and deduplicates before validating.
    pub fn from_unsorted(ambient_dim: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(ambient_dim, indices)
    }

    pub fn full(ambient_dim: usize) -> Self {
        ObservationMask {
            ambient_dim,
            indices: (0..ambient_dim).collect(),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.indices.len() == self.ambient_dim
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// Indicator vector: `true` on observed coordinates.
    pub fn indicator(&self) -> Vec<bool> {
        let mut out = vec![false; self.ambient_dim];
        for &i in &self.indices {
            out[i] = true;
        }
        out
    }

    /// Indices of `Ω^c` in increasing order.
    pub fn complement(&self) -> Vec<usize> {
        let ind = self.indicator();
        (0..self.ambient_dim).filter(|&i| !ind[i]).collect()
    }
}

/// One measurement vector with its mask, stored dense with zeros off the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    values: DVector<f64>,
    mask: ObservationMask,
}

impl Frame {
    /// Entries of `values` outside the mask are zeroed.
    pub fn new(values: DVector<f64>, mask: ObservationMask) -> Result<Self> {
        let values = project_mask(&values, &mask)?;
        Ok(Frame { values, mask })
    }

    /// Builds a frame from the observed entries only, in mask order.
    pub fn from_observed(mask: ObservationMask, observed: &[f64]) -> Result<Self> {
        Error::check_dim("observed values vs. mask size", mask.len(), observed.len())?;
        let mut values = DVector::zeros(mask.ambient_dim());
        for (&i, &v) in mask.indices().iter().zip(observed) {
            values[i] = v;
        }
        Ok(Frame { values, mask })
    }

    pub fn fully_observed(values: DVector<f64>) -> Self {
        let mask = ObservationMask::full(values.len());
        Frame { values, mask }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn mask(&self) -> &ObservationMask {
        &self.mask
    }

    pub fn ambient_dim(&self) -> usize {
        self.mask.ambient_dim()
    }

    /// Observed values in mask order.
    pub fn observed(&self) -> Vec<f64> {
        self.mask.indices().iter().map(|&i| self.values[i]).collect()
    }
}

/// An `n×r` matrix whose columns span the tracked subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis(DMatrix<f64>);

impl SubspaceBasis {
    /// Validates the numerical rank with [`DEFAULT_RANK_TOL`].
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        Self::with_rank_tol(matrix, DEFAULT_RANK_TOL)
    }

    pub fn with_rank_tol(matrix: DMatrix<f64>, rank_tol: f64) -> Result<Self> {
        if matrix.ncols() == 0 || matrix.nrows() < matrix.ncols() {
            return Err(Error::invalid(format!(
                "basis must be tall with at least one column, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let basis = SubspaceBasis(matrix);
        basis.check_rank(rank_tol)?;
        Ok(basis)
    }

    /// Wraps a matrix without checking its rank. Used for intermediate
    /// iterates whose rank is reported as a diagnostic instead of an error.
    pub fn from_matrix_unchecked(matrix: DMatrix<f64>) -> Self {
        SubspaceBasis(matrix)
    }

    pub fn check_rank(&self, rank_tol: f64) -> Result<()> {
        let (_, r) = linalg::thin_qr(&self.0);
        linalg::check_rank(&linalg::singular_values_desc(&r), rank_tol)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn ambient_dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn rank(&self) -> usize {
        self.0.ncols()
    }
}

impl AsRef<DMatrix<f64>> for SubspaceBasis {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Output of the per-frame fit: coefficients `a`, outliers `s`, completion `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coeffs: DVector<f64>,
    pub outliers: DVector<f64>,
    pub completion: DVector<f64>,
    pub iterations: usize,
    pub final_loss: f64,
}

impl FitResult {
    pub fn zeros(n: usize, r: usize) -> Self {
        FitResult {
            coeffs: DVector::zeros(r),
            outliers: DVector::zeros(n),
            completion: DVector::zeros(n),
            iterations: 0,
            final_loss: 0.0,
        }
    }

    /// `b − (U a + s + e)`.
    pub fn residual(&self, u: &SubspaceBasis, b: &Frame) -> Result<DVector<f64>> {
        check_fit_dims(u, self, b)?;
        Ok(b.values() - (u.matrix() * &self.coeffs + &self.outliers + &self.completion))
    }

    pub fn outlier_nnz(&self) -> usize {
        self.outliers.iter().filter(|v| **v != 0.0).count()
    }
}

/// Which form of the step-size sigmoid to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmoidMode {
    /// `−f + 2f / (1 + exp(−slope·x))`: odd, increasing, range `(−f, f)`.
    #[default]
    Default,
    /// `f + 2f / (1 + exp(slope·x))`: always positive, decreasing.
    #[serde(rename = "paper-literal")]
    Literal,
}

impl std::str::FromStr for SigmoidMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(SigmoidMode::Default),
            "paper-literal" => Ok(SigmoidMode::Literal),
            other => Err(Error::invalid(format!(
                "unknown sigmoid mode {other:?} (expected \"default\" or \"paper-literal\")"
            ))),
        }
    }
}

/// Tuning knobs of the tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// ℓ1 weight on the outliers; `None` resolves to `1/√n`.
    pub lambda: Option<f64>,
    #[serde(rename = "C")]
    pub c: f64,
    pub eta_max: f64,
    /// Lower clamp of `η`; `None` means `C`.
    pub eta_min: Option<f64>,
    pub f: f64,
    pub sigmoid_slope: f64,
    pub sigmoid: SigmoidMode,
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    /// Re-orthonormalize the basis every this many frames (0 = never).
    pub reorthonormalize_every: usize,
    pub rank_tol: f64,
    /// Start the inner solve from the previous frame's fit.
    pub warm_start: bool,
    /// Skip frames whose basis is rank deficient instead of failing.
    pub skip_on_rank_fail: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda: None,
            c: 1.0,
            eta_max: 16.0,
            eta_min: None,
            f: 1.0,
            sigmoid_slope: 10.0,
            sigmoid: SigmoidMode::Default,
            inner_tol: 1e-6,
            inner_max_iters: 100,
            reorthonormalize_every: 0,
            rank_tol: DEFAULT_RANK_TOL,
            warm_start: false,
            skip_on_rank_fail: false,
        }
    }
}

impl Hyperparams {
    pub fn default_lambda(n: usize) -> f64 {
        1.0 / (n as f64).sqrt()
    }

    /// `λ` for ambient dimension `n`.
    pub fn lambda_for(&self, n: usize) -> f64 {
        self.lambda.unwrap_or_else(|| Self::default_lambda(n))
    }

    pub fn eta_min(&self) -> f64 {
        self.eta_min.unwrap_or(self.c)
    }

    /// Copy with `lambda` and `eta_min` filled in.
    pub fn resolved(&self, n: usize) -> Hyperparams {
        Hyperparams {
            lambda: Some(self.lambda_for(n)),
            eta_min: Some(self.eta_min()),
            ..self.clone()
        }
    }

    /// Admissible range of `μ`: `[C/(1+η_max), C/(1+η_min)]`.
    pub fn mu_bounds(&self) -> (f64, f64) {
        (self.c / (1.0 + self.eta_max), self.c / (1.0 + self.eta_min()))
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
            }
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0) {
                return Err(Error::invalid(format!("lambda must be non-negative, got {l}")));
            }
        }
        positive("C", self.c)?;
        positive("f", self.f)?;
        positive("sigmoid_slope", self.sigmoid_slope)?;
        positive("inner_tol", self.inner_tol)?;
        positive("rank_tol", self.rank_tol)?;
        let eta_min = self.eta_min();
        if !eta_min.is_finite() {
            return Err(Error::invalid(format!("eta_min must be finite, got {eta_min}")));
        }
        if !(self.eta_max > eta_min) || !self.eta_max.is_finite() {
            return Err(Error::invalid(format!(
                "eta_max ({}) must exceed the lower clamp ({eta_min})",
                self.eta_max
            )));
        }
        if self.eta_min.is_some() && eta_min <= -1.0 {
            return Err(Error::invalid(format!("eta_min must exceed -1, got {eta_min}")));
        }
        if self.inner_max_iters == 0 {
            return Err(Error::invalid("inner_max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// `Ω(v)`: keeps observed coordinates, zeroes the rest.
pub fn project_mask(v: &DVector<f64>, mask: &ObservationMask) -> Result<DVector<f64>> {
    Error::check_dim("project_mask", mask.ambient_dim(), v.len())?;
    let mut out = DVector::zeros(v.len());
    for &i in mask.indices() {
        out[i] = v[i];
    }
    Ok(out)
}

/// `Ω^c(v) = v − Ω(v)`.
pub fn project_complement(v: &DVector<f64>, mask: &ObservationMask) -> Result<DVector<f64>> {
    Error::check_dim("project_complement", mask.ambient_dim(), v.len())?;
    let mut out = v.clone();
    for &i in mask.indices() {
        out[i] = 0.0;
    }
    Ok(out)
}

/// Element-wise `sign(v)·max(|v| − τ, 0)`.
pub fn soft_threshold(v: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::invalid(format!("threshold must be non-negative, got {tau}")));
    }
    Ok(v.map(|x| shrink(x, tau)))
}

#[inline]
pub(crate) fn shrink(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// `(μ/2)·‖b − (U a + s + e)‖² + λ‖s‖₁`.
pub fn loss_value(
    u: &SubspaceBasis,
    fit: &FitResult,
    b: &Frame,
    mu: f64,
    lambda: f64,
) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::invalid(format!("mu must be positive, got {mu}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be non-negative, got {lambda}")));
    }
    let residual = fit.residual(u, b)?;
    Ok(0.5 * mu * residual.norm_squared() + lambda * fit.outliers.lp_norm(1))
}

pub(crate) fn check_fit_dims(u: &SubspaceBasis, fit: &FitResult, b: &Frame) -> Result<()> {
    let n = u.ambient_dim();
    Error::check_dim("frame length vs. basis rows", n, b.ambient_dim())?;
    Error::check_dim("coefficients vs. basis columns", u.rank(), fit.coeffs.len())?;
    Error::check_dim("outliers vs. basis rows", n, fit.outliers.len())?;
    Error::check_dim("completion vs. basis rows", n, fit.completion.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn mask(n: usize, idx: &[usize]) -> ObservationMask {
        ObservationMask::new(n, idx.to_vec()).unwrap()
    }

    #[test]
    fn mask_rejects_bad_indices() {
        assert!(ObservationMask::new(3, vec![0, 3]).is_err());
        assert!(ObservationMask::new(3, vec![1, 1]).is_err());
        assert!(ObservationMask::new(3, vec![2, 1]).is_err());
        assert!(ObservationMask::new(0, vec![]).is_err());
        let m = ObservationMask::from_unsorted(4, vec![3, 1, 3]).unwrap();
        assert_eq!(m.indices(), &[1, 3]);
        assert_eq!(m.complement(), vec![0, 2]);
    }

    #[test]
    fn projections_match_examples() {
        let v = dvector![1.0, 2.0, 3.0];
        assert_eq!(project_mask(&v, &mask(3, &[0, 2])).unwrap(), dvector![1.0, 0.0, 3.0]);
        assert_eq!(project_mask(&v, &mask(3, &[0, 1, 2])).unwrap(), v);
        assert_eq!(
            project_mask(&dvector![5.0, -7.0], &mask(2, &[])).unwrap(),
            dvector![0.0, 0.0]
        );
        assert_eq!(
            project_complement(&v, &mask(3, &[0, 2])).unwrap(),
            dvector![0.0, 2.0, 0.0]
        );
        assert_eq!(
            project_complement(&v, &mask(3, &[0, 1, 2])).unwrap(),
            dvector![0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn projections_reject_dimension_mismatch() {
        let v = dvector![1.0, 2.0];
        let m = mask(3, &[0]);
        assert!(matches!(project_mask(&v, &m), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(project_complement(&v, &m), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(
            soft_threshold(&dvector![2.0, -0.5, -3.0], 1.0).unwrap(),
            dvector![1.0, 0.0, -2.0]
        );
        let v = dvector![0.3, -4.0, 0.0];
        assert_eq!(soft_threshold(&v, 0.0).unwrap(), v);
        assert_eq!(soft_threshold(&dvector![0.9, -0.9], 1.0).unwrap(), dvector![0.0, 0.0]);
        assert!(soft_threshold(&v, -0.1).is_err());
        assert!(soft_threshold(&v, f64::NAN).is_err());
    }

    #[test]
    fn frame_zero_fills_unobserved() {
        let f = Frame::new(dvector![1.0, 2.0, 3.0], mask(3, &[1])).unwrap();
        assert_eq!(f.values(), &dvector![0.0, 2.0, 0.0]);
        assert_eq!(f.observed(), vec![2.0]);
        let g = Frame::from_observed(mask(3, &[0, 2]), &[4.0, 5.0]).unwrap();
        assert_eq!(g.values(), &dvector![4.0, 0.0, 5.0]);
        assert!(Frame::from_observed(mask(3, &[0, 2]), &[4.0]).is_err());
    }

    #[test]
    fn basis_rank_check() {
        let good = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(SubspaceBasis::new(good).is_ok());
        let bad = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        match SubspaceBasis::new(bad) {
            Err(Error::RankDeficient { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        assert!(SubspaceBasis::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn loss_examples() {
        let u = SubspaceBasis::new(DMatrix::from_row_slice(
            3,
            1,
            &[1.0, 0.0, 0.0],
        ))
        .unwrap();
        // exact fit with s = [0, 1, 0]
        let b = Frame::fully_observed(dvector![2.0, 1.0, 0.0]);
        let fit = FitResult {
            coeffs: dvector![2.0],
            outliers: dvector![0.0, 1.0, 0.0],
            completion: DVector::zeros(3),
            iterations: 1,
            final_loss: 0.0,
        };
        assert_eq!(loss_value(&u, &fit, &b, 1.0, 1.0).unwrap(), 1.0);

        let zero = FitResult::zeros(3, 1);
        let b = Frame::fully_observed(dvector![1.0, -2.0, 0.5]);
        let l = loss_value(&u, &zero, &b, 2.0, 3.0).unwrap();
        assert!((l - b.values().norm_squared()).abs() < 1e-15);
        assert!(loss_value(&u, &zero, &b, 0.0, 1.0).is_err());
    }

    #[test]
    fn hyperparams_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        let p = Hyperparams {
            eta_max: 1.0,
            ..Hyperparams::default()
        };
        assert!(p.validate().is_err());
        let p = Hyperparams {
            inner_max_iters: 0,
            ..Hyperparams::default()
        };
        assert!(p.validate().is_err());
        let p = Hyperparams::default().resolved(100);
        assert_eq!(p.lambda, Some(0.1));
        assert_eq!(p.eta_min, Some(1.0));
        let (lo, hi) = p.mu_bounds();
        assert_eq!((lo, hi), (1.0 / 17.0, 0.5));
    }

    #[test]
    fn hyperparams_json_uses_capital_c() {
        let p: Hyperparams = serde_json::from_str(r#"{"C": 2.0, "sigmoid": "paper-literal"}"#).unwrap();
        assert_eq!(p.c, 2.0);
        assert_eq!(p.sigmoid, SigmoidMode::Literal);
        assert!(serde_json::from_str::<Hyperparams>(r#"{"bogus": 1}"#).is_err());
    }
}
