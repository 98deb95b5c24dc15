//! Per-frame tracking loop and the batch robust matrix completion mode.
//!
//! Each frame runs, in order: the inner fit against `U_{t−1}`, the descent
//! direction, the basis update with the step size held before the frame, the
//! step-size refresh from the new direction, and the optional periodic
//! re-orthonormalization.

use std::borrow::Borrow;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::inner::{solve_fit, solve_fit_warm};
use crate::linalg;
use crate::model::{FitResult, Frame, Hyperparams, SubspaceBasis};
use crate::update::{apply_update, descent_direction, reorthonormalize, update_step_size, StepSizeState};

/// Diagnostics for one processed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTrace {
    pub frame_index: usize,
    pub fit: FitResult,
    /// Step size applied to this frame's update (`μ_{t−1}`).
    pub mu_used: f64,
    /// `η_t` after the step-size refresh.
    pub eta: f64,
    pub inner_iterations: usize,
    pub converged: bool,
    /// `‖b − (U a + s + e)‖₂` against the pre-update basis.
    pub residual_norm: f64,
    /// The basis was rank deficient and the frame left the state untouched.
    pub skipped: bool,
    /// The updated basis failed the rank check.
    pub rank_degraded: bool,
}

/// State of one tracked stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    basis: SubspaceBasis,
    step: StepSizeState,
    frame_index: usize,
    params: Hyperparams,
    last_fit: Option<FitResult>,
}

const INIT_STREAM: u64 = 1;

impl TrackerState {
    /// Random orthonormal `U₀` drawn from a generator seeded with `seed`, and
    /// the default step-size state. The draw uses its own ChaCha stream, so a
    /// tracker never starts on the basis `synth::generate` builds from the
    /// same seed.
    pub fn init(n: usize, r: usize, params: &Hyperparams, seed: u64) -> Result<Self> {
        if r < 1 || r >= n {
            return Err(Error::invalid(format!(
                "rank must satisfy 1 <= r < n, got r={r}, n={n}"
            )));
        }
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INIT_STREAM);
        let u0 = linalg::random_orthonormal(n, r, &mut rng);
        Self::with_basis(SubspaceBasis::new(u0)?, params)
    }

    /// Starts from a caller-supplied basis.
    pub fn with_basis(basis: SubspaceBasis, params: &Hyperparams) -> Result<Self> {
        params.validate()?;
        let params = params.resolved(basis.ambient_dim());
        Ok(TrackerState {
            step: StepSizeState::initial(&params),
            basis,
            frame_index: 0,
            params,
            last_fit: None,
        })
    }

    pub fn basis(&self) -> &SubspaceBasis {
        &self.basis
    }

    pub fn step(&self) -> &StepSizeState {
        &self.step
    }

    /// Number of frames consumed so far.
    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    /// Hyperparameters with `λ` and `η_min` resolved.
    pub fn params(&self) -> &Hyperparams {
        &self.params
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.ambient_dim()
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    /// Advances the state by one frame. On error the state is left unchanged.
    pub fn process_frame(&mut self, b: &Frame) -> Result<FrameTrace> {
        Error::check_dim("frame length vs. tracker dimension", self.ambient_dim(), b.ambient_dim())?;
        let t = self.frame_index;

        let solved = match (&self.last_fit, self.params.warm_start) {
            (Some(prev), true) => solve_fit_warm(&self.basis, b, &self.params, prev),
            _ => solve_fit(&self.basis, b, &self.params),
        };
        let (fit, report) = match solved {
            Ok(ok) => ok,
            Err(err @ Error::RankDeficient { .. }) if self.params.skip_on_rank_fail => {
                warn!("frame {t}: skipped, {err}");
                self.frame_index += 1;
                let fit = FitResult::zeros(self.ambient_dim(), self.rank());
                return Ok(FrameTrace {
                    frame_index: t,
                    residual_norm: b.values().norm(),
                    fit,
                    mu_used: self.step.mu,
                    eta: self.step.eta,
                    inner_iterations: 0,
                    converged: false,
                    skipped: true,
                    rank_degraded: true,
                });
            }
            Err(err) => return Err(err),
        };

        let direction = descent_direction(&self.basis, &fit, b)?;
        let residual_norm = fit.residual(&self.basis, b)?.norm();
        let mu_used = self.step.mu;
        let mut basis = apply_update(&self.basis, &direction, mu_used)?;
        let every = self.params.reorthonormalize_every;
        if every > 0 && (t + 1).is_multiple_of(every) {
            basis = reorthonormalize(&basis, self.params.rank_tol)?;
        }
        let rank_degraded = basis.check_rank(self.params.rank_tol).is_err();
        if rank_degraded {
            warn!("frame {t}: updated basis failed the rank check");
        }

        let step = std::mem::replace(&mut self.step, StepSizeState::initial(&self.params));
        self.step = update_step_size(step, direction, &self.params);
        self.basis = basis;
        self.frame_index += 1;
        if self.params.warm_start {
            self.last_fit = Some(fit.clone());
        }
        debug_assert!(self.step.is_within_bounds(&self.params));
        debug_assert!(self.basis.matrix().iter().all(|v| v.is_finite()));

        Ok(FrameTrace {
            frame_index: t,
            inner_iterations: report.iterations,
            converged: report.converged,
            fit,
            mu_used,
            eta: self.step.eta,
            residual_norm,
            skipped: false,
            rank_degraded,
        })
    }

    /// Processes frames in order, returning one trace per frame.
    pub fn run_stream<I>(&mut self, frames: I) -> Result<Vec<FrameTrace>>
    where
        I: IntoIterator,
        I::Item: Borrow<Frame>,
    {
        frames
            .into_iter()
            .map(|f| self.process_frame(f.borrow()))
            .collect()
    }
}

/// An `n×m` table of partially observed columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix {
    n: usize,
    columns: Vec<Frame>,
}

impl MaskedMatrix {
    pub fn new(n: usize, columns: Vec<Frame>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("matrix must have at least one row"));
        }
        for c in &columns {
            Error::check_dim("column length", n, c.ambient_dim())?;
        }
        Ok(MaskedMatrix { n, columns })
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Frame] {
        &self.columns
    }

    /// Dense values with zeros on unobserved entries.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.columns.len());
        for (j, c) in self.columns.iter().enumerate() {
            out.set_column(j, c.values());
        }
        out
    }
}

/// Factors produced by [`batch_complete`].
#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub basis: SubspaceBasis,
    /// `r×m` coefficients.
    pub coeffs: DMatrix<f64>,
    /// `n×m` sparse outliers.
    pub outliers: DMatrix<f64>,
    /// Traces of every streaming pass, all epochs concatenated.
    pub traces: Vec<FrameTrace>,
}

impl BatchResult {
    /// `U A`.
    pub fn low_rank(&self) -> DMatrix<f64> {
        self.basis.matrix() * &self.coeffs
    }

    /// `Ω(U A + S)` column by column.
    pub fn reconstruction(&self, observed: &MaskedMatrix) -> DMatrix<f64> {
        let mut full = self.low_rank() + &self.outliers;
        for (j, c) in observed.columns().iter().enumerate() {
            let ind = c.mask().indicator();
            for i in 0..full.nrows() {
                if !ind[i] {
                    full[(i, j)] = 0.0;
                }
            }
        }
        full
    }
}

/// Runs the tracker over the columns `epochs` times with state carried across
/// epochs, then fits every column once more against the frozen final basis.
pub fn batch_complete(
    observed: &MaskedMatrix,
    r: usize,
    params: &Hyperparams,
    epochs: usize,
    seed: u64,
) -> Result<BatchResult> {
    if epochs == 0 {
        return Err(Error::invalid("epochs must be at least 1"));
    }
    let n = observed.nrows();
    let m = observed.ncols();
    let mut state = TrackerState::init(n, r, params, seed)?;
    let mut traces = Vec::with_capacity(epochs * m);
    for _ in 0..epochs {
        traces.extend(state.run_stream(observed.columns())?);
    }
    let basis = state.basis().clone();
    let fit_params = state.params().clone();
    let mut coeffs = DMatrix::zeros(r, m);
    let mut outliers = DMatrix::zeros(n, m);
    for (j, col) in observed.columns().iter().enumerate() {
        let (fit, _) = solve_fit(&basis, col, &fit_params)?;
        coeffs.set_column(j, &fit.coeffs);
        outliers.set_column(j, &fit.outliers);
    }
    Ok(BatchResult {
        basis,
        coeffs,
        outliers,
        traces,
    })
}

/// `U_{t−1} a_t`, the clean-frame estimate of a trace made against `basis`.
pub fn estimate_clean(basis: &SubspaceBasis, fit: &FitResult) -> DVector<f64> {
    basis.matrix() * &fit.coeffs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ObservationMask;
    use nalgebra::dvector;

    #[test]
    fn init_is_orthonormal_and_deterministic() {
        let p = Hyperparams::default();
        let a = TrackerState::init(10, 3, &p, 7).unwrap();
        let u = a.basis().matrix();
        assert!((u.transpose() * u - DMatrix::identity(3, 3)).norm() <= 1e-12);
        let b = TrackerState::init(10, 3, &p, 7).unwrap();
        assert_eq!(a.basis().matrix().as_slice(), b.basis().matrix().as_slice());
        let c = TrackerState::init(10, 3, &p, 8).unwrap();
        assert!((a.basis().matrix() - c.basis().matrix()).norm() > 0.0);
        assert_eq!(a.params().lambda, Some(1.0 / 10f64.sqrt()));
    }

    #[test]
    fn init_rejects_bad_rank() {
        let p = Hyperparams::default();
        assert!(TrackerState::init(3, 3, &p, 0).is_err());
        assert!(TrackerState::init(3, 0, &p, 0).is_err());
    }

    #[test]
    fn frame_in_span_is_a_fixed_point() {
        let p = Hyperparams {
            lambda: Some(100.0),
            ..Hyperparams::default()
        };
        let mut state = TrackerState::init(6, 2, &p, 1).unwrap();
        let u0 = state.basis().clone();
        let b = Frame::fully_observed(u0.matrix() * dvector![0.7, -1.3]);
        let trace = state.process_frame(&b).unwrap();
        assert_eq!(trace.fit.outlier_nnz(), 0);
        assert_eq!(trace.fit.completion.norm(), 0.0);
        assert!(trace.residual_norm < 1e-14);
        assert!((state.basis().matrix() - u0.matrix()).norm() < 1e-13);
    }

    #[test]
    fn zero_frame_leaves_state() {
        let p = Hyperparams::default();
        let mut state = TrackerState::init(6, 2, &p, 1).unwrap();
        let u0 = state.basis().clone();
        let mask = ObservationMask::new(6, vec![0, 2, 4]).unwrap();
        let trace = state
            .process_frame(&Frame::new(DVector::zeros(6), mask).unwrap())
            .unwrap();
        assert_eq!(trace.fit.coeffs.norm(), 0.0);
        assert_eq!(state.basis(), &u0);
        assert_eq!(state.step().eta, 1.0);
        assert_eq!(trace.eta, 1.0);
        assert_eq!(state.frame_index(), 1);
    }

    #[test]
    fn dimension_mismatch_leaves_state_untouched() {
        let p = Hyperparams::default();
        let mut state = TrackerState::init(6, 2, &p, 1).unwrap();
        let before = state.clone();
        assert!(state
            .process_frame(&Frame::fully_observed(DVector::zeros(5)))
            .is_err());
        assert_eq!(state, before);
    }

    #[test]
    fn rank_failure_is_fatal_unless_skipping() {
        let degenerate = SubspaceBasis::from_matrix_unchecked(DMatrix::zeros(4, 2));
        let b = Frame::fully_observed(dvector![1.0, 0.0, 0.0, 0.0]);
        let mut strict = TrackerState::with_basis(degenerate.clone(), &Hyperparams::default()).unwrap();
        assert!(matches!(
            strict.process_frame(&b),
            Err(Error::RankDeficient { .. })
        ));
        let p = Hyperparams {
            skip_on_rank_fail: true,
            ..Hyperparams::default()
        };
        let mut lenient = TrackerState::with_basis(degenerate, &p).unwrap();
        let trace = lenient.process_frame(&b).unwrap();
        assert!(trace.skipped);
        assert_eq!(lenient.frame_index(), 1);
    }

    #[test]
    fn reorthonormalization_schedule() {
        let p = Hyperparams {
            reorthonormalize_every: 2,
            ..Hyperparams::default()
        };
        let mut state = TrackerState::init(8, 2, &p, 3).unwrap();
        let frames: Vec<Frame> = (0..4)
            .map(|k| Frame::fully_observed(DVector::from_fn(8, |i, _| ((i * 7 + k * 3) % 5) as f64 - 2.0)))
            .collect();
        state.process_frame(&frames[0]).unwrap();
        state.process_frame(&frames[1]).unwrap();
        let u = state.basis().matrix();
        assert!((u.transpose() * u - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn empty_stream_and_empty_batch() {
        let p = Hyperparams::default();
        let mut state = TrackerState::init(5, 2, &p, 4).unwrap();
        let before = state.clone();
        let traces = state.run_stream(Vec::<Frame>::new()).unwrap();
        assert!(traces.is_empty());
        assert_eq!(state, before);

        let empty = MaskedMatrix::new(5, vec![]).unwrap();
        let res = batch_complete(&empty, 2, &p, 3, 4).unwrap();
        assert_eq!(res.basis, *before.basis());
        assert_eq!(res.coeffs.shape(), (2, 0));
        assert_eq!(res.outliers.shape(), (5, 0));
        assert!(batch_complete(&empty, 2, &p, 0, 4).is_err());
    }
}
