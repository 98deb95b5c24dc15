//! Robust online subspace estimation and tracking.
//!
//! Streams of incomplete measurements `b_t = Ω_t(U_t a_t + s_t)` are fed to a
//! [`TrackerState`], which alternates a per-frame LASSO fit of the coefficients
//! `a_t`, sparse outliers `s_t` and completion `e_t` with a rank-one additive
//! update of the basis `U_t`. The update magnitude is controlled by an adaptive
//! step size driven by the agreement between consecutive descent directions.
//!
//! The crate also provides a batch robust matrix completion mode
//! ([`batch_complete`]), a synthetic scenario generator ([`synth`]), evaluation
//! metrics ([`metrics`]) and the file formats used by the `subtrack` binary
//! ([`io`], [`cli`]).
//!
//! Runnable walkthroughs live in `examples/`:
//!
//! ```bash
//! cargo run --release -p subtrack --example inner_fit
//! cargo run --release -p subtrack --example track_stationary
//! cargo run --release -p subtrack --example adaptive_step
//! cargo run --release -p subtrack --example batch_completion
//! cargo run --release -p subtrack --example file_pipeline
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod inner;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod tracker;
pub mod update;

pub use error::{Error, Result};
pub use inner::{least_squares_apply, solve_fit, solve_fit_warm, InnerSolveReport, LeastSquares};
pub use metrics::{outlier_support_scores, recon_nmse, subspace_distance, EvalReport};
pub use model::{
    loss_value, project_complement, project_mask, soft_threshold, FitResult, Frame, Hyperparams,
    ObservationMask, SigmoidMode, SubspaceBasis,
};
pub use synth::{generate, GroundTruth, Scenario};
pub use tracker::{batch_complete, BatchResult, FrameTrace, MaskedMatrix, TrackerState};
pub use update::{
    apply_update, descent_direction, reorthonormalize, sigmoid, update_step_size, StepSizeState,
};
