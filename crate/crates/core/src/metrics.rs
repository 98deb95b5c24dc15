//! Estimation quality against ground truth.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ObservationMask;
use crate::synth::GroundTruth;

/// Report schema major version.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Default magnitude above which an estimated outlier entry counts as detected.
pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 1e-6;

/// `sqrt(max(0, r − ‖Q_Uᵀ Q_V‖_F²) / r)`, in `[0, 1]`, basis invariant.
pub fn subspace_distance(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    Error::check_dim("subspace_distance rows", u.nrows(), v.nrows())?;
    Error::check_dim("subspace_distance columns", u.ncols(), v.ncols())?;
    let r = u.ncols();
    if r == 0 {
        return Err(Error::invalid("subspace_distance needs at least one column"));
    }
    let qu = orthonormal_span(u)?;
    let qv = orthonormal_span(v)?;
    let overlap = qu.tr_mul(&qv).norm_squared();
    Ok(((r as f64 - overlap).max(0.0) / r as f64).sqrt().min(1.0))
}

fn orthonormal_span(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (q, r) = linalg::thin_qr(m);
    linalg::check_rank(&linalg::singular_values_desc(&r), crate::model::DEFAULT_RANK_TOL)?;
    Ok(q)
}

/// Normalized squared reconstruction error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nmse {
    pub value: f64,
    /// The truth was zero, so `value` is the unnormalized `‖estimate‖²`.
    pub degenerate: bool,
}

/// `‖estimate − truth‖² / ‖truth‖²`.
pub fn recon_nmse(estimate: &DVector<f64>, truth: &DVector<f64>) -> Result<Nmse> {
    Error::check_dim("recon_nmse", truth.len(), estimate.len())?;
    let denom = truth.norm_squared();
    if denom > 0.0 {
        Ok(Nmse {
            value: (estimate - truth).norm_squared() / denom,
            degenerate: false,
        })
    } else {
        Ok(Nmse {
            value: estimate.norm_squared(),
            degenerate: true,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of `{i : |s_hat[i]| > threshold}` against
/// `true_support`. An empty prediction has precision 1 and an empty truth has
/// recall 1.
pub fn outlier_support_scores(
    s_hat: &DVector<f64>,
    true_support: &[usize],
    threshold: f64,
) -> Result<SupportScores> {
    if !(threshold > 0.0) {
        return Err(Error::invalid(format!("threshold must be positive, got {threshold}")));
    }
    let mut truth = vec![false; s_hat.len()];
    for &i in true_support {
        if i >= s_hat.len() {
            return Err(Error::invalid(format!(
                "support index {i} out of range for length {}",
                s_hat.len()
            )));
        }
        truth[i] = true;
    }
    let n_true = truth.iter().filter(|b| **b).count();
    let mut n_pred = 0usize;
    let mut hits = 0usize;
    for (i, v) in s_hat.iter().enumerate() {
        if v.abs() > threshold {
            n_pred += 1;
            if truth[i] {
                hits += 1;
            }
        }
    }
    let precision = if n_pred == 0 { 1.0 } else { hits as f64 / n_pred as f64 };
    let recall = if n_true == 0 { 1.0 } else { hits as f64 / n_true as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(SupportScores {
        precision,
        recall,
        f1,
    })
}

/// What the tracker produced for one frame, as far as evaluation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEstimate {
    pub frame_index: usize,
    /// `U_{t−1} a_t`.
    pub clean_estimate: DVector<f64>,
    pub outliers: DVector<f64>,
    /// Post-update basis `U_t`, when a snapshot was kept for this frame.
    pub basis: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub subspace_distance: Option<f64>,
    pub recon_nmse: Option<f64>,
    pub outlier_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: SummaryRow,
    #[serde(rename = "final")]
    pub last: SummaryRow,
    pub max: SummaryRow,
}

/// Per-frame evaluation series with aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    /// Effective configuration of the run that produced the estimates.
    pub config: serde_json::Value,
    pub frames: Vec<usize>,
    /// Frames that carried a basis snapshot; aligned with the distance series.
    pub subspace_distance_frames: Vec<usize>,
    pub subspace_distance_series: Vec<f64>,
    pub recon_nmse_series: Vec<f64>,
    pub recon_degenerate_frames: Vec<usize>,
    pub outlier_precision_series: Vec<f64>,
    pub outlier_recall_series: Vec<f64>,
    pub outlier_f1_series: Vec<f64>,
    pub summary: Summary,
}

/// Scores every estimate against the truth. Outlier detection is scored
/// against the part of the true support that was observed.
pub fn evaluate(
    estimates: &[FrameEstimate],
    truth: &GroundTruth,
    masks: &[ObservationMask],
    outlier_threshold: f64,
    config: serde_json::Value,
) -> Result<EvalReport> {
    let mut report = EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config,
        frames: Vec::with_capacity(estimates.len()),
        subspace_distance_frames: Vec::new(),
        subspace_distance_series: Vec::new(),
        recon_nmse_series: Vec::with_capacity(estimates.len()),
        recon_degenerate_frames: Vec::new(),
        outlier_precision_series: Vec::with_capacity(estimates.len()),
        outlier_recall_series: Vec::with_capacity(estimates.len()),
        outlier_f1_series: Vec::with_capacity(estimates.len()),
        summary: Summary {
            mean: empty_row(),
            last: empty_row(),
            max: empty_row(),
        },
    };
    for est in estimates {
        let t = est.frame_index;
        if t >= truth.num_frames() || t >= masks.len() {
            return Err(Error::invalid(format!(
                "frame {t} has no ground truth ({} frames available)",
                truth.num_frames().min(masks.len())
            )));
        }
        report.frames.push(t);
        if let Some(basis) = &est.basis {
            report.subspace_distance_frames.push(t);
            report
                .subspace_distance_series
                .push(subspace_distance(basis, truth.basis_at(t))?);
        }
        let nmse = recon_nmse(&est.clean_estimate, &truth.clean_frames[t])?;
        if nmse.degenerate {
            report.recon_degenerate_frames.push(t);
        }
        report.recon_nmse_series.push(nmse.value);
        let visible: Vec<usize> = truth.outlier_supports[t]
            .iter()
            .copied()
            .filter(|&i| masks[t].contains(i))
            .collect();
        let scores = outlier_support_scores(&est.outliers, &visible, outlier_threshold)?;
        report.outlier_precision_series.push(scores.precision);
        report.outlier_recall_series.push(scores.recall);
        report.outlier_f1_series.push(scores.f1);
    }
    let series = [
        &report.subspace_distance_series,
        &report.recon_nmse_series,
        &report.outlier_f1_series,
    ];
    let agg = |f: fn(&[f64]) -> Option<f64>| SummaryRow {
        subspace_distance: f(series[0]),
        recon_nmse: f(series[1]),
        outlier_f1: f(series[2]),
    };
    report.summary = Summary {
        mean: agg(mean),
        last: agg(|s| s.last().copied()),
        max: agg(|s| s.iter().copied().reduce(f64::max)),
    };
    Ok(report)
}

fn empty_row() -> SummaryRow {
    SummaryRow {
        subspace_distance: None,
        recon_nmse: None,
        outlier_f1: None,
    }
}

fn mean(s: &[f64]) -> Option<f64> {
    if s.is_empty() {
        None
    } else {
        Some(s.iter().sum::<f64>() / s.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn distance_examples() {
        let u = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 3.0]);
        assert!(subspace_distance(&u, &(&u * &m)).unwrap() < 1e-10);

        let v = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert!((subspace_distance(&u, &v).unwrap() - 1.0).abs() < 1e-15);

        let a = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let d = subspace_distance(&a, &b).unwrap();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-12);

        assert!(subspace_distance(&a, &u).is_err());
    }

    #[test]
    fn nmse_examples() {
        let t = dvector![1.0, -2.0, 0.5];
        assert_eq!(recon_nmse(&t, &t).unwrap().value, 0.0);
        assert_eq!(recon_nmse(&DVector::zeros(3), &t).unwrap().value, 1.0);
        assert_eq!(recon_nmse(&(&t * 2.0), &t).unwrap().value, 1.0);
        let z = recon_nmse(&t, &DVector::zeros(3)).unwrap();
        assert!(z.degenerate);
        assert_eq!(z.value, t.norm_squared());
    }

    #[test]
    fn support_score_examples() {
        let s = dvector![0.0, 2.0, 0.0, -1.0];
        let exact = outlier_support_scores(&s, &[1, 3], 1e-6).unwrap();
        assert_eq!((exact.precision, exact.recall, exact.f1), (1.0, 1.0, 1.0));

        let none = outlier_support_scores(&DVector::zeros(4), &[2], 1e-6).unwrap();
        assert_eq!((none.precision, none.recall, none.f1), (1.0, 0.0, 0.0));

        let both_empty = outlier_support_scores(&DVector::zeros(4), &[], 1e-6).unwrap();
        assert_eq!((both_empty.precision, both_empty.recall, both_empty.f1), (1.0, 1.0, 1.0));

        let extra = outlier_support_scores(&dvector![1.0, 1.0, 0.0], &[0], 1e-6).unwrap();
        assert_eq!(extra.precision, 0.5);
        assert_eq!(extra.recall, 1.0);
        assert!((extra.f1 - 2.0 / 3.0).abs() < 1e-15);

        assert!(outlier_support_scores(&s, &[1], 0.0).is_err());
    }
}
