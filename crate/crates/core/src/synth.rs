//! Synthetic streams `b_t = Ω_t(U_t a_t + s_t + noise)` with known ground truth.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{project_mask, Frame, ObservationMask};

/// Parameters of a synthetic stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub n: usize,
    pub r: usize,
    pub num_frames: usize,
    pub obs_fraction: f64,
    pub outlier_fraction: f64,
    pub outlier_scale: f64,
    pub noise_sigma: f64,
    /// Per-frame perturbation magnitude of the basis (0 = stationary).
    pub rotation_rate: f64,
    /// First frame whose basis is perturbed; earlier frames share `U₀`.
    pub rotation_start: usize,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            n: 100,
            r: 5,
            num_frames: 500,
            obs_fraction: 0.8,
            outlier_fraction: 0.05,
            outlier_scale: 1.0,
            noise_sigma: 0.0,
            rotation_rate: 0.0,
            rotation_start: 0,
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.r < 1 || self.r >= self.n {
            return Err(Error::invalid(format!(
                "scenario rank must satisfy 1 <= r < n, got r={}, n={}",
                self.r, self.n
            )));
        }
        if !(self.obs_fraction > 0.0 && self.obs_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "obs_fraction must lie in (0, 1], got {}",
                self.obs_fraction
            )));
        }
        if !(self.outlier_fraction >= 0.0 && self.outlier_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "outlier_fraction must lie in [0, 1), got {}",
                self.outlier_fraction
            )));
        }
        for (name, v) in [
            ("outlier_scale", self.outlier_scale),
            ("noise_sigma", self.noise_sigma),
            ("rotation_rate", self.rotation_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn is_stationary(&self) -> bool {
        self.rotation_rate == 0.0
    }

    pub fn observed_count(&self) -> usize {
        (self.obs_fraction * self.n as f64).round() as usize
    }

    pub fn outlier_count(&self) -> usize {
        (self.outlier_fraction * self.n as f64).round() as usize
    }
}

/// Everything used to build a synthetic stream.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// One orthonormal basis per frame, or a single one when stationary.
    pub bases: Vec<DMatrix<f64>>,
    pub coeffs: Vec<DVector<f64>>,
    pub outlier_supports: Vec<Vec<usize>>,
    /// Dense outlier vectors, zero off the support.
    pub outliers: Vec<DVector<f64>>,
    /// Dense noise per frame; `None` when loaded from disk.
    pub noise: Option<Vec<DVector<f64>>>,
    pub clean_frames: Vec<DVector<f64>>,
}

impl GroundTruth {
    pub fn basis_at(&self, t: usize) -> &DMatrix<f64> {
        if self.bases.len() == 1 {
            &self.bases[0]
        } else {
            &self.bases[t]
        }
    }

    /// Index into `bases` used by frame `t`.
    pub fn basis_index(&self, t: usize) -> usize {
        if self.bases.len() == 1 {
            0
        } else {
            t
        }
    }

    pub fn num_frames(&self) -> usize {
        self.coeffs.len()
    }
}

/// Draws a stream from `scenario`, deterministically in `scenario.seed`.
pub fn generate(scenario: &Scenario) -> Result<(Vec<Frame>, GroundTruth)> {
    scenario.validate()?;
    let Scenario { n, r, .. } = *scenario;
    let n_obs = scenario.observed_count();
    let n_out = scenario.outlier_count();
    if (n_obs as f64) < r as f64 {
        warn!("only {n_obs} observed entries per frame for rank {r}; the subspace may be unidentifiable");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut basis = linalg::random_orthonormal(n, r, &mut rng);
    let mut truth = GroundTruth {
        bases: vec![basis.clone()],
        coeffs: Vec::with_capacity(scenario.num_frames),
        outlier_supports: Vec::with_capacity(scenario.num_frames),
        outliers: Vec::with_capacity(scenario.num_frames),
        noise: Some(Vec::with_capacity(scenario.num_frames)),
        clean_frames: Vec::with_capacity(scenario.num_frames),
    };
    let mut frames = Vec::with_capacity(scenario.num_frames);

    for t in 0..scenario.num_frames {
        if !scenario.is_stationary() {
            if t >= 1 && t >= scenario.rotation_start {
                let g = linalg::gaussian_matrix(n, r, &mut rng);
                basis = linalg::thin_qr(&(&basis + g * scenario.rotation_rate)).0;
            }
            if t >= 1 {
                truth.bases.push(basis.clone());
            }
        }

        let a = linalg::gaussian_vector(r, &mut rng);
        let clean = &basis * &a;

        let mut support = index::sample(&mut rng, n, n_out).into_vec();
        support.sort_unstable();
        let mut outliers = DVector::zeros(n);
        for &i in &support {
            outliers[i] = scenario.outlier_scale * rng.sample::<f64, _>(StandardNormal);
        }

        let noise = if scenario.noise_sigma > 0.0 {
            linalg::gaussian_vector(n, &mut rng) * scenario.noise_sigma
        } else {
            DVector::zeros(n)
        };

        let mask = ObservationMask::from_unsorted(n, index::sample(&mut rng, n, n_obs).into_vec())?;
        let values = project_mask(&(&clean + &outliers + &noise), &mask)?;
        frames.push(Frame::new(values, mask)?);

        truth.coeffs.push(a);
        truth.outlier_supports.push(support);
        truth.outliers.push(outliers);
        if let Some(all) = truth.noise.as_mut() {
            all.push(noise);
        }
        truth.clean_frames.push(clean);
    }
    Ok((frames, truth))
}
