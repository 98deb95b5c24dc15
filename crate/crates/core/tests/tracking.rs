use nalgebra::DMatrix;
use subtrack::*;

fn scenario(seed: u64) -> Scenario {
    Scenario {
        n: 40,
        r: 3,
        num_frames: 120,
        seed,
        ..Scenario::default()
    }
}

#[test]
fn tracking_is_deterministic() {
    let (frames, _) = generate(&scenario(7)).unwrap();
    let params = Hyperparams::default();
    let mut a = TrackerState::init(40, 3, &params, 11).unwrap();
    let mut b = TrackerState::init(40, 3, &params, 11).unwrap();
    assert_eq!(a.run_stream(&frames).unwrap(), b.run_stream(&frames).unwrap());
    assert_eq!(a, b);
}

#[test]
fn frame_order_matters() {
    let (frames, _) = generate(&scenario(8)).unwrap();
    let params = Hyperparams::default();
    let mut forward = TrackerState::init(40, 3, &params, 1).unwrap();
    forward.run_stream(&frames).unwrap();
    let mut reversed = TrackerState::init(40, 3, &params, 1).unwrap();
    reversed.run_stream(frames.iter().rev()).unwrap();
    assert_ne!(forward.basis(), reversed.basis());
}

#[test]
fn single_epoch_batch_equals_one_tracking_pass() {
    let (frames, _) = generate(&scenario(9)).unwrap();
    let params = Hyperparams::default();
    let observed = MaskedMatrix::new(40, frames.clone()).unwrap();
    let batch = batch_complete(&observed, 3, &params, 1, 5).unwrap();
    let mut state = TrackerState::init(40, 3, &params, 5).unwrap();
    let traces = state.run_stream(&frames).unwrap();
    assert_eq!(&batch.basis, state.basis());
    assert_eq!(batch.traces, traces);
}

#[test]
fn stationary_distance_drops() {
    let sc = Scenario {
        num_frames: 300,
        ..scenario(10)
    };
    let (frames, truth) = generate(&sc).unwrap();
    let mut state = TrackerState::init(40, 3, &Hyperparams::default(), 10).unwrap();
    let first = {
        state.process_frame(&frames[0]).unwrap();
        subspace_distance(state.basis().matrix(), truth.basis_at(0)).unwrap()
    };
    state.run_stream(&frames[1..]).unwrap();
    let last = subspace_distance(state.basis().matrix(), truth.basis_at(299)).unwrap();
    assert!(last < first / 4.0, "{first} -> {last}");
}

#[test]
fn generated_frames_decompose_into_truth() {
    let sc = Scenario {
        noise_sigma: 0.0,
        ..scenario(12)
    };
    let (frames, truth) = generate(&sc).unwrap();
    for (t, f) in frames.iter().enumerate() {
        let full = truth.basis_at(t) * &truth.coeffs[t] + &truth.outliers[t];
        let expected = project_mask(&full, f.mask()).unwrap();
        assert!((f.values() - expected).norm() < 1e-12);
        for (i, v) in truth.outliers[t].iter().enumerate() {
            assert_eq!(*v != 0.0, truth.outlier_supports[t].contains(&i));
        }
    }
}

/// The fraction of observed entries that carry an outlier has mean
/// `outlier_fraction`; the empirical value must sit within 3 standard errors.
#[test]
fn observed_outlier_density_within_three_standard_errors() {
    let sc = Scenario {
        n: 100,
        r: 5,
        num_frames: 400,
        obs_fraction: 0.6,
        outlier_fraction: 0.1,
        seed: 13,
        ..Scenario::default()
    };
    let (frames, truth) = generate(&sc).unwrap();
    let mut hits = 0usize;
    let mut total = 0usize;
    for (f, support) in frames.iter().zip(&truth.outlier_supports) {
        total += f.mask().len();
        hits += support.iter().filter(|&&i| f.mask().contains(i)).count();
    }
    let p = 0.1;
    let se = (p * (1.0 - p) / total as f64).sqrt();
    let observed = hits as f64 / total as f64;
    assert!((observed - p).abs() <= 3.0 * se, "{observed} vs {p} ± {}", 3.0 * se);
}

#[test]
fn batch_recovers_full_clean_matrix() {
    let sc = Scenario {
        n: 30,
        r: 2,
        num_frames: 80,
        obs_fraction: 1.0,
        outlier_fraction: 0.0,
        seed: 14,
        ..Scenario::default()
    };
    let (frames, truth) = generate(&sc).unwrap();
    let observed = MaskedMatrix::new(30, frames).unwrap();
    let res = batch_complete(&observed, 2, &Hyperparams::default(), 3, 0).unwrap();
    let clean = DMatrix::from_columns(&truth.clean_frames);
    assert!((res.low_rank() - &clean).norm() / clean.norm() < 1e-6);
    assert!(res.outliers.iter().all(|v| *v == 0.0));
}
