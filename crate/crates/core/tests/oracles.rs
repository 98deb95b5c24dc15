use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subtrack::linalg::{gaussian_vector, random_orthonormal};
use subtrack::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn masked_frame(b: &DVector<f64>, k: usize, rng: &mut ChaCha8Rng) -> Frame {
    let n = b.len();
    let mask = ObservationMask::from_unsorted(n, rand::seq::index::sample(rng, n, k).into_vec()).unwrap();
    Frame::new(project_mask(b, &mask).unwrap(), mask).unwrap()
}

/// With λ above every residual the outliers stay at zero and `a` solves the
/// least-squares problem restricted to the observed rows.
#[test]
fn large_lambda_matches_normal_equations_on_observed_rows() {
    let mut rng = rng(1);
    for _ in 0..30 {
        let (n, r) = (25, 4);
        let u = SubspaceBasis::new(random_orthonormal(n, r, &mut rng)).unwrap();
        let b = gaussian_vector(n, &mut rng);
        let frame = masked_frame(&b, 15, &mut rng);
        let params = Hyperparams {
            lambda: Some(1e6),
            inner_tol: 1e-14,
            inner_max_iters: 20_000,
            ..Hyperparams::default()
        };
        let (fit, _) = solve_fit(&u, &frame, &params).unwrap();
        assert_eq!(fit.outlier_nnz(), 0);

        let rows = frame.mask().indices();
        let uo = DMatrix::from_fn(rows.len(), r, |i, j| u.matrix()[(rows[i], j)]);
        let bo = DVector::from_iterator(rows.len(), rows.iter().map(|&i| b[i]));
        let normal = (uo.transpose() * &uo).try_inverse().unwrap() * uo.transpose() * bo;
        let err = (&fit.coeffs - normal).norm();
        assert!(err < 1e-8, "{err}");
    }
}

#[test]
fn solution_satisfies_optimality_conditions() {
    let mut rng = rng(2);
    let params = Hyperparams {
        lambda: Some(0.3),
        inner_tol: 1e-14,
        inner_max_iters: 50_000,
        ..Hyperparams::default()
    };
    for _ in 0..30 {
        let (n, r) = (30, 3);
        let u = SubspaceBasis::new(random_orthonormal(n, r, &mut rng)).unwrap();
        let mut b = u.matrix() * gaussian_vector(r, &mut rng);
        for _ in 0..4 {
            let i = rng.random_range(0..n);
            b[i] += 5.0;
        }
        let frame = masked_frame(&b, 24, &mut rng);
        let (fit, _) = solve_fit(&u, &frame, &params).unwrap();
        let res = fit.residual(&u, &frame).unwrap();
        assert!((u.matrix().transpose() * &res).norm() < 1e-8);
        for i in 0..n {
            if !frame.mask().contains(i) {
                assert_eq!(fit.outliers[i], 0.0);
                assert!(res[i].abs() < 1e-12);
            } else if fit.outliers[i] != 0.0 {
                assert!((res[i] - 0.3 * fit.outliers[i].signum()).abs() < 1e-8);
            } else {
                assert!(res[i].abs() <= 0.3 + 1e-8);
            }
        }
    }
}

#[test]
fn warm_start_from_converged_fit_is_a_fixed_point() {
    let mut rng = rng(3);
    let params = Hyperparams {
        inner_tol: 1e-12,
        inner_max_iters: 10_000,
        ..Hyperparams::default()
    };
    let u = SubspaceBasis::new(random_orthonormal(40, 4, &mut rng)).unwrap();
    let mut b = u.matrix() * gaussian_vector(4, &mut rng);
    b[3] += 4.0;
    let frame = masked_frame(&b, 32, &mut rng);
    let (fit, report) = solve_fit(&u, &frame, &params).unwrap();
    assert!(report.converged);
    let (again, warm) = solve_fit_warm(&u, &frame, &params, &fit).unwrap();
    assert_eq!(warm.iterations, 1);
    assert!((&again.coeffs - &fit.coeffs).norm() < 1e-10);
    assert!((&again.outliers - &fit.outliers).norm() < 1e-10);
}

#[test]
fn update_moves_toward_an_exact_frame() {
    let mut rng = rng(4);
    let truth = random_orthonormal(20, 2, &mut rng);
    let u = SubspaceBasis::new(random_orthonormal(20, 2, &mut rng)).unwrap();
    let frame = Frame::fully_observed(&truth * gaussian_vector(2, &mut rng));
    let params = Hyperparams {
        lambda: Some(1e6),
        ..Hyperparams::default()
    };
    let (fit, _) = solve_fit(&u, &frame, &params).unwrap();
    let before = fit.residual(&u, &frame).unwrap().norm();
    let d = descent_direction(&u, &fit, &frame).unwrap();
    let u1 = apply_update(&u, &d, 1.0).unwrap();
    let after = (frame.values() - u1.matrix() * &fit.coeffs).norm();
    let a2 = fit.coeffs.norm_squared();
    assert!((after - before / (1.0 + a2)).abs() < 1e-10);
}

#[test]
fn subspace_distance_matches_principal_angles() {
    let mut rng = rng(5);
    for _ in 0..20 {
        let a = random_orthonormal(12, 3, &mut rng);
        let b = random_orthonormal(12, 3, &mut rng);
        let cosines = (a.transpose() * &b).singular_values();
        let sines: f64 = cosines.iter().map(|c| 1.0 - c * c).sum();
        let expected = (sines / 3.0).sqrt();
        assert!((subspace_distance(&a, &b).unwrap() - expected).abs() < 1e-12);
    }
}
