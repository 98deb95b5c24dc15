//! Fit one corrupted, partially observed frame against a known basis.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subtrack::linalg::{gaussian_vector, random_orthonormal};
use subtrack::*;

fn main() -> subtrack::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (n, r) = (30, 3);
    let u = SubspaceBasis::new(random_orthonormal(n, r, &mut rng))?;
    let a = gaussian_vector(r, &mut rng);
    let mut b = u.matrix() * &a;
    b[4] += 6.0;
    b[17] -= 4.0;

    let observed: Vec<usize> = (0..n).filter(|i| i % 5 != 0).collect();
    let mask = ObservationMask::new(n, observed)?;
    let frame = Frame::new(project_mask(&b, &mask)?, mask)?;

    let (fit, report) = solve_fit(&u, &frame, &Hyperparams::default())?;
    println!("iterations {} (converged: {})", report.iterations, report.converged);
    println!("loss trace head {:?}", &report.loss_trace[..report.loss_trace.len().min(4)]);
    println!("true a      {:.4?}", a.as_slice());
    println!("estimated a {:.4?}", fit.coeffs.as_slice());
    let detected: Vec<(usize, f64)> = fit
        .outliers
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect();
    println!("outliers detected at {detected:?}");
    let filled = u.matrix() * &fit.coeffs;
    println!("entry 0 (unobserved) filled in as {:.4}, truth {:.4}", filled[0], b[0]);
    Ok(())
}
