//! Robust completion of a 50 x 200 low-rank matrix with missing entries and
//! sparse corruptions.

use nalgebra::DMatrix;
use subtrack::*;

fn main() -> subtrack::Result<()> {
    let scenario = Scenario {
        n: 50,
        r: 5,
        num_frames: 200,
        obs_fraction: 0.7,
        outlier_fraction: 0.05,
        outlier_scale: 5.0,
        seed: 4,
        ..Scenario::default()
    };
    let (columns, truth) = generate(&scenario)?;
    let observed = MaskedMatrix::new(scenario.n, columns)?;
    let clean = DMatrix::from_columns(&truth.clean_frames);

    for epochs in [1, 2, 5, 10] {
        let result = batch_complete(&observed, scenario.r, &Hyperparams::default(), epochs, 0)?;
        let nmse = (result.low_rank() - &clean).norm_squared() / clean.norm_squared();
        println!("epochs {epochs:>2}: NMSE of the low-rank part {nmse:.3e}");
    }
    Ok(())
}
