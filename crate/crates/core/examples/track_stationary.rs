//! Track a stationary subspace from a synthetic stream and print the
//! distance to the truth as frames arrive.

use subtrack::*;

fn main() -> subtrack::Result<()> {
    let scenario = Scenario {
        num_frames: 1000,
        seed: 2,
        ..Scenario::default()
    };
    let (frames, truth) = generate(&scenario)?;
    let params = Hyperparams::default();
    let mut tracker = TrackerState::init(scenario.n, scenario.r, &params, 2)?;

    println!("{:>6} {:>10} {:>8} {:>8}", "frame", "distance", "mu", "inner");
    for (t, frame) in frames.iter().enumerate() {
        let trace = tracker.process_frame(frame)?;
        if t < 5 || (t + 1) % 100 == 0 {
            let d = subspace_distance(tracker.basis().matrix(), truth.basis_at(t))?;
            println!("{t:>6} {d:>10.4} {:>8.4} {:>8}", trace.mu_used, trace.inner_iterations);
        }
    }
    Ok(())
}
