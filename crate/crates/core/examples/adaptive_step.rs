//! The step-size controller on a stream that starts stationary and then
//! rotates: μ drops once consecutive descent directions start to agree.

use subtrack::*;

fn main() -> subtrack::Result<()> {
    let scenario = Scenario {
        num_frames: 1000,
        rotation_rate: 0.02,
        rotation_start: 500,
        seed: 3,
        ..Scenario::default()
    };
    let (frames, truth) = generate(&scenario)?;
    let params = Hyperparams::default();
    let mut tracker = TrackerState::init(scenario.n, scenario.r, &params, 3)?;

    let mut window = Vec::new();
    for (t, frame) in frames.iter().enumerate() {
        let trace = tracker.process_frame(frame)?;
        window.push(params.c / (1.0 + trace.eta));
        if (t + 1) % 100 == 0 {
            let d = subspace_distance(tracker.basis().matrix(), truth.basis_at(t))?;
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            let phase = if t < scenario.rotation_start { "stationary" } else { "rotating" };
            println!("frames {:>4}-{t:<4} {phase:<10} mean mu {mean:.4}  distance {d:.4}", t - 99);
            window.clear();
        }
    }

    println!("\nsigmoid increments for a few cosines:");
    for x in [-1.0, -0.2, 0.0, 0.2, 1.0] {
        println!(
            "  cos {x:>5}: default {:+.4}  paper-literal {:+.4}",
            sigmoid(x, 1.0, 10.0, SigmoidMode::Default),
            sigmoid(x, 1.0, 10.0, SigmoidMode::Literal)
        );
    }
    Ok(())
}
