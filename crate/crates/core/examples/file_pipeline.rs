//! The same steps as `subtrack --mode synth`, `--mode track` and `--mode eval`,
//! driven from the library and leaving every artifact in a temporary
//! directory (or the directory given as the first argument).

use std::path::PathBuf;

use subtrack::cli::{self, Mode, RunConfig};
use subtrack::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => std::env::temp_dir().join("subtrack-example"),
    };
    let data = root.join("data");
    let run = root.join("run");

    let mut config = RunConfig {
        scenario: Scenario {
            n: 60,
            r: 4,
            num_frames: 300,
            seed: 5,
            ..Scenario::default()
        },
        out: Some(data.clone()),
        ..RunConfig::default()
    };
    cli::cmd_synth(&config)?;

    config.mode = Some(Mode::Track);
    config.input = Some(data.join(cli::STREAM_FILE));
    config.truth = Some(data.join(cli::TRUTH_FILE));
    config.out = Some(run.clone());
    cli::cmd_track(&config)?;

    config.run_dir = Some(run.clone());
    config.out = Some(root.join("eval"));
    let report = cli::cmd_eval(&config)?;
    println!(
        "{} frames scored; artifacts under {}",
        report.frames.len(),
        root.display()
    );
    Ok(())
}
