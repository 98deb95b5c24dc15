use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use subtrack::cli::{self, Mode, RunConfig};
use subtrack::SigmoidMode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Synth,
    Track,
    Complete,
    Eval,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SigmoidArg {
    Default,
    #[value(name = "paper-literal")]
    Literal,
}

/// Robust online subspace tracking: generate, track, complete, evaluate.
///
/// Flags override values loaded with --config.
#[derive(Debug, Parser)]
#[command(name = "subtrack", version)]
struct Args {
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// JSON run configuration
    #[arg(long)]
    config: Option<PathBuf>,

    /// l1 weight on outliers [default: 1/sqrt(n)]
    #[arg(long)]
    lambda: Option<f64>,
    /// step-size numerator and lower clamp of eta [default: 1]
    #[arg(long = "C")]
    c: Option<f64>,
    /// upper clamp of eta [default: 16]
    #[arg(long)]
    eta_max: Option<f64>,
    /// lower clamp of eta [default: C]
    #[arg(long)]
    eta_min: Option<f64>,
    /// sigmoid amplitude [default: 1]
    #[arg(long)]
    f: Option<f64>,
    /// sigmoid form [default: default]
    #[arg(long, value_enum)]
    sigmoid: Option<SigmoidArg>,
    /// inner solver relative tolerance [default: 1e-6]
    #[arg(long)]
    inner_tol: Option<f64>,
    /// inner solver iteration cap [default: 100]
    #[arg(long)]
    inner_max_iters: Option<usize>,
    /// re-orthonormalize every k frames, 0 = never [default: 0]
    #[arg(long)]
    reorth_every: Option<usize>,
    /// warm-start the inner solver from the previous frame
    #[arg(long)]
    warm_start: bool,
    /// skip frames with a rank-deficient basis instead of failing
    #[arg(long)]
    skip_on_rank_fail: bool,

    /// seed for the scenario and the tracker's initial basis [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// subspace rank (synth: generated rank; track/complete: tracked rank)
    #[arg(long)]
    rank: Option<usize>,
    /// batch completion epochs [default: 5]
    #[arg(long)]
    epochs: Option<usize>,
    /// keep a basis snapshot every k frames, 0 = none [default: 1]
    #[arg(long)]
    snapshot_every: Option<usize>,
    /// outlier detection threshold [default: 1e-6]
    #[arg(long)]
    outlier_threshold: Option<f64>,

    /// ambient dimension [default: 100]
    #[arg(long)]
    n: Option<usize>,
    /// number of frames [default: 500]
    #[arg(long)]
    frames: Option<usize>,
    /// observed fraction of each frame [default: 0.8]
    #[arg(long)]
    obs_fraction: Option<f64>,
    /// outlier fraction of each frame [default: 0.05]
    #[arg(long)]
    outlier_fraction: Option<f64>,
    /// outlier standard deviation [default: 1]
    #[arg(long)]
    outlier_scale: Option<f64>,
    /// dense noise standard deviation [default: 0]
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// per-frame basis perturbation, 0 = stationary [default: 0]
    #[arg(long)]
    rotation_rate: Option<f64>,
    /// first rotating frame [default: 0]
    #[arg(long)]
    rotation_start: Option<usize>,

    /// stream file (track, complete, eval) or directory of runs (track)
    #[arg(long)]
    input: Option<PathBuf>,
    /// ground-truth file
    #[arg(long)]
    truth: Option<PathBuf>,
    /// directory of a previous track run (eval)
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// output directory
    #[arg(long)]
    out: Option<PathBuf>,

    /// more log output (-v, -vv)
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn merge(args: Args) -> Result<RunConfig, cli::CliError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_json_file(p)?,
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($src:ident => $dst:expr),* $(,)?) => {
            $(if let Some(v) = args.$src { $dst = v; })*
        };
    }
    if let Some(m) = args.mode {
        cfg.mode = Some(match m {
            ModeArg::Synth => Mode::Synth,
            ModeArg::Track => Mode::Track,
            ModeArg::Complete => Mode::Complete,
            ModeArg::Eval => Mode::Eval,
        });
    }
    if let Some(s) = args.sigmoid {
        cfg.params.sigmoid = match s {
            SigmoidArg::Default => SigmoidMode::Default,
            SigmoidArg::Literal => SigmoidMode::Literal,
        };
    }
    if args.lambda.is_some() {
        cfg.params.lambda = args.lambda;
    }
    if args.eta_min.is_some() {
        cfg.params.eta_min = args.eta_min;
    }
    set! {
        c => cfg.params.c,
        eta_max => cfg.params.eta_max,
        f => cfg.params.f,
        inner_tol => cfg.params.inner_tol,
        inner_max_iters => cfg.params.inner_max_iters,
        reorth_every => cfg.params.reorthonormalize_every,
        epochs => cfg.epochs,
        snapshot_every => cfg.snapshot_every,
        outlier_threshold => cfg.outlier_threshold,
        n => cfg.scenario.n,
        frames => cfg.scenario.num_frames,
        obs_fraction => cfg.scenario.obs_fraction,
        outlier_fraction => cfg.scenario.outlier_fraction,
        outlier_scale => cfg.scenario.outlier_scale,
        noise_sigma => cfg.scenario.noise_sigma,
        rotation_rate => cfg.scenario.rotation_rate,
        rotation_start => cfg.scenario.rotation_start,
    }
    cfg.params.warm_start |= args.warm_start;
    cfg.params.skip_on_rank_fail |= args.skip_on_rank_fail;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.scenario.seed = seed;
    }
    if let Some(r) = args.rank {
        cfg.rank = Some(r);
        cfg.scenario.r = r;
    }
    cfg.input = args.input.or(cfg.input);
    cfg.truth = args.truth.or(cfg.truth);
    cfg.run_dir = args.run_dir.or(cfg.run_dir);
    cfg.out = args.out.or(cfg.out);
    cfg.verbosity = cfg.verbosity.max(args.verbose);
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match merge(args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let level = match cfg.verbosity {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match cli::run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
