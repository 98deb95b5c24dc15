//! Commands behind the `subtrack` binary.
//!
//! Each command takes a fully merged [`RunConfig`], validates it before doing
//! any work and writes its artifacts under `out`. Validation failures map to
//! exit code 2, everything else to 1.

use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::io::{self, FormatError, StreamMeta, TraceRow};
use crate::metrics::{self, EvalReport, FrameEstimate, DEFAULT_OUTLIER_THRESHOLD};
use crate::model::{Frame, Hyperparams};
use crate::synth::{self, Scenario};
use crate::tracker::{batch_complete, MaskedMatrix, TrackerState};

pub const STREAM_FILE: &str = "stream.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const ESTIMATES_FILE: &str = "estimates.csv";
pub const REPORT_FILE: &str = "report.json";
pub const FINAL_BASIS_FILE: &str = "basis_final.csv";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Core(#[from] crate::Error),

    #[error("invariant violation at frame {frame}: {msg}")]
    Invariant { frame: usize, msg: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Synth,
    Track,
    Complete,
    Eval,
}

/// Everything a command needs. Loaded from JSON and/or command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub scenario: Scenario,
    pub params: Hyperparams,
    /// Seed of the tracker's initial basis.
    pub seed: u64,
    /// Tracked rank; defaults to the `r` recorded in the stream header.
    pub rank: Option<usize>,
    pub epochs: usize,
    /// Keep a basis snapshot every this many frames (0 = none).
    pub snapshot_every: usize,
    pub outlier_threshold: f64,
    pub input: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub verbosity: u8,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: None,
            scenario: Scenario::default(),
            params: Hyperparams::default(),
            seed: 0,
            rank: None,
            epochs: 5,
            snapshot_every: 1,
            outlier_threshold: DEFAULT_OUTLIER_THRESHOLD,
            input: None,
            truth: None,
            run_dir: None,
            out: None,
            verbosity: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    fn require_path(&self, what: &str, p: &Option<PathBuf>) -> CliResult<PathBuf> {
        p.clone()
            .ok_or_else(|| CliError::Validation(format!("{what} path is required")))
    }

    fn validate_params(&self) -> CliResult<()> {
        self.params
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        if !(self.outlier_threshold > 0.0) {
            return Err(CliError::Validation(format!(
                "outlier_threshold must be positive, got {}",
                self.outlier_threshold
            )));
        }
        Ok(())
    }

    /// The algorithmic part of the configuration with every default resolved.
    /// I/O paths are left out so the record is identical across output
    /// locations.
    pub fn effective(&self, mode: Mode, n: usize, r: usize) -> serde_json::Value {
        let mut v = json!({
            "mode": mode,
            "n": n,
            "rank": r,
            "seed": self.seed,
            "params": self.params.resolved(n),
        });
        let obj = v.as_object_mut().expect("object");
        match mode {
            Mode::Synth => {
                obj.insert("scenario".into(), json!(self.scenario));
                obj.remove("params");
                obj.remove("seed");
            }
            Mode::Track => {
                obj.insert("snapshot_every".into(), json!(self.snapshot_every));
                obj.insert("outlier_threshold".into(), json!(self.outlier_threshold));
            }
            Mode::Complete => {
                obj.insert("epochs".into(), json!(self.epochs));
            }
            Mode::Eval => {}
        }
        v
    }
}

/// Dispatches on `config.mode`.
pub fn run(config: &RunConfig) -> CliResult<()> {
    match config.mode {
        Some(Mode::Synth) => cmd_synth(config),
        Some(Mode::Track) => cmd_track(config),
        Some(Mode::Complete) => cmd_complete(config),
        Some(Mode::Eval) => cmd_eval(config).map(|_| ()),
        None => Err(CliError::Validation("mode is required".into())),
    }
}

/// Generates a scenario and writes `stream.csv`, `truth.csv` and the basis
/// snapshots into `out`.
pub fn cmd_synth(config: &RunConfig) -> CliResult<()> {
    let sc = &config.scenario;
    sc.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let out = config.require_path("output directory (--out)", &config.out)?;
    let (frames, truth) = synth::generate(sc)?;
    let meta = StreamMeta {
        n: sc.n,
        r: Some(sc.r),
        seed: Some(sc.seed),
        config: Some(config.effective(Mode::Synth, sc.n, sc.r)),
    };
    io::write_stream(&out.join(STREAM_FILE), &meta, &frames)?;
    io::write_truth(&out.join(TRUTH_FILE), &meta, &truth)?;
    println!(
        "synth: frames={} n={} r={} seed={} -> {}",
        frames.len(),
        sc.n,
        sc.r,
        sc.seed,
        out.display()
    );
    Ok(())
}

/// Tracks a stream file, or every `*/stream.csv` under a directory in
/// parallel (one output subdirectory per stream).
pub fn cmd_track(config: &RunConfig) -> CliResult<()> {
    config.validate_params()?;
    let input = config.require_path("input stream (--input)", &config.input)?;
    let out = config.require_path("output directory (--out)", &config.out)?;
    if input.is_dir() {
        let mut jobs = Vec::new();
        let entries = std::fs::read_dir(&input).map_err(|source| FormatError::Io {
            path: input.clone(),
            source,
        })?;
        for entry in entries.flatten() {
            let stream = entry.path().join(STREAM_FILE);
            if stream.is_file() {
                let truth = entry.path().join(TRUTH_FILE);
                let name = entry.file_name();
                jobs.push((stream, truth.is_file().then_some(truth), out.join(name)));
            }
        }
        jobs.sort();
        if jobs.is_empty() {
            warn!("no */{STREAM_FILE} found under {}", input.display());
        }
        let results: Vec<CliResult<()>> = std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|(stream, truth, dir)| {
                    scope.spawn(move || track_one(config, stream, truth.as_deref(), dir))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("tracking thread panicked"))
                .collect()
        });
        results.into_iter().collect()
    } else {
        track_one(config, &input, config.truth.as_deref(), &out)
    }
}

fn track_one(config: &RunConfig, stream: &Path, truth: Option<&Path>, out: &Path) -> CliResult<()> {
    let (meta, frames) = io::read_stream(stream)?;
    let n = meta.n;
    let r = config.rank.or(meta.r).ok_or_else(|| {
        CliError::Validation("rank is required (--rank) when the stream header has no r".into())
    })?;
    if r < 1 || r >= n {
        return Err(CliError::Validation(format!(
            "rank must satisfy 1 <= r < n, got r={r}, n={n}"
        )));
    }
    let effective = config.effective(Mode::Track, n, r);
    print_run_header("track", config, n, &effective);
    if frames.is_empty() {
        warn!("{}: stream is empty", stream.display());
    }

    let mut state = TrackerState::init(n, r, &config.params, config.seed)?;
    let mut rows = Vec::with_capacity(frames.len());
    let mut estimates = Vec::with_capacity(frames.len());
    let last = frames.len().saturating_sub(1);
    for (t, frame) in frames.iter().enumerate() {
        let before = state.basis().clone();
        let trace = state.process_frame(frame)?;
        let keep = config.snapshot_every > 0 && ((t + 1) % config.snapshot_every == 0 || t == last);
        estimates.push(FrameEstimate {
            frame_index: t,
            clean_estimate: crate::tracker::estimate_clean(&before, &trace.fit),
            outliers: trace.fit.outliers.clone(),
            basis: keep.then(|| state.basis().matrix().clone()),
        });
        rows.push(TraceRow::from(&trace));
    }

    io::write_trace(&out.join(TRACE_FILE), &effective, &rows)?;
    io::write_estimates(&out.join(ESTIMATES_FILE), n, r, &estimates)?;
    io::write_matrix(&out.join(FINAL_BASIS_FILE), state.basis().matrix())?;
    if let Some(truth) = truth {
        let report = evaluate_run(stream, truth, out, config.outlier_threshold)?;
        io::write_report(&out.join(REPORT_FILE), &report)?;
        if let Some(d) = report.summary.last.subspace_distance {
            println!("track: final subspace distance {d:.6}");
        }
    }
    info!("track: {} frames written to {}", rows.len(), out.display());
    Ok(())
}

fn print_run_header(cmd: &str, config: &RunConfig, n: usize, effective: &serde_json::Value) {
    let lambda_note = if config.params.lambda.is_none() {
        " (default 1/sqrt(n))"
    } else {
        ""
    };
    println!(
        "{cmd}: lambda={}{lambda_note} config={}",
        config.params.lambda_for(n),
        effective
    );
}

/// Batch robust matrix completion of the columns of a stream file.
pub fn cmd_complete(config: &RunConfig) -> CliResult<()> {
    config.validate_params()?;
    if config.epochs == 0 {
        return Err(CliError::Validation("epochs must be at least 1".into()));
    }
    let input = config.require_path("input matrix (--input)", &config.input)?;
    let out = config.require_path("output directory (--out)", &config.out)?;
    let (meta, columns) = io::read_stream(&input)?;
    let (n, m) = (meta.n, columns.len());
    let r = config.rank.or(meta.r).ok_or_else(|| {
        CliError::Validation("rank is required (--rank) when the matrix header has no r".into())
    })?;
    if r < 1 || r > n.min(m) || r >= n {
        return Err(CliError::Validation(format!(
            "rank r={r} must satisfy 1 <= r <= min(n, m) = {} and r < n",
            n.min(m)
        )));
    }
    let effective = config.effective(Mode::Complete, n, r);
    print_run_header("complete", config, n, &effective);

    let observed = MaskedMatrix::new(n, columns)?;
    let result = batch_complete(&observed, r, &config.params, config.epochs, config.seed)?;
    io::write_matrix(&out.join("U.csv"), result.basis.matrix())?;
    io::write_matrix(&out.join("A.csv"), &result.coeffs)?;
    io::write_matrix(&out.join("S.csv"), &result.outliers)?;

    let b = observed.to_dense();
    let recon = result.reconstruction(&observed);
    let mut summary = json!({
        "schema_version": metrics::REPORT_SCHEMA_VERSION,
        "config": effective,
        "n": n,
        "m": m,
        "observed_fit_nmse": ratio((&b - &recon).norm_squared(), b.norm_squared()),
    });
    if let Some(truth_path) = &config.truth {
        let truth = io::read_truth(truth_path)?;
        if truth.num_frames() != m {
            return Err(CliError::Validation(format!(
                "ground truth has {} columns, matrix has {m}",
                truth.num_frames()
            )));
        }
        let clean = DMatrix::from_columns(&truth.clean_frames);
        let low_rank = result.low_rank();
        let masked = |x: &DMatrix<f64>| mask_matrix(x, observed.columns());
        summary["low_rank_nmse"] = json!(ratio((&low_rank - &clean).norm_squared(), clean.norm_squared()));
        let clean_obs = masked(&clean);
        summary["observed_clean_nmse"] = json!(ratio(
            (masked(&low_rank) - &clean_obs).norm_squared(),
            clean_obs.norm_squared()
        ));
    }
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    io::write_text(&out.join("summary.json"), &text)?;
    println!(
        "complete: n={n} m={m} r={r} epochs={} observed fit NMSE {:.3e}",
        config.epochs,
        summary["observed_fit_nmse"].as_f64().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

fn mask_matrix(x: &DMatrix<f64>, columns: &[Frame]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for (j, c) in columns.iter().enumerate() {
        for &i in c.mask().indices() {
            out[(i, j)] = x[(i, j)];
        }
    }
    out
}

/// Recomputes the report of a tracking run from its persisted artifacts.
pub fn cmd_eval(config: &RunConfig) -> CliResult<EvalReport> {
    let run_dir = config.require_path("run directory (--run-dir)", &config.run_dir)?;
    let stream = config.require_path("input stream (--input)", &config.input)?;
    let truth = config
        .truth
        .clone()
        .ok_or_else(|| CliError::Validation("ground truth (--truth) is required for eval".into()))?;
    if !truth.is_file() {
        return Err(CliError::Validation(format!(
            "ground truth file {} does not exist",
            truth.display()
        )));
    }
    let report = evaluate_run(&stream, &truth, &run_dir, config.outlier_threshold)?;
    let out = config.out.clone().unwrap_or(run_dir);
    io::write_report(&out.join(REPORT_FILE), &report)?;
    for (name, v) in [
        ("subspace_distance", report.summary.last.subspace_distance),
        ("recon_nmse", report.summary.mean.recon_nmse),
        ("outlier_f1", report.summary.mean.outlier_f1),
    ] {
        if let Some(v) = v {
            println!("eval: {name} = {v:.6}");
        }
    }
    Ok(report)
}

/// Shared by `track` and `eval`: reads the trace, estimates, stream and truth
/// of a run, checks the trace invariants and scores the estimates.
pub fn evaluate_run(
    stream: &Path,
    truth: &Path,
    run_dir: &Path,
    outlier_threshold: f64,
) -> CliResult<EvalReport> {
    let trace_path = run_dir.join(TRACE_FILE);
    let (config, rows) = io::read_trace(&trace_path)?;
    let config = config.ok_or_else(|| {
        CliError::Validation(format!("{}: missing config record", trace_path.display()))
    })?;
    let params: Hyperparams = serde_json::from_value(config["params"].clone()).map_err(|e| {
        CliError::Validation(format!("{}: invalid params record: {e}", trace_path.display()))
    })?;
    check_trace(&rows, &params)?;

    let estimates = io::read_estimates(&run_dir.join(ESTIMATES_FILE))?;
    if estimates.len() != rows.len() {
        return Err(CliError::Validation(format!(
            "trace has {} frames but estimates have {}",
            rows.len(),
            estimates.len()
        )));
    }
    let (_, frames) = io::read_stream(stream)?;
    let truth = io::read_truth(truth)?;
    if truth.num_frames() != frames.len() {
        return Err(CliError::Validation(format!(
            "ground truth has {} frames, stream has {}",
            truth.num_frames(),
            frames.len()
        )));
    }
    let masks: Vec<_> = frames.iter().map(|f| f.mask().clone()).collect();
    let threshold = config
        .get("outlier_threshold")
        .and_then(|v| v.as_f64())
        .unwrap_or(outlier_threshold);
    Ok(metrics::evaluate(&estimates, &truth, &masks, threshold, config)?)
}

fn check_trace(rows: &[TraceRow], params: &Hyperparams) -> CliResult<()> {
    params
        .validate()
        .map_err(|e| CliError::Validation(format!("trace params: {e}")))?;
    let (lo, hi) = params.mu_bounds();
    let tol = 1e-12;
    for (k, row) in rows.iter().enumerate() {
        if row.t != k {
            return Err(CliError::Invariant {
                frame: k,
                msg: format!("trace row {k} carries t={}", row.t),
            });
        }
        if !(row.mu >= lo - tol && row.mu <= hi + tol) {
            return Err(CliError::Invariant {
                frame: row.t,
                msg: format!("mu={} outside [{lo}, {hi}]", row.mu),
            });
        }
        if !(row.eta >= params.eta_min() && row.eta <= params.eta_max) {
            return Err(CliError::Invariant {
                frame: row.t,
                msg: format!("eta={} outside [{}, {}]", row.eta, params.eta_min(), params.eta_max),
            });
        }
    }
    Ok(())
}
