//! On-disk formats: streams, ground truth, dense matrices, traces, per-frame
//! estimates and reports.
//!
//! Every CSV file opens with a version line `# <kind> v<major>, key=value, ...`,
//! optionally followed by `# config <json>`, then a CSV header row. Readers
//! reject files whose major version differs from the one they understand.
//! Reals are written with 17 significant digits so they round-trip exactly;
//! list-valued cells are `;`-separated.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::metrics::{EvalReport, FrameEstimate, REPORT_SCHEMA_VERSION};
use crate::model::{Frame, ObservationMask};
use crate::synth::GroundTruth;

pub const STREAM_KIND: &str = "subtrack-stream";
pub const TRUTH_KIND: &str = "subtrack-truth";
pub const MATRIX_KIND: &str = "subtrack-matrix";
pub const TRACE_KIND: &str = "subtrack-trace";
pub const ESTIMATES_KIND: &str = "subtrack-estimates";
pub const FORMAT_MAJOR: u32 = 1;

pub const TRACE_COLUMNS: [&str; 7] = ["t", "inner_iters", "mu", "eta", "residual_norm", "loss", "s_nnz"];

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("{path}: expected a {expected_kind} file, found {found_kind}")]
    WrongKind {
        path: PathBuf,
        expected_kind: String,
        found_kind: String,
    },

    #[error("{path}: unsupported schema version of {kind}: reader supports v{supported}, file is v{found}")]
    SchemaVersion {
        path: PathBuf,
        kind: String,
        supported: u32,
        found: u32,
    },

    #[error("{path}: {msg}")]
    Invalid { path: PathBuf, msg: String },
}

pub type FormatResult<T> = std::result::Result<T, FormatError>;

/// 17 significant digits, exact round trip.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn join<T: Display>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn join_reals<'a>(items: impl IntoIterator<Item = &'a f64>) -> String {
    join(items.into_iter().map(|v| fmt_real(*v)))
}

/// Parsed leading comment block of a file.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub kind: String,
    pub major: u32,
    pub fields: BTreeMap<String, String>,
    pub config: Option<serde_json::Value>,
}

impl Header {
    pub fn new(kind: &str) -> Self {
        Header {
            kind: kind.to_string(),
            major: FORMAT_MAJOR,
            fields: BTreeMap::new(),
            config: None,
        }
    }

    pub fn with(mut self, key: &str, value: impl Display) -> Self {
        self.fields.insert(key.to_string(), value.to_string());
        self
    }

    pub fn with_config(mut self, config: serde_json::Value) -> Self {
        self.config = Some(config);
        self
    }

    fn render(&self, out: &mut String, field_order: &[&str]) {
        out.push_str(&format!("# {} v{}", self.kind, self.major));
        for key in field_order {
            if let Some(v) = self.fields.get(*key) {
                out.push_str(&format!(", {key}={v}"));
            }
        }
        for (k, v) in &self.fields {
            if !field_order.contains(&k.as_str()) {
                out.push_str(&format!(", {k}={v}"));
            }
        }
        out.push('\n');
        if let Some(cfg) = &self.config {
            out.push_str("# config ");
            out.push_str(&serde_json::to_string(cfg).expect("config serializes"));
            out.push('\n');
        }
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str, path: &Path) -> FormatResult<Option<T>> {
        match self.fields.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| FormatError::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("header field {key}={v:?} is not valid"),
            }),
        }
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str, path: &Path) -> FormatResult<T> {
        self.get(key, path)?.ok_or_else(|| FormatError::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("header is missing field {key}"),
        })
    }
}

/// A file split into its header and the CSV body that follows it.
struct Document {
    path: PathBuf,
    header: Header,
    body: String,
    body_first_line: u64,
}

impl Document {
    fn read(path: &Path, expected_kind: &str) -> FormatResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(path, &text, expected_kind)
    }

    fn parse(path: &Path, text: &str, expected_kind: &str) -> FormatResult<Self> {
        let perr = |line: u64, msg: String| FormatError::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.split_inclusive('\n');
        let first_raw = lines.next().unwrap_or("");
        let first = first_raw.trim_end();
        let rest = first
            .strip_prefix('#')
            .ok_or_else(|| perr(1, "missing version header line".into()))?;
        let mut parts = rest.split(',').map(str::trim);
        let kind_version = parts.next().unwrap_or("");
        let (kind, version) = kind_version
            .split_once(' ')
            .ok_or_else(|| perr(1, format!("malformed version header {kind_version:?}")))?;
        if kind != expected_kind {
            return Err(FormatError::WrongKind {
                path: path.to_path_buf(),
                expected_kind: expected_kind.to_string(),
                found_kind: kind.to_string(),
            });
        }
        let major: u32 = version
            .trim()
            .strip_prefix('v')
            .and_then(|v| v.split('.').next())
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| perr(1, format!("malformed version {version:?}")))?;
        if major != FORMAT_MAJOR {
            return Err(FormatError::SchemaVersion {
                path: path.to_path_buf(),
                kind: kind.to_string(),
                supported: FORMAT_MAJOR,
                found: major,
            });
        }
        let mut fields = BTreeMap::new();
        for p in parts.filter(|p| !p.is_empty()) {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| perr(1, format!("malformed header field {p:?}")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }

        let mut consumed = first_raw.len();
        let mut line_no = 1u64;
        let mut config = None;
        for line in lines {
            let trimmed = line.trim_end();
            let Some(comment) = trimmed.strip_prefix('#') else {
                break;
            };
            line_no += 1;
            consumed += line.len();
            if let Some(json) = comment.trim_start().strip_prefix("config ") {
                config = Some(
                    serde_json::from_str(json)
                        .map_err(|e| perr(line_no, format!("invalid config record: {e}")))?,
                );
            }
        }
        let body = text.get(consumed.min(text.len())..).unwrap_or("").to_string();
        Ok(Document {
            path: path.to_path_buf(),
            header: Header {
                kind: kind.to_string(),
                major,
                fields,
                config,
            },
            body,
            body_first_line: line_no + 1,
        })
    }

    /// Data records as `(line number, fields)`, after checking the column row.
    fn records(&self, columns: &[&str]) -> FormatResult<Vec<(u64, Vec<String>)>> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(self.body.as_bytes());
        let head = rdr.headers().map_err(|e| self.csv_err(e))?.clone();
        let found: Vec<&str> = head.iter().collect();
        if !self.body.trim().is_empty() && found != columns {
            return Err(FormatError::Parse {
                path: self.path.clone(),
                line: self.body_first_line,
                msg: format!("expected columns {columns:?}, found {found:?}"),
            });
        }
        let mut out = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| self.csv_err(e))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0) + self.body_first_line - 1;
            if rec.len() != columns.len() {
                return Err(FormatError::Parse {
                    path: self.path.clone(),
                    line,
                    msg: format!("expected {} fields, found {}", columns.len(), rec.len()),
                });
            }
            out.push((line, rec.iter().map(str::to_string).collect()));
        }
        Ok(out)
    }

    fn csv_err(&self, e: csv::Error) -> FormatError {
        let line = e.position().map(|p| p.line()).unwrap_or(0) + self.body_first_line - 1;
        FormatError::Parse {
            path: self.path.clone(),
            line,
            msg: e.to_string(),
        }
    }

    fn perr(&self, line: u64, msg: impl Into<String>) -> FormatError {
        FormatError::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn parse_list<T: std::str::FromStr>(&self, line: u64, column: &str, cell: &str) -> FormatResult<Vec<T>> {
        if cell.is_empty() {
            return Ok(Vec::new());
        }
        cell.split(';')
            .map(|x| {
                x.trim()
                    .parse()
                    .map_err(|_| self.perr(line, format!("column {column}: cannot parse {x:?}")))
            })
            .collect()
    }

    fn parse_cell<T: std::str::FromStr>(&self, line: u64, column: &str, cell: &str) -> FormatResult<T> {
        cell.parse()
            .map_err(|_| self.perr(line, format!("column {column}: cannot parse {cell:?}")))
    }
}

fn csv_writer(out: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::NonNumeric)
        .from_writer(out)
}

fn finish(path: &Path, mut text: String, rows: Vec<Vec<String>>, columns: &[&str]) -> FormatResult<()> {
    let mut body = Vec::new();
    {
        let mut w = csv_writer(&mut body);
        let write = |w: &mut csv::Writer<&mut Vec<u8>>, rec: &[String]| {
            w.write_record(rec).map_err(|e| FormatError::Invalid {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })
        };
        write(&mut w, &columns.iter().map(|c| c.to_string()).collect::<Vec<_>>())?;
        for r in &rows {
            write(&mut w, r)?;
        }
        w.flush().map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    text.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> FormatResult<()> {
    let io = |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}

// ---------------------------------------------------------------- streams

/// Identification of a stream file.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamMeta {
    pub n: usize,
    pub r: Option<usize>,
    pub seed: Option<u64>,
    /// Effective configuration of the run that wrote the file.
    pub config: Option<serde_json::Value>,
}

const STREAM_COLUMNS: [&str; 3] = ["t", "mask", "values"];

/// Writes frames with values listed only on their masks.
pub fn write_stream(path: &Path, meta: &StreamMeta, frames: &[Frame]) -> FormatResult<()> {
    let mut h = Header::new(STREAM_KIND).with("n", meta.n);
    if let Some(r) = meta.r {
        h = h.with("r", r);
    }
    if let Some(seed) = meta.seed {
        h = h.with("seed", seed);
    }
    if let Some(cfg) = &meta.config {
        h = h.with_config(cfg.clone());
    }
    let mut text = String::new();
    h.render(&mut text, &["n", "r", "seed"]);
    let mut rows = Vec::with_capacity(frames.len());
    for (t, f) in frames.iter().enumerate() {
        if f.ambient_dim() != meta.n {
            return Err(FormatError::Invalid {
                path: path.to_path_buf(),
                msg: format!("frame {t} has dimension {}, stream has n={}", f.ambient_dim(), meta.n),
            });
        }
        rows.push(vec![
            t.to_string(),
            join(f.mask().indices()),
            join_reals(&f.observed()),
        ]);
    }
    finish(path, text, rows, &STREAM_COLUMNS)
}

pub fn read_stream(path: &Path) -> FormatResult<(StreamMeta, Vec<Frame>)> {
    let doc = Document::read(path, STREAM_KIND)?;
    let meta = StreamMeta {
        n: doc.header.require("n", path)?,
        r: doc.header.get("r", path)?,
        seed: doc.header.get("seed", path)?,
        config: doc.header.config.clone(),
    };
    if meta.n == 0 {
        return Err(doc.perr(1, "n must be positive"));
    }
    let mut frames = Vec::new();
    for (line, rec) in doc.records(&STREAM_COLUMNS)? {
        let t: usize = doc.parse_cell(line, "t", &rec[0])?;
        if t != frames.len() {
            return Err(doc.perr(line, format!("expected frame {}, found t={t}", frames.len())));
        }
        let idx: Vec<usize> = doc.parse_list(line, "mask", &rec[1])?;
        let vals: Vec<f64> = doc.parse_list(line, "values", &rec[2])?;
        let mask = ObservationMask::new(meta.n, idx).map_err(|e| doc.perr(line, e.to_string()))?;
        let frame = Frame::from_observed(mask, &vals).map_err(|e| doc.perr(line, e.to_string()))?;
        frames.push(frame);
    }
    Ok((meta, frames))
}

// ---------------------------------------------------------------- matrices

/// Dense matrix, one CSV row per matrix row.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> FormatResult<()> {
    let mut text = String::new();
    Header::new(MATRIX_KIND)
        .with("rows", m.nrows())
        .with("cols", m.ncols())
        .render(&mut text, &["rows", "cols"]);
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_real(m[(i, j)])).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn read_matrix(path: &Path) -> FormatResult<DMatrix<f64>> {
    let doc = Document::read(path, MATRIX_KIND)?;
    let rows: usize = doc.header.require("rows", path)?;
    let cols: usize = doc.header.require("cols", path)?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut count = 0;
    for (k, line) in doc.body.lines().enumerate() {
        let line_no = doc.body_first_line + k as u64;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|x| doc.parse_cell(line_no, "value", x.trim()))
            .collect::<FormatResult<_>>()?;
        if vals.len() != cols {
            return Err(doc.perr(line_no, format!("expected {cols} values, found {}", vals.len())));
        }
        data.extend(vals);
        count += 1;
    }
    if count != rows {
        return Err(doc.perr(doc.body_first_line, format!("expected {rows} rows, found {count}")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

// ---------------------------------------------------------------- ground truth

const TRUTH_COLUMNS: [&str; 5] = ["t", "basis", "coeffs", "outlier_support", "outlier_values"];

fn basis_file_name(k: usize) -> String {
    format!("basis_{k:05}.csv")
}

/// Writes `truth.csv`-style records to `path` and one dense basis snapshot per
/// distinct basis next to it. Rows reference their snapshot by file name.
pub fn write_truth(path: &Path, meta: &StreamMeta, truth: &GroundTruth) -> FormatResult<()> {
    let dir = path.parent().unwrap_or(Path::new(""));
    for (k, b) in truth.bases.iter().enumerate() {
        write_matrix(&dir.join(basis_file_name(k)), b)?;
    }
    let mut text = String::new();
    let mut h = Header::new(TRUTH_KIND)
        .with("n", meta.n)
        .with("frames", truth.num_frames())
        .with("bases", truth.bases.len());
    if let Some(r) = meta.r {
        h = h.with("r", r);
    }
    if let Some(seed) = meta.seed {
        h = h.with("seed", seed);
    }
    if let Some(cfg) = &meta.config {
        h = h.with_config(cfg.clone());
    }
    h.render(&mut text, &["n", "r", "seed", "frames", "bases"]);
    let rows = (0..truth.num_frames())
        .map(|t| {
            let support = &truth.outlier_supports[t];
            vec![
                t.to_string(),
                basis_file_name(truth.basis_index(t)),
                join_reals(truth.coeffs[t].iter()),
                join(support),
                join_reals(support.iter().map(|&i| &truth.outliers[t][i])),
            ]
        })
        .collect();
    finish(path, text, rows, &TRUTH_COLUMNS)
}

pub fn read_truth(path: &Path) -> FormatResult<GroundTruth> {
    let doc = Document::read(path, TRUTH_KIND)?;
    let n: usize = doc.header.require("n", path)?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let mut bases: Vec<DMatrix<f64>> = Vec::new();
    let mut names: BTreeMap<String, usize> = BTreeMap::new();
    let mut truth = GroundTruth {
        bases: Vec::new(),
        coeffs: Vec::new(),
        outlier_supports: Vec::new(),
        outliers: Vec::new(),
        noise: None,
        clean_frames: Vec::new(),
    };
    let mut basis_of_frame = Vec::new();
    for (line, rec) in doc.records(&TRUTH_COLUMNS)? {
        let t: usize = doc.parse_cell(line, "t", &rec[0])?;
        if t != truth.coeffs.len() {
            return Err(doc.perr(line, format!("expected frame {}, found t={t}", truth.coeffs.len())));
        }
        let k = match names.get(&rec[1]) {
            Some(&k) => k,
            None => {
                let m = read_matrix(&dir.join(&rec[1]))?;
                if m.nrows() != n {
                    return Err(doc.perr(line, format!("basis {} has {} rows, expected n={n}", rec[1], m.nrows())));
                }
                bases.push(m);
                names.insert(rec[1].clone(), bases.len() - 1);
                bases.len() - 1
            }
        };
        basis_of_frame.push(k);
        let coeffs = DVector::from_vec(doc.parse_list::<f64>(line, "coeffs", &rec[2])?);
        if coeffs.len() != bases[k].ncols() {
            return Err(doc.perr(
                line,
                format!("{} coefficients for a rank-{} basis", coeffs.len(), bases[k].ncols()),
            ));
        }
        let support: Vec<usize> = doc.parse_list(line, "outlier_support", &rec[3])?;
        let values: Vec<f64> = doc.parse_list(line, "outlier_values", &rec[4])?;
        if support.len() != values.len() || support.iter().any(|&i| i >= n) {
            return Err(doc.perr(line, "outlier support and values are inconsistent"));
        }
        let mut outliers = DVector::zeros(n);
        for (&i, &v) in support.iter().zip(&values) {
            outliers[i] = v;
        }
        truth.clean_frames.push(&bases[k] * &coeffs);
        truth.coeffs.push(coeffs);
        truth.outlier_supports.push(support);
        truth.outliers.push(outliers);
    }
    // stationary streams reference a single basis
    truth.bases = if bases.len() == 1 {
        bases
    } else {
        basis_of_frame.iter().map(|&k| bases[k].clone()).collect()
    };
    Ok(truth)
}

// ---------------------------------------------------------------- traces

/// One row of a trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub inner_iters: usize,
    pub mu: f64,
    pub eta: f64,
    pub residual_norm: f64,
    pub loss: f64,
    pub s_nnz: usize,
}

impl From<&crate::tracker::FrameTrace> for TraceRow {
    fn from(tr: &crate::tracker::FrameTrace) -> Self {
        TraceRow {
            t: tr.frame_index,
            inner_iters: tr.inner_iterations,
            mu: tr.mu_used,
            eta: tr.eta,
            residual_norm: tr.residual_norm,
            loss: tr.fit.final_loss,
            s_nnz: tr.fit.outlier_nnz(),
        }
    }
}

pub fn write_trace(path: &Path, config: &serde_json::Value, rows: &[TraceRow]) -> FormatResult<()> {
    let mut text = String::new();
    Header::new(TRACE_KIND)
        .with("frames", rows.len())
        .with_config(config.clone())
        .render(&mut text, &["frames"]);
    let rows = rows
        .iter()
        .map(|r| {
            vec![
                r.t.to_string(),
                r.inner_iters.to_string(),
                fmt_real(r.mu),
                fmt_real(r.eta),
                fmt_real(r.residual_norm),
                fmt_real(r.loss),
                r.s_nnz.to_string(),
            ]
        })
        .collect();
    finish(path, text, rows, &TRACE_COLUMNS)
}

/// Reads a trace and the effective-config record from its header.
pub fn read_trace(path: &Path) -> FormatResult<(Option<serde_json::Value>, Vec<TraceRow>)> {
    let doc = Document::read(path, TRACE_KIND)?;
    let mut rows = Vec::new();
    for (line, rec) in doc.records(&TRACE_COLUMNS)? {
        rows.push(TraceRow {
            t: doc.parse_cell(line, "t", &rec[0])?,
            inner_iters: doc.parse_cell(line, "inner_iters", &rec[1])?,
            mu: doc.parse_cell(line, "mu", &rec[2])?,
            eta: doc.parse_cell(line, "eta", &rec[3])?,
            residual_norm: doc.parse_cell(line, "residual_norm", &rec[4])?,
            loss: doc.parse_cell(line, "loss", &rec[5])?,
            s_nnz: doc.parse_cell(line, "s_nnz", &rec[6])?,
        });
    }
    Ok((doc.header.config.clone(), rows))
}

// ---------------------------------------------------------------- estimates

const ESTIMATE_COLUMNS: [&str; 4] = ["t", "clean_estimate", "outliers", "basis"];

/// Per-frame estimates: the clean-frame estimate, the non-zero outliers as
/// `index:value` pairs, and the column-major post-update basis when a
/// snapshot was kept for that frame.
pub fn write_estimates(path: &Path, n: usize, r: usize, estimates: &[FrameEstimate]) -> FormatResult<()> {
    let mut text = String::new();
    Header::new(ESTIMATES_KIND)
        .with("n", n)
        .with("r", r)
        .with("frames", estimates.len())
        .render(&mut text, &["n", "r", "frames"]);
    let rows = estimates
        .iter()
        .map(|e| {
            let sparse = join(
                e.outliers
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| format!("{i}:{}", fmt_real(*v))),
            );
            vec![
                e.frame_index.to_string(),
                join_reals(e.clean_estimate.iter()),
                sparse,
                e.basis.as_ref().map(|b| join_reals(b.iter())).unwrap_or_default(),
            ]
        })
        .collect();
    finish(path, text, rows, &ESTIMATE_COLUMNS)
}

pub fn read_estimates(path: &Path) -> FormatResult<Vec<FrameEstimate>> {
    let doc = Document::read(path, ESTIMATES_KIND)?;
    let n: usize = doc.header.require("n", path)?;
    let r: usize = doc.header.require("r", path)?;
    let mut out = Vec::new();
    for (line, rec) in doc.records(&ESTIMATE_COLUMNS)? {
        let t: usize = doc.parse_cell(line, "t", &rec[0])?;
        let clean: Vec<f64> = doc.parse_list(line, "clean_estimate", &rec[1])?;
        if clean.len() != n {
            return Err(doc.perr(line, format!("clean_estimate has {} values, expected n={n}", clean.len())));
        }
        let mut outliers = DVector::zeros(n);
        if !rec[2].is_empty() {
            for pair in rec[2].split(';') {
                let (i, v) = pair
                    .split_once(':')
                    .ok_or_else(|| doc.perr(line, format!("column outliers: malformed pair {pair:?}")))?;
                let i: usize = doc.parse_cell(line, "outliers", i)?;
                if i >= n {
                    return Err(doc.perr(line, format!("outlier index {i} out of range")));
                }
                outliers[i] = doc.parse_cell(line, "outliers", v)?;
            }
        }
        let basis: Vec<f64> = doc.parse_list(line, "basis", &rec[3])?;
        let basis = match basis.len() {
            0 => None,
            k if k == n * r => Some(DMatrix::from_column_slice(n, r, &basis)),
            k => return Err(doc.perr(line, format!("basis has {k} values, expected {}", n * r))),
        };
        out.push(FrameEstimate {
            frame_index: t,
            clean_estimate: DVector::from_vec(clean),
            outliers,
            basis,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------- reports

pub fn report_to_string(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_report(path: &Path, report: &EvalReport) -> FormatResult<()> {
    write_text(path, &report_to_string(report))
}

pub fn read_report(path: &Path) -> FormatResult<EvalReport> {
    let text = fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| FormatError::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    })?;
    let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != REPORT_SCHEMA_VERSION {
        return Err(FormatError::SchemaVersion {
            path: path.to_path_buf(),
            kind: "report".into(),
            supported: REPORT_SCHEMA_VERSION,
            found,
        });
    }
    serde_json::from_value(value).map_err(|e| FormatError::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_roundtrip_and_version_rejection() {
        let p = Path::new("x.csv");
        let mut text = String::new();
        Header::new(STREAM_KIND)
            .with("n", 3)
            .with_config(serde_json::json!({"a": [1, 2]}))
            .render(&mut text, &["n"]);
        text.push_str("t,mask,values\n");
        let doc = Document::parse(p, &text, STREAM_KIND).unwrap();
        assert_eq!(doc.header.fields["n"], "3");
        assert_eq!(doc.header.config, Some(serde_json::json!({"a": [1, 2]})));
        assert_eq!(doc.body_first_line, 3);

        let err = Document::parse(p, "# subtrack-stream v2, n=3\n", STREAM_KIND).err().unwrap();
        let msg = err.to_string();
        assert!(msg.contains("v1") && msg.contains("v2"), "{msg}");
        assert!(matches!(
            Document::parse(p, "# subtrack-trace v1\n", STREAM_KIND),
            Err(FormatError::WrongKind { .. })
        ));
        assert!(Document::parse(p, "t,mask\n", STREAM_KIND).is_err());
    }

    #[test]
    fn reals_use_seventeen_digits() {
        assert_eq!(fmt_real(0.1), "1.0000000000000001e-1");
        for v in [0.1, -1.0 / 3.0, 1e-300, 12345.678901234567] {
            assert_eq!(fmt_real(v).parse::<f64>().unwrap(), v);
        }
    }
}
