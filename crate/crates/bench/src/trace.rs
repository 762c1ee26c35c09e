//! Per-run trace files.
//!
//! CSV traces start with `# key = value` comment lines (values are JSON)
//! followed by the fixed columns of [`TRACE_COLUMNS`]; missing quantities are
//! empty fields. JSON traces hold the same header and rows in one document.
//! Extra per-iteration diagnostics (post-update residuals, Lyapunov value)
//! go to a `-diag` sidecar so the main column set never changes.

use std::io::{BufRead, Write};
use std::path::Path;

use galet_core::solver::TraceRecord;
use serde::{Deserialize, Serialize};

use crate::config::OutputFormat;

pub const SCHEMA_VERSION: u32 = 1;

pub const TRACE_COLUMNS: [&str; 9] = [
    "k",
    "r_x",
    "r_w",
    "r_y",
    "dx_norm_sq",
    "val_kkt_score",
    "optimality_gap",
    "b_k",
    "wall_time_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Completed,
    Converged,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub run: usize,
    pub problem: String,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub n_inner: usize,
    pub t_inner: usize,
    pub k_outer: usize,
    pub w_variant: String,
    pub w_warm_start: bool,
    pub stop_tol: Option<f64>,
    pub init_index: usize,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    /// `r_y` was measured against an estimated `g*`.
    pub r_y_approx: bool,
    pub status: RunState,
    /// Iteration at which the run stopped early or diverged.
    pub status_k: Option<usize>,
    pub reason: Option<String>,
    /// `‖w − w†‖` at the final iterate, when dense checks are on.
    pub w_dagger_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub r_x: f64,
    pub r_w: f64,
    pub r_y: Option<f64>,
    pub dx_norm_sq: f64,
    pub val_kkt_score: Option<f64>,
    pub optimality_gap: Option<f64>,
    pub b_k: Option<f64>,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagRow {
    pub k: usize,
    pub post_r_x: Option<f64>,
    pub post_r_w: Option<f64>,
    pub post_r_y: Option<f64>,
    pub lyapunov: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub rows: Vec<TraceRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<DiagRow>,
}

impl From<&TraceRecord> for TraceRow {
    fn from(r: &TraceRecord) -> Self {
        Self {
            k: r.k,
            r_x: r.residuals.r_x,
            r_w: r.residuals.r_w,
            r_y: r.residuals.r_y,
            dx_norm_sq: r.dx_norm_sq,
            val_kkt_score: r.val_kkt_score,
            optimality_gap: r.optimality_gap,
            b_k: r.b_k,
            wall_time_ms: r.wall_time_ms,
        }
    }
}

impl DiagRow {
    /// `None` when the record carries no extra diagnostics.
    pub fn from_record(r: &TraceRecord) -> Option<Self> {
        if r.post_update.is_none() && r.lyapunov.is_none() {
            return None;
        }
        Some(Self {
            k: r.k,
            post_r_x: r.post_update.map(|p| p.r_x),
            post_r_w: r.post_update.map(|p| p.r_w),
            post_r_y: r.post_update.and_then(|p| p.r_y),
            lyapunov: r.lyapunov,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Malformed(String),
}

fn write_csv_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

impl TraceFile {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), TraceError> {
        let header = serde_json::to_value(&self.header)?;
        for (k, v) in header.as_object().expect("header serializes to an object") {
            writeln!(out, "# {k} = {v}")?;
        }
        if self.rows.is_empty() {
            writeln!(out, "{}", TRACE_COLUMNS.join(","))?;
            return Ok(());
        }
        write_csv_rows(out, &self.rows)
    }

    pub fn write_diag_csv<W: Write>(&self, out: W) -> Result<(), TraceError> {
        write_csv_rows(out, &self.diagnostics)
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<(), TraceError> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, TraceError> {
        let mut header = serde_json::Map::new();
        let mut body = String::new();
        for line in input.lines() {
            let line = line?;
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| TraceError::Malformed(format!("bad header line {line:?}")))?;
                header.insert(k.trim().to_string(), serde_json::from_str(v.trim())?);
            } else {
                body.push_str(&line);
                body.push('\n');
            }
        }
        let header: TraceHeader = serde_json::from_value(header.into())?;
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let cols: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if cols != TRACE_COLUMNS {
            return Err(TraceError::Malformed(format!("unexpected columns {cols:?}")));
        }
        let rows = rdr.deserialize().collect::<Result<Vec<TraceRow>, _>>()?;
        Ok(Self {
            header,
            rows,
            diagnostics: Vec::new(),
        })
    }

    pub fn read_json<R: std::io::Read>(input: R) -> Result<Self, TraceError> {
        Ok(serde_json::from_reader(input)?)
    }

    /// Reads a trace, choosing the format from the file extension.
    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::read_csv(file),
            Some("json") => Self::read_json(file),
            _ => Err(TraceError::Malformed(format!(
                "unknown trace extension: {}",
                path.display()
            ))),
        }
    }

    /// Writes `<stem>.<ext>` (and `<stem>-diag.csv` when there are CSV
    /// diagnostics) into `dir`.
    pub fn save(&self, dir: &Path, stem: &str, format: OutputFormat) -> Result<(), TraceError> {
        let path = dir.join(format!("{stem}.{}", format.extension()));
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        match format {
            OutputFormat::Csv => {
                self.write_csv(&mut out)?;
                if !self.diagnostics.is_empty() {
                    let diag = std::fs::File::create(dir.join(format!("{stem}-diag.csv")))?;
                    self.write_diag_csv(std::io::BufWriter::new(diag))?;
                }
            }
            OutputFormat::Json => self.write_json(&mut out)?,
        }
        out.flush()?;
        Ok(())
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

/// Drops the wall-time column from a CSV trace so two runs can be compared
/// byte for byte.
pub fn strip_wall_time_csv(text: &str) -> String {
    text.lines()
        .map(|l| {
            if l.starts_with('#') {
                l.to_string()
            } else {
                l.rsplit_once(',').map_or(l, |(head, _)| head).to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}
