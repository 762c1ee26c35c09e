//! Per-run and aggregate summaries built from traces.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use galet_core::metrics::{default_k_min, fit_rate};
use serde::{Deserialize, Serialize};

use crate::trace::{RunState, TraceError, TraceFile, TraceRow, SCHEMA_VERSION};

/// A run counts as converged when its final residuals are all at or below
/// this, or when it stopped early on its own tolerance.
pub const CONVERGED_TOL: f64 = 1e-6;

/// Final optimality gaps at or below this are flagged `gap_ok`.
pub const GAP_TOL: f64 = 1e-6;

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SlopeEntry {
    Fit {
        slope: f64,
        intercept: f64,
        r_squared: f64,
        k_min: usize,
        k_max: usize,
    },
    Note(String),
}

impl SlopeEntry {
    pub fn slope(&self) -> Option<f64> {
        match self {
            Self::Fit { slope, .. } => Some(*slope),
            Self::Note(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    pub r_x: SlopeEntry,
    pub r_w: SlopeEntry,
    pub r_y: SlopeEntry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    NotConverged,
    Diverged,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::NotConverged => "not_converged",
            Self::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub file: String,
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
    pub init_index: usize,
    pub status: RunState,
    pub outcome: Outcome,
    pub diverged: bool,
    pub reason: Option<String>,
    pub iterations: usize,
    pub final_r_x: Option<f64>,
    pub final_r_w: Option<f64>,
    pub final_r_y: Option<f64>,
    pub r_y_approx: bool,
    pub final_optimality_gap: Option<f64>,
    pub final_val_kkt_score: Option<f64>,
    pub gap_ok: Option<bool>,
    pub w_dagger_error: Option<f64>,
    pub slopes: Slopes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestRun {
    pub run: usize,
    /// `optimality_gap` when the problem has one, else `max_residual`.
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub file: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub run_count: usize,
    pub runs: Vec<RunSummary>,
    pub converged: Vec<usize>,
    pub not_converged: Vec<usize>,
    pub diverged: Vec<usize>,
    pub best_per_problem: BTreeMap<String, BestRun>,
    pub skipped: Vec<Skipped>,
}

fn slope_of(rows: &[TraceRow], pick: impl Fn(&TraceRow) -> Option<f64>) -> SlopeEntry {
    let series: Option<Vec<(usize, f64)>> = rows.iter().map(|r| pick(r).map(|v| (r.k + 1, v))).collect();
    let Some(series) = series else {
        return SlopeEntry::Note("unavailable".into());
    };
    let k_max = series.last().map_or(0, |s| s.0);
    let k_min = default_k_min(k_max);
    if series.iter().filter(|s| s.0 >= k_min).count() < 3 {
        return SlopeEntry::Note("insufficient data".into());
    }
    if series.iter().all(|s| s.1 == 0.0) {
        return SlopeEntry::Note("identically zero".into());
    }
    match fit_rate(&series, k_min) {
        Ok(f) => SlopeEntry::Fit {
            slope: f.slope,
            intercept: f.intercept,
            r_squared: f.r_squared,
            k_min: f.k_range.0,
            k_max: f.k_range.1,
        },
        Err(e) => SlopeEntry::Note(format!("undefined: {e}")),
    }
}

pub fn summarize_run(file: &str, t: &TraceFile) -> RunSummary {
    let h = &t.header;
    let last = t.last();
    let diverged = h.status == RunState::Diverged;
    let final_max = last.map(|r| r.r_x.max(r.r_w).max(r.r_y.unwrap_or(0.0)));
    let outcome = if diverged {
        Outcome::Diverged
    } else if h.status == RunState::Converged || final_max.is_some_and(|m| m <= CONVERGED_TOL) {
        Outcome::Converged
    } else {
        Outcome::NotConverged
    };
    let final_optimality_gap = last.and_then(|r| r.optimality_gap);
    RunSummary {
        run: h.run,
        file: file.to_string(),
        problem: h.problem.clone(),
        seed: h.seed,
        alpha: h.alpha,
        beta: h.beta,
        rho: h.rho,
        n_inner: h.n_inner,
        t_inner: h.t_inner,
        k_outer: h.k_outer,
        w_variant: h.w_variant.clone(),
        w_warm_start: h.w_warm_start,
        init_index: h.init_index,
        status: h.status.clone(),
        outcome,
        diverged,
        reason: h.reason.clone(),
        iterations: t.rows.len(),
        final_r_x: last.map(|r| r.r_x),
        final_r_w: last.map(|r| r.r_w),
        final_r_y: last.and_then(|r| r.r_y),
        r_y_approx: h.r_y_approx,
        final_optimality_gap,
        final_val_kkt_score: last.and_then(|r| r.val_kkt_score),
        gap_ok: final_optimality_gap.map(|g| g <= GAP_TOL),
        w_dagger_error: h.w_dagger_error,
        slopes: Slopes {
            r_x: slope_of(&t.rows, |r| Some(r.r_x)),
            r_w: slope_of(&t.rows, |r| Some(r.r_w)),
            r_y: slope_of(&t.rows, |r| r.r_y),
        },
    }
}

/// Builds the summary from `(file name, trace)` pairs, ordered by run index.
pub fn summarize_traces(traces: &[(String, TraceFile)], skipped: Vec<Skipped>) -> Summary {
    let mut runs: Vec<RunSummary> = traces.iter().map(|(f, t)| summarize_run(f, t)).collect();
    runs.sort_by(|a, b| a.run.cmp(&b.run).then_with(|| a.file.cmp(&b.file)));
    let class = |o: Outcome| {
        runs.iter()
            .filter(|r| r.outcome == o)
            .map(|r| r.run)
            .collect::<Vec<_>>()
    };
    let (converged, not_converged, diverged) = (
        class(Outcome::Converged),
        class(Outcome::NotConverged),
        class(Outcome::Diverged),
    );

    let mut best_per_problem: BTreeMap<String, BestRun> = BTreeMap::new();
    for r in runs.iter().filter(|r| !r.diverged) {
        let candidate = match (r.final_optimality_gap, r.final_r_x) {
            (Some(g), _) => BestRun {
                run: r.run,
                metric: "optimality_gap".into(),
                value: g,
            },
            (None, Some(rx)) => BestRun {
                run: r.run,
                metric: "max_residual".into(),
                value: rx.max(r.final_r_w.unwrap_or(0.0)).max(r.final_r_y.unwrap_or(0.0)),
            },
            (None, None) => continue,
        };
        if !candidate.value.is_finite() {
            continue;
        }
        match best_per_problem.get(&r.problem) {
            Some(b) if b.value <= candidate.value => {}
            _ => {
                best_per_problem.insert(r.problem.clone(), candidate);
            }
        }
    }

    Summary {
        schema_version: SCHEMA_VERSION,
        run_count: runs.len(),
        runs,
        converged,
        not_converged,
        diverged,
        best_per_problem,
        skipped,
    }
}

/// Trace files in `dir`, sorted by name; skips the summary and `-diag`
/// sidecars.
pub fn trace_paths(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            let ext = p.extension().and_then(|e| e.to_str());
            matches!(ext, Some("csv" | "json")) && name != SUMMARY_FILE && !name.ends_with("-diag.csv")
        })
        .collect();
    paths.sort();
    Ok(paths)
}

#[derive(Debug, thiserror::Error)]
pub enum SummarizeError {
    #[error("cannot list {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no valid traces in {0}")]
    NoTraces(PathBuf),
}

/// Loads every trace under `dir`. Malformed files are reported on stderr
/// and listed under `skipped`.
pub fn summarize_dir(dir: &Path) -> Result<Summary, SummarizeError> {
    let paths = trace_paths(dir).map_err(|source| SummarizeError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut traces = Vec::new();
    let mut skipped = Vec::new();
    for p in paths {
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match TraceFile::load(&p) {
            Ok(t) => traces.push((name, t)),
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", p.display());
                skipped.push(Skipped {
                    file: name,
                    reason: e.to_string(),
                });
            }
        }
    }
    if traces.is_empty() {
        return Err(SummarizeError::NoTraces(dir.to_path_buf()));
    }
    Ok(summarize_traces(&traces, skipped))
}

pub fn write_summary(summary: &Summary, path: &Path) -> Result<(), TraceError> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
