//! Expands a config into runs, executes them in parallel and writes the
//! traces and summary.

use std::path::PathBuf;
use std::time::Instant;

use galet_core::linalg::Vector;
use galet_core::metrics::{minimal_norm_w, GStarMode, APPROX_G_STAR_STEPS};
use galet_core::solver::{galet_run_with_clock, RunStatus, SolverError};
use galet_core::{BilevelOracle, GaletConfig, RunOptions};
use rayon::prelude::*;

use crate::config::{ConfigError, ExperimentConfig};
use crate::summary::{summarize_traces, write_summary, Summary, SUMMARY_FILE};
use crate::trace::{DiagRow, RunState, TraceError, TraceFile, TraceHeader, TraceRow, SCHEMA_VERSION};

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Invalid = 1,
    AllDiverged = 2,
    Partial = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn from_states(states: impl IntoIterator<Item = RunState>) -> Self {
        let (mut total, mut diverged) = (0, 0);
        for s in states {
            total += 1;
            diverged += usize::from(s == RunState::Diverged);
        }
        match diverged {
            0 => Self::Success,
            d if d == total => Self::AllDiverged,
            _ => Self::Partial,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Output { path: PathBuf, source: TraceError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub index: usize,
    pub config: GaletConfig,
    pub init_index: usize,
    pub x0: Vector,
    pub y0: Vector,
}

/// Runs in index order: solver grid points outermost, starting points inner.
/// With `single`, a grid of more than one point is rejected.
pub fn plan(
    cfg: &ExperimentConfig,
    oracle: &dyn BilevelOracle,
    single: bool,
) -> Result<Vec<RunSpec>, ConfigError> {
    if single && cfg.solver.len() != 1 {
        return Err(ConfigError {
            line: None,
            message: format!(
                "`run` takes one value per solver field but the config expands to {} settings; use `sweep`",
                cfg.solver.len()
            ),
        });
    }
    let inits = cfg.init_points(oracle.dim_x(), oracle.dim_y())?;
    let mut specs = Vec::new();
    for config in cfg.solver.expand() {
        for (init_index, (x0, y0)) in inits.iter().enumerate() {
            specs.push(RunSpec {
                index: specs.len(),
                config: config.clone(),
                init_index,
                x0: x0.clone(),
                y0: y0.clone(),
            });
        }
    }
    Ok(specs)
}

pub fn run_options(cfg: &ExperimentConfig, oracle: &dyn BilevelOracle, x0: &Vector) -> RunOptions {
    let g_star_mode = if oracle.g_star(x0).is_some() {
        GStarMode::Exact
    } else {
        GStarMode::ApproximateFallback {
            steps: APPROX_G_STAR_STEPS,
        }
    };
    RunOptions {
        g_star_mode,
        record_b_k: cfg.diagnostics.record_b_k,
        record_post_update: cfg.diagnostics.record_post_update,
        lyapunov_c: cfg.diagnostics.lyapunov_c,
    }
}

/// Executes one run. Divergence is recorded in the trace, not returned.
pub fn execute(cfg: &ExperimentConfig, oracle: &dyn BilevelOracle, spec: &RunSpec) -> TraceFile {
    let options = run_options(cfg, oracle, &spec.x0);
    let start = Instant::now();
    let clock = move || start.elapsed().as_secs_f64() * 1e3;
    let c = &spec.config;
    let mut header = TraceHeader {
        schema_version: SCHEMA_VERSION,
        run: spec.index,
        problem: oracle.name().to_string(),
        seed: cfg.seed,
        alpha: c.alpha,
        beta: c.beta,
        rho: c.rho,
        n_inner: c.n_inner,
        t_inner: c.t_inner,
        k_outer: c.k_outer,
        w_variant: c.w_variant.name().to_string(),
        w_warm_start: c.w_warm_start,
        stop_tol: c.stop_tol,
        init_index: spec.init_index,
        x0: spec.x0.to_vec(),
        y0: spec.y0.to_vec(),
        r_y_approx: matches!(options.g_star_mode, GStarMode::ApproximateFallback { .. }),
        status: RunState::Completed,
        status_k: None,
        reason: None,
        w_dagger_error: None,
    };
    let records = match galet_run_with_clock(oracle, &spec.x0, &spec.y0, c, &options, &clock) {
        Ok(run) => {
            if let RunStatus::Converged { k } = run.status {
                header.status = RunState::Converged;
                header.status_k = Some(k);
            }
            if cfg.diagnostics.dense_checks {
                let it = &run.final_iterate;
                header.w_dagger_error = minimal_norm_w(oracle, &it.x, &it.y).ok().map(|wd| it.w.dist(&wd));
            }
            run.trace
        }
        Err(SolverError::Diverged(d)) => {
            header.status = RunState::Diverged;
            header.status_k = Some(d.k);
            header.reason = Some(d.reason);
            d.trace
        }
        Err(SolverError::Invalid(e)) => {
            header.status = RunState::Diverged;
            header.reason = Some(format!("invalid run: {e}"));
            Vec::new()
        }
    };
    TraceFile {
        header,
        rows: records.iter().map(TraceRow::from).collect(),
        diagnostics: records.iter().filter_map(DiagRow::from_record).collect(),
    }
}

pub struct ExperimentOutcome {
    pub traces: Vec<(String, TraceFile)>,
    pub summary: Summary,
    pub out_dir: PathBuf,
}

impl ExperimentOutcome {
    pub fn exit_status(&self) -> ExitStatus {
        ExitStatus::from_states(self.traces.iter().map(|(_, t)| t.header.status.clone()))
    }
}

pub fn run_stem(index: usize) -> String {
    format!("run-{index:04}")
}

/// Plans, executes on up to `workers` threads, then writes one trace per run
/// plus `summary.json` into the configured output directory.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    workers: usize,
    single: bool,
) -> Result<ExperimentOutcome, BenchError> {
    let oracle = cfg.problem.build().map_err(|e| ConfigError {
        line: None,
        message: format!("cannot build problem: {e}"),
    })?;
    let oracle: &dyn BilevelOracle = oracle.as_ref();
    let specs = plan(cfg, oracle, single)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    let traces: Vec<TraceFile> = pool.install(|| specs.par_iter().map(|s| execute(cfg, oracle, s)).collect());

    let dir = cfg.out_dir.clone();
    let io_err = |path: PathBuf| move |source: TraceError| BenchError::Output { path, source };
    std::fs::create_dir_all(&dir).map_err(|e| io_err(dir.clone())(e.into()))?;
    let mut named = Vec::with_capacity(traces.len());
    for t in traces {
        let stem = run_stem(t.header.run);
        t.save(&dir, &stem, cfg.format).map_err(io_err(dir.join(&stem)))?;
        named.push((format!("{stem}.{}", cfg.format.extension()), t));
    }
    let summary = summarize_traces(&named, Vec::new());
    let summary_path = dir.join(SUMMARY_FILE);
    write_summary(&summary, &summary_path).map_err(io_err(summary_path.clone()))?;
    Ok(ExperimentOutcome {
        traces: named,
        summary,
        out_dir: dir,
    })
}
