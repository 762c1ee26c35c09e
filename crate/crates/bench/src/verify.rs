//! The `verify` command: derivative, PL and rank checks for one problem.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use galet_core::linalg::{Vector, DEFAULT_FD_STEP};
use galet_core::oracle::{check_pl_inequality, fd_verify};
use galet_core::problems::{ProblemKind, ProblemParams};
use galet_core::verify::{brute_force_example1_slab, rank_probe, GridOptimum, GridSpec};
use galet_core::{rng, BilevelOracle, Error};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdSection {
    pub points: usize,
    pub step: f64,
    pub rel_tol: f64,
    pub errors: BTreeMap<String, f64>,
    pub max_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlSection {
    pub mu_g: Option<f64>,
    pub points: usize,
    pub failures: usize,
    /// `None` when the check does not apply.
    pub passed: Option<bool>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankCount {
    pub rank_joint: usize,
    pub rank_hessian: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSection {
    pub points: usize,
    pub sampled_from: String,
    pub counts: Vec<RankCount>,
    /// Adding the cross block never raised the rank.
    pub ranks_equal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub problem: String,
    pub seed: u64,
    pub fd: FdSection,
    pub pl: PlSection,
    pub rank: RankSection,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub fd_points: usize,
    pub pl_points: usize,
    pub rank_points: usize,
    pub rel_tol: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            fd_points: 100,
            pl_points: 10_000,
            rank_points: 20,
            rel_tol: 1e-5,
            lo: -3.0,
            hi: 3.0,
        }
    }
}

pub fn box_points(
    oracle: &dyn BilevelOracle,
    n: usize,
    lo: f64,
    hi: f64,
    seed: u64,
) -> Vec<(Vector, Vector)> {
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|_| {
            let x = rng::uniform_vector(&mut r, oracle.dim_x(), lo, hi);
            let y = rng::uniform_vector(&mut r, oracle.dim_y(), lo, hi);
            (x, y)
        })
        .collect()
}

/// Points `x = 0.5, y₁ = sin y₂ − 0.5` with `y₂` uniform in `[lo, hi]`:
/// Example 1's global solution set.
pub fn example1_global_points(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<(Vector, Vector)> {
    let mut r = rng::seeded(seed);
    (0..n)
        .map(|_| {
            let y2 = rng::uniform(&mut r, lo, hi);
            (
                Vector::from_slice(&[0.5]),
                Vector::from_slice(&[y2.sin() - 0.5, y2]),
            )
        })
        .collect()
}

/// Example 1 grid search split into `x` slabs evaluated in parallel. The
/// min-reduction breaks ties by grid index, so the result does not depend on
/// how the slabs are scheduled.
pub fn parallel_brute_force_example1(grid: &GridSpec, feasibility_tol: f64) -> Result<GridOptimum, Error> {
    grid.validate()?;
    let steps = grid.axes.first().map_or(0, |a| a.steps);
    let partials = (0..steps)
        .into_par_iter()
        .map(|i| brute_force_example1_slab(grid, feasibility_tol, i..i + 1))
        .collect::<Result<Vec<_>, _>>()?;
    partials
        .into_iter()
        .fold(None, GridOptimum::merge)
        .ok_or_else(|| Error::Empty(format!("no grid point with g <= {feasibility_tol}")))
}

/// Builds the named problem with `seed` and runs all three checks.
pub fn verify_problem(name: &str, seed: u64, opts: &VerifyOptions) -> Result<VerifyReport, Error> {
    let kind = ProblemKind::from_name(name)
        .ok_or_else(|| Error::InvalidInput(format!("unknown problem {name:?}")))?;
    let params = match ProblemParams::default_for(kind) {
        ProblemParams::SingularLstsq(p) => {
            ProblemParams::SingularLstsq(galet_core::problems::LstsqParams { seed, ..p })
        }
        ProblemParams::ScQuad(p) => ProblemParams::ScQuad(galet_core::problems::ScQuadParams { seed, ..p }),
        ProblemParams::HypercleanSyn(p) => {
            ProblemParams::HypercleanSyn(galet_core::problems::HypercleanParams { seed, ..p })
        }
        p => p,
    };
    let oracle = params.build()?;
    verify_oracle(oracle.as_ref(), kind, seed, opts)
}

pub fn verify_oracle(
    oracle: &dyn BilevelOracle,
    kind: ProblemKind,
    seed: u64,
    opts: &VerifyOptions,
) -> Result<VerifyReport, Error> {
    let pts = box_points(oracle, opts.fd_points, opts.lo, opts.hi, seed.wrapping_add(10));
    let rep = fd_verify(oracle, &pts, DEFAULT_FD_STEP, opts.rel_tol, seed.wrapping_add(11))?;
    let fd = FdSection {
        points: rep.points,
        step: DEFAULT_FD_STEP,
        rel_tol: rep.rel_tol,
        errors: rep.entries().iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        max_error: rep.max_error(),
        passed: rep.passed(),
    };

    let mu_g = oracle.constants().mu_g;
    let pl = match mu_g {
        None => PlSection {
            mu_g,
            points: 0,
            failures: 0,
            passed: None,
            note: Some("no known PL constant".into()),
        },
        Some(mu) => {
            let pts = box_points(oracle, opts.pl_points, opts.lo, opts.hi, seed.wrapping_add(12));
            match check_pl_inequality(oracle, mu, &pts) {
                Ok(checks) => {
                    let failures = checks.iter().filter(|c| !c.pass).count();
                    PlSection {
                        mu_g,
                        points: checks.len(),
                        failures,
                        passed: Some(failures == 0),
                        note: None,
                    }
                }
                Err(Error::Unsupported(msg)) => PlSection {
                    mu_g,
                    points: 0,
                    failures: 0,
                    passed: None,
                    note: Some(msg),
                },
                Err(e) => return Err(e),
            }
        }
    };

    let (rank_pts, sampled_from) = match kind {
        ProblemKind::Example1 => (
            example1_global_points(opts.rank_points, opts.lo, opts.hi, seed.wrapping_add(13)),
            "global solution set",
        ),
        _ => (
            box_points(oracle, opts.rank_points, opts.lo, opts.hi, seed.wrapping_add(13)),
            "uniform box",
        ),
    };
    let ranks = rank_probe(oracle, &rank_pts)?;
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for r in &ranks {
        *counts.entry((r.rank_joint, r.rank_hessian)).or_default() += 1;
    }
    let rank = RankSection {
        points: ranks.len(),
        sampled_from: sampled_from.into(),
        ranks_equal: ranks.iter().all(|r| r.rank_joint == r.rank_hessian),
        counts: counts
            .into_iter()
            .map(|((rank_joint, rank_hessian), count)| RankCount {
                rank_joint,
                rank_hessian,
                count,
            })
            .collect(),
    };

    Ok(VerifyReport {
        problem: oracle.name().to_string(),
        seed,
        passed: fd.passed && pl.passed != Some(false),
        fd,
        pl,
        rank,
    })
}

impl VerifyReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let verdict = |ok: bool| if ok { "ok" } else { "FAILED" };
        let _ = writeln!(s, "problem {} (seed {})", self.problem, self.seed);
        let _ = writeln!(
            s,
            "derivatives: {} points, step {:e}, max relative error {:.3e} (tol {:e}) {}",
            self.fd.points,
            self.fd.step,
            self.fd.max_error,
            self.fd.rel_tol,
            verdict(self.fd.passed)
        );
        for (k, v) in &self.fd.errors {
            let _ = writeln!(s, "  {k:<9} {v:.3e}");
        }
        match (self.pl.passed, self.pl.mu_g) {
            (Some(ok), Some(mu)) => {
                let _ = writeln!(
                    s,
                    "PL inequality (mu_g = {mu}): {} points, {} failures {}",
                    self.pl.points,
                    self.pl.failures,
                    verdict(ok)
                );
            }
            _ => {
                let _ = writeln!(
                    s,
                    "PL inequality: skipped ({})",
                    self.pl.note.as_deref().unwrap_or("n/a")
                );
            }
        }
        let _ = writeln!(
            s,
            "ranks at {} points ({}):",
            self.rank.points, self.rank.sampled_from
        );
        for c in &self.rank.counts {
            let _ = writeln!(
                s,
                "  rank[H, J] = {}, rank H = {}: {} points",
                c.rank_joint, c.rank_hessian, c.count
            );
        }
        let _ = writeln!(s, "overall: {}", verdict(self.passed));
        s
    }
}
