//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

#![allow(clippy::type_complexity)]

use std::time::Instant;

use galet_bench::config::EXAMPLE1_DEFAULT_INITS;
use galet_bench::experiment::run_experiment;
use galet_bench::trace::strip_wall_time_csv;
use galet_bench::verify::{box_points, example1_global_points, parallel_brute_force_example1};
use galet_bench::ExperimentConfig;
use galet_core::linalg::{singular_values, Vector, DEFAULT_FD_STEP};
use galet_core::metrics::{fit_rate, val_kkt_score};
use galet_core::oracle::{check_pl_inequality, fd_verify};
use galet_core::problems::{
    generate_hyperclean_data, scq_hypergradient, Example1Problem, HypercleanParams, LstsqParams,
    ScQuadParams, SingularLstsqProblem, StronglyConvexQuadProblem,
};
use galet_core::solver::{galet_run, galet_step, w_solve, GaletRun};
use galet_core::verify::{rank_probe, w_gd_vs_pinv, GridSpec};
use galet_core::{metrics, BilevelOracle, GaletConfig, RunOptions, WVariant};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn split(p: &[f64; 3]) -> (Vector, Vector) {
    (Vector::from_slice(&p[..1]), Vector::from_slice(&p[1..]))
}

fn example1_runs(config: &GaletConfig, options: &RunOptions) -> Vec<GaletRun> {
    EXAMPLE1_DEFAULT_INITS
        .iter()
        .map(|p| {
            let (x0, y0) = split(p);
            galet_run(&Example1Problem, &x0, &y0, config, options).expect("example 1 run")
        })
        .collect()
}

fn final_gap_and_residual(run: &GaletRun) -> (f64, f64) {
    let it = &run.final_iterate;
    let gap = Example1Problem.optimality_gap(&it.x, &it.y).unwrap();
    (
        gap,
        metrics::residuals(&Example1Problem, &it.x, &it.y, &it.w).max(),
    )
}

/// α = 0.3, β = 1, N = 1, ρ = 0.1, T = 1, K = 1000, w restarted at zero.
fn defaults() -> GaletConfig {
    GaletConfig::default()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let runs = example1_runs(&defaults(), &RunOptions::default());
    let secs = start.elapsed().as_secs_f64() / runs.len() as f64;
    let finals: Vec<(f64, f64)> = runs.iter().map(final_gap_and_residual).collect();
    let pass = finals.iter().all(|&(g, r)| g <= 1e-6 && r <= 1e-6) && secs <= 1.0;

    let warm = GaletConfig {
        w_warm_start: true,
        ..defaults()
    };
    let warm_gaps: Vec<String> = example1_runs(&warm, &RunOptions::default())
        .iter()
        .map(|r| format!("{:.1e}", final_gap_and_residual(r).0))
        .collect();
    let cells: Vec<String> = finals
        .iter()
        .map(|(g, r)| format!("gap {g:.3e} max R {r:.3e}"))
        .collect();
    verdict(
        pass,
        format!(
            "{}; {secs:.3}s per run (warm-started w: gaps {})",
            cells.join(", "),
            warm_gaps.join(", ")
        ),
    )
}

fn criterion_2() -> Verdict {
    let runs = example1_runs(&defaults(), &RunOptions::default());
    let mut pass = true;
    let mut cells = Vec::new();
    for run in &runs {
        let it = &run.final_iterate;
        let score = val_kkt_score(&Example1Problem, &it.x, &it.y).unwrap();
        let r = metrics::residuals(&Example1Problem, &it.x, &it.y, &it.w).max();
        pass &= score >= 0.9 && r <= 1e-6;
        cells.push(format!("val_kkt {score:.3} max R {r:.3e}"));
    }
    verdict(pass, cells.join(", "))
}

fn criterion_3() -> Verdict {
    let sc = GaletConfig {
        w_variant: WVariant::Sc,
        ..defaults()
    };
    let gaps: Vec<f64> = example1_runs(&sc, &RunOptions::default())
        .iter()
        .map(|r| final_gap_and_residual(r).0)
        .collect();
    verdict(
        gaps.iter().all(|&g| g >= 1e-2),
        format!("sc variant final gaps {:.3e}, {:.3e}", gaps[0], gaps[1]),
    )
}

fn slopes_ok(run: &GaletRun, label: &str, cells: &mut Vec<String>) -> bool {
    let mut ok = true;
    let pick: [(&str, fn(&galet_core::ResidualTriple) -> f64); 3] = [
        ("R_x", |r| r.r_x),
        ("R_w", |r| r.r_w),
        ("R_y", |r| r.r_y.unwrap_or(f64::NAN)),
    ];
    for (name, get) in pick {
        let series: Vec<(usize, f64)> = run.trace.iter().map(|t| (t.k + 1, get(&t.residuals))).collect();
        match fit_rate(&series, 100) {
            Ok(f) => {
                let good = f.slope <= -0.7 && f.r_squared >= 0.9;
                ok &= good;
                cells.push(format!("{label} {name} {:.3} (r2 {:.3})", f.slope, f.r_squared));
            }
            Err(e) => {
                ok = false;
                cells.push(format!("{label} {name} fit failed: {e}"));
            }
        }
    }
    ok
}

fn criterion_4() -> Verdict {
    let mut cells = Vec::new();
    let mut pass = true;
    let e1 = GaletConfig {
        rho: 0.5,
        t_inner: 50,
        k_outer: 5000,
        ..defaults()
    };
    for (i, run) in example1_runs(&e1, &RunOptions::default()).iter().enumerate() {
        pass &= slopes_ok(run, &format!("ex1[{i}]"), &mut cells);
    }
    let p = SingularLstsqProblem::generate(&LstsqParams::default()).unwrap();
    let l = p.constants().l_g1.unwrap();
    let ls = GaletConfig {
        alpha: 0.1,
        beta: 1.0 / l,
        rho: 1.0 / (l * l),
        t_inner: 50,
        k_outer: 5000,
        ..defaults()
    };
    for (i, (x0, y0)) in box_points(&p, 2, -3.0, 3.0, 1).iter().enumerate() {
        let run = galet_run(&p, x0, y0, &ls, &RunOptions::default()).unwrap();
        pass &= slopes_ok(&run, &format!("lstsq[{i}]"), &mut cells);
    }
    verdict(pass, cells.join(", "))
}

fn criterion_5() -> Verdict {
    let mut worst_err = 0.0f64;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut pass = true;
    for seed in 0..20 {
        let p = SingularLstsqProblem::generate(&LstsqParams {
            d_y: 6,
            m_rows: 3,
            seed,
            ..LstsqParams::default()
        })
        .unwrap();
        let (x, y) = box_points(&p, 1, -3.0, 3.0, 100 + seed).remove(0);
        let h = p.hessian_yy_dense(&x, &y).unwrap();
        let smax = singular_values(&h).unwrap()[0];
        let rho = 1.0 / (smax * smax);
        let config = GaletConfig {
            rho,
            t_inner: 500,
            ..defaults()
        };
        let (w, _) = w_solve(&p, &x, &y, &config, None).unwrap();
        let w_dagger = metrics::minimal_norm_w(&p, &x, &y).unwrap();
        let err = w.dist(&w_dagger);
        let decay = w_gd_vs_pinv(&p, &x, &y, rho, 500).unwrap();
        worst_err = worst_err.max(err);
        worst_excess = worst_excess.max(decay.max_ratio - decay.bound_factor);
        pass &= err <= 1e-8 && decay.within_bound();
    }
    verdict(
        pass,
        format!("20 instances: max |w - w_dagger| {worst_err:.3e}, max decay ratio minus bound {worst_excess:.3e}"),
    )
}

fn criterion_6() -> Verdict {
    let p = StronglyConvexQuadProblem::generate(&ScQuadParams::default()).unwrap();
    let (_, lmax) = p.q_eigenvalues();
    let config = GaletConfig {
        alpha: 0.1,
        beta: 1.0 / lmax,
        rho: 1.0 / (lmax * lmax),
        n_inner: 200,
        t_inner: 200,
        k_outer: 50,
        ..defaults()
    };
    let (mut x, mut y) = box_points(&p, 1, -3.0, 3.0, 6).remove(0);
    let mut w = Vector::zeros(p.dim_y());
    let mut worst = 0.0f64;
    for _ in 0..config.k_outer {
        let step = galet_step(&p, &x, &y, &w, &config).unwrap();
        let hg = scq_hypergradient(&p, &x).unwrap();
        worst = worst.max(step.dx.dist(&hg));
        (x, y, w) = (step.x_next, step.y_next, step.w_next);
    }
    verdict(
        worst <= 1e-4,
        format!("max |d_x - hypergradient| over 50 iterations {worst:.3e}"),
    )
}

fn criterion_7() -> Verdict {
    let problems: Vec<Box<dyn BilevelOracle>> = vec![
        Box::new(Example1Problem),
        Box::new(SingularLstsqProblem::generate(&LstsqParams::default()).unwrap()),
        Box::new(StronglyConvexQuadProblem::generate(&ScQuadParams::default()).unwrap()),
        Box::new(generate_hyperclean_data(&HypercleanParams::default()).unwrap()),
    ];
    let mut pass = true;
    let mut cells = Vec::new();
    for (i, p) in problems.iter().enumerate() {
        let pts = box_points(p.as_ref(), 100, -3.0, 3.0, 70 + i as u64);
        let rep = fd_verify(p.as_ref(), &pts, DEFAULT_FD_STEP, 1e-5, 7).unwrap();
        pass &= rep.passed();
        cells.push(format!("{} {:.2e}", p.name(), rep.max_error()));
    }
    verdict(pass, format!("max relative errors: {}", cells.join(", ")))
}

fn criterion_8() -> Verdict {
    let pts = box_points(&Example1Problem, 10_000, -3.0, 3.0, 8);
    let checks = check_pl_inequality(&Example1Problem, 1.0, &pts).unwrap();
    let failures = checks.iter().filter(|c| !c.pass).count();
    verdict(
        failures == 0,
        format!("{} points, {failures} failures", checks.len()),
    )
}

fn criterion_9() -> Verdict {
    let pts = example1_global_points(20, -3.0, 3.0, 9);
    let ranks = rank_probe(&Example1Problem, &pts).unwrap();
    let all_one = ranks.iter().all(|r| r.rank_joint == 1 && r.rank_hessian == 1);
    verdict(
        all_one,
        format!(
            "{} points, rank[H, J] = rank H = 1 at all: {all_one}",
            ranks.len()
        ),
    )
}

fn criterion_10() -> Verdict {
    let grid = GridSpec::cube(-3.0, 3.0, 201, 3).unwrap();
    let best = parallel_brute_force_example1(&grid, 1e-3).unwrap();
    let spacing = grid.axes[0].spacing();
    let err = (best.x - 0.5).abs();
    verdict(
        err <= spacing,
        format!(
            "x_best {:.4}, |x_best - 0.5| {err:.4} (spacing {spacing:.4}), {} feasible points",
            best.x, best.feasible_points
        ),
    )
}

fn criterion_11() -> Verdict {
    let config = GaletConfig {
        alpha: 0.15,
        beta: 0.5,
        rho: 0.05,
        t_inner: 200,
        ..defaults()
    };
    let options = RunOptions {
        lyapunov_c: Some(1.0),
        ..RunOptions::default()
    };
    let mut worst = f64::NEG_INFINITY;
    for run in example1_runs(&config, &options) {
        let v: Vec<f64> = run.trace.iter().map(|t| t.lyapunov.unwrap()).collect();
        for pair in v.windows(2) {
            worst = worst.max(pair[1] - pair[0]);
        }
    }
    verdict(
        worst <= 1e-8,
        format!("largest per-step increase of V {worst:.3e}"),
    )
}

fn criterion_12() -> Verdict {
    let start = Instant::now();
    let p = generate_hyperclean_data(&HypercleanParams {
        n_tr: 100,
        p: 10,
        p_c: 0.5,
        ..HypercleanParams::default()
    })
    .unwrap();
    let config = GaletConfig {
        alpha: 100.0,
        beta: 1.0,
        rho: 0.5,
        n_inner: 20,
        t_inner: 20,
        k_outer: 300,
        ..defaults()
    };
    let x0 = Vector::zeros(p.dim_x());
    let y0 = Vector::zeros(p.dim_y());
    let run = galet_run(&p, &x0, &y0, &config, &RunOptions::default()).unwrap();
    let it = &run.final_iterate;
    let (corrupted, clean) = p.weight_split(&it.x);
    let (loss0, loss1) = (p.validation_loss(&y0), p.validation_loss(&it.y));
    let secs = start.elapsed().as_secs_f64();
    verdict(
        corrupted < clean && loss1 < loss0 && secs <= 30.0,
        format!("mean weight corrupted {corrupted:.3} vs clean {clean:.3}; validation loss {loss0:.3} -> {loss1:.3}; {secs:.2}s"),
    )
}

fn criterion_13() -> Verdict {
    let configs = [
        "[problem]\nname = \"example1\"\n",
        "seed = 11\n[problem]\nname = \"singular-lstsq\"\n[solver]\nalpha = [0.05, 0.1]\nbeta = 0.4\nrho = 0.16\nt_inner = 20\nk_outer = 300\n[init]\nbox = { lo = -3, hi = 3, count = 2 }\n[diagnostics]\nrecord_b_k = true\n",
    ];
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for src in configs {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        for (dir, workers) in [(&a, 1), (&b, 4)] {
            let mut cfg = ExperimentConfig::parse(src).unwrap();
            cfg.out_dir = dir.path().to_path_buf();
            run_experiment(&cfg, workers, false).unwrap();
        }
        for entry in std::fs::read_dir(a.path()).unwrap() {
            let name = entry.unwrap().file_name();
            if !name.to_string_lossy().ends_with(".csv") {
                continue;
            }
            let ta = std::fs::read_to_string(a.path().join(&name)).unwrap();
            let tb = std::fs::read_to_string(b.path().join(&name)).unwrap_or_default();
            compared += 1;
            if strip_wall_time_csv(&ta) != strip_wall_time_csv(&tb) {
                mismatches.push(name.to_string_lossy().into_owned());
            }
        }
    }
    verdict(
        compared > 0 && mismatches.is_empty(),
        format!("{compared} trace pairs compared, mismatches: {mismatches:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 13] = [
        ("example-1 global convergence", criterion_1),
        ("value-function KKT negative control", criterion_2),
        ("sc ablation fails", criterion_3),
        ("O(1/K) residual rate", criterion_4),
        ("shadow implicit gradient minimal-norm convergence", criterion_5),
        ("implicit gradient recovery", criterion_6),
        ("derivative correctness", criterion_7),
        ("PL certification", criterion_8),
        ("constraint qualification failure evidence", criterion_9),
        ("brute-force cross-check", criterion_10),
        ("Lyapunov descent", criterion_11),
        ("synthetic hyper-cleaning sanity", criterion_12),
        ("determinism", criterion_13),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {tag} {name}: {}", i + 1, v.detail);
        if !v.pass {
            failed.push(i + 1);
        }
    }
    println!(
        "acceptance: {} of {} criteria pass{}",
        criteria.len() - failed.len(),
        criteria.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failing: {failed:?}")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
