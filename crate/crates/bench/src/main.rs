use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use galet_bench::experiment::{run_experiment, ExitStatus};
use galet_bench::summary::{summarize_dir, write_summary, Summary, SUMMARY_FILE};
use galet_bench::verify::{verify_problem, VerifyOptions};
use galet_bench::{ExperimentConfig, OutputFormat};

#[derive(Parser)]
#[command(name = "galet", version, about = "Bilevel solver experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for problem generation and sampled starting points.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Parallel runs; defaults to the number of CPUs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver setting from every configured starting point.
    Run { config: PathBuf },
    /// Run the cross-product of all listed solver settings.
    Sweep { config: PathBuf },
    /// Rebuild the summary from the traces in a directory.
    Summarize { dir: PathBuf },
    /// Check derivatives, the PL inequality and Hessian ranks for a problem.
    Verify { problem: String },
}

fn exit(status: ExitStatus) -> ExitCode {
    ExitCode::from(status.code() as u8)
}

fn print_runs(summary: &Summary) {
    println!("run,problem,outcome,iterations,final_r_x,final_r_w,final_r_y,final_optimality_gap,slope_r_x");
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6e}"));
    for r in &summary.runs {
        println!(
            "{},{},{},{},{},{},{},{},{}",
            r.run,
            r.problem,
            r.outcome.name(),
            r.iterations,
            opt(r.final_r_x),
            opt(r.final_r_w),
            opt(r.final_r_y),
            opt(r.final_optimality_gap),
            opt(r.slopes.r_x.slope()),
        );
    }
}

fn experiment(cli: &Cli, path: &Path, single: bool) -> ExitCode {
    let mut cfg = match ExperimentConfig::from_path(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return exit(ExitStatus::Invalid);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(f) = cli.format {
        cfg.format = match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        };
    }
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    match run_experiment(&cfg, workers, single) {
        Ok(outcome) => {
            print_runs(&outcome.summary);
            eprintln!(
                "{} runs written to {} ({} converged, {} not converged, {} diverged)",
                outcome.summary.run_count,
                outcome.out_dir.display(),
                outcome.summary.converged.len(),
                outcome.summary.not_converged.len(),
                outcome.summary.diverged.len()
            );
            exit(outcome.exit_status())
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit(ExitStatus::Invalid)
        }
    }
}

fn summarize(cli: &Cli, dir: &Path) -> ExitCode {
    let summary = match summarize_dir(dir) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return exit(ExitStatus::Invalid);
        }
    };
    let out_dir = cli.out.clone().unwrap_or_else(|| dir.to_path_buf());
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: {}: {e}", out_dir.display());
        return exit(ExitStatus::Invalid);
    }
    let path = out_dir.join(SUMMARY_FILE);
    if let Err(e) = write_summary(&summary, &path) {
        eprintln!("error: {}: {e}", path.display());
        return exit(ExitStatus::Invalid);
    }
    match cli.format {
        Some(Format::Json) => println!(
            "{}",
            serde_json::to_string_pretty(&summary).expect("summary serializes")
        ),
        _ => print_runs(&summary),
    }
    ExitCode::SUCCESS
}

fn verify(cli: &Cli, problem: &str) -> ExitCode {
    let report = match verify_problem(problem, cli.seed.unwrap_or(0), &VerifyOptions::default()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit(ExitStatus::Invalid);
        }
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(dir) = &cli.out {
        let path = dir.join(format!("verify-{problem}.json"));
        if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, format!("{json}\n")))
        {
            eprintln!("error: {}: {e}", path.display());
            return exit(ExitStatus::Invalid);
        }
    }
    match cli.format {
        Some(Format::Json) => println!("{json}"),
        _ => print!("{}", report.to_text()),
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        exit(ExitStatus::Partial)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                exit(ExitStatus::Invalid)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match &cli.command {
        Command::Run { config } => experiment(&cli, config, true),
        Command::Sweep { config } => experiment(&cli, config, false),
        Command::Summarize { dir } => summarize(&cli, dir),
        Command::Verify { problem } => verify(&cli, problem),
    }
}
