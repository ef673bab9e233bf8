use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use platoon_core::sim::{
    compare_schemes, compute_metrics, run_simulation, write_comparison, write_events, write_metrics, write_solves,
    write_trace, Scenario,
};
use platoon_core::Error;

/// Exit codes by failure category.
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_CHECK: u8 = 5;

#[derive(Parser)]
#[command(name = "platoon", version, about = "Vehicle-platoon simulator with adaptive distributed MPC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write trace.csv, metrics.json and logs.
    Run {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the three schemes on seeds 0..k and write comparison.csv.
    Compare {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the built-in invariant and oracle checks.
    Check,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. } | Error::Parameter { .. } | Error::Specification(_) => EXIT_CONFIG,
        Error::SolverFailure { .. } | Error::Synthesis(_) | Error::CandidateUnavailable { .. } | Error::EmptyTrace => {
            EXIT_SOLVER
        }
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_IO,
    }
}

fn load(path: Option<&Path>) -> Result<Scenario, Error> {
    match path {
        Some(p) => Scenario::load(p).map_err(|e| match e {
            Error::Io(io) => Error::Config {
                key: p.display().to_string(),
                reason: io.to_string(),
            },
            other => other,
        }),
        None => Ok(Scenario::default()),
    }
}

fn run(scenario: Option<&Path>, seed: u64, out: &Path) -> Result<(), Error> {
    let mut s = load(scenario)?;
    s.seed = seed;
    let output = run_simulation(&s)?;
    let metrics = compute_metrics(&output, seed)?;
    std::fs::create_dir_all(out)?;
    write_trace(out.join("trace.csv"), &output.trace)?;
    write_metrics(out.join("metrics.json"), &metrics)?;
    write_solves(out.join("solves.csv"), &output.solves)?;
    write_events(out.join("channel.csv"), &output.events)?;
    println!(
        "seed {seed}: ALE {:.4} m, max |ep| {:.3} m, solves {}, infeasible {}, solver work {}, {:.2} s",
        metrics.ale,
        metrics.max_abs_ep,
        metrics.stats.solves,
        metrics.stats.infeasible,
        metrics.solver_work,
        metrics.tet_seconds
    );
    Ok(())
}

fn compare(scenario: Option<&Path>, seeds: u64, out: &Path) -> Result<(), Error> {
    let s = load(scenario)?;
    let seeds: Vec<u64> = (0..seeds).collect();
    let (rows, summary) = compare_schemes(&s, &seeds)?;
    std::fs::create_dir_all(out)?;
    write_comparison(out.join("comparison.csv"), &rows)?;
    println!("scheme            mean ALE   mean TET(s)  solver work");
    for (i, label) in ["a_adaptive", "b_fixed_weights", "c_fixed_horizon"].iter().enumerate() {
        println!(
            "{label:<17} {:>8.4}   {:>11.2}  {:>11}",
            summary.mean_ale[i], summary.mean_tet_seconds[i], summary.total_solver_work[i]
        );
    }
    println!(
        "work ratio a/c {:.3}; a <= b on {}/{} seeds",
        summary.work_ratio_a_over_c,
        summary.seeds_a_beats_b,
        seeds.len()
    );
    Ok(())
}

fn check() -> bool {
    let results = platoon_core::check::run_checks();
    let mut ok = true;
    for r in &results {
        println!("[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        ok &= r.passed;
    }
    ok
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, seed, out } => run(scenario.as_deref(), *seed, out),
        Command::Compare { scenario, seeds, out } => compare(scenario.as_deref(), *seeds, out),
        Command::Check => {
            return if check() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_CHECK) };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
