use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualpush::config::{load_config, ScheduleConfig, StepsizeConfig};
use dualpush::experiment::{run_experiment, solve_reference, verify_csv};
use dualpush::Error;

#[derive(Parser)]
#[command(name = "dualpush", version, about = "Distributed dual decomposition over directed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a configured run and stream the per-round trace to CSV
    Run(RunArgs),
    /// Audit a trace file: structure, canonical formatting, invariants
    Verify {
        /// CSV trace written by `run`
        trace: PathBuf,
    },
    /// Solve the configured problem centrally and print the reference solution
    Oracle {
        /// Run configuration (only its problem section is used)
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration in TOML
    config: PathBuf,
    /// Override the configured iteration count
    #[arg(long)]
    iterations: Option<u64>,
    /// Override the random-window schedule seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the stepsize scale c
    #[arg(long)]
    c: Option<f64>,
    /// Write the CSV trace here instead of the configured path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate agents on a thread pool; output stays bit-identical
    #[arg(long)]
    parallel: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Verify { trace } => verify(&trace),
        Command::Oracle { config } => oracle(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: RunArgs) -> Result<(), Error> {
    let mut cfg = load_config(&args.config)?;
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
    if let Some(seed) = args.seed {
        match &mut cfg.schedule {
            ScheduleConfig::RandomWindow { seed: s, .. } => *s = seed,
            _ => eprintln!("note: --seed has no effect, the schedule is not random-window"),
        }
    }
    if let Some(c) = args.c {
        match &mut cfg.stepsize {
            StepsizeConfig::InverseSqrt { c: v } | StepsizeConfig::Constant { c: v } => *v = c,
            StepsizeConfig::Custom { .. } => {
                return Err(Error::Config("--c cannot override a custom stepsize table".into()));
            }
        }
    }
    if let Some(out) = args.out {
        cfg.outputs.csv = out;
    }
    if args.parallel {
        cfg.parallel = true;
    }
    cfg.validate()?;

    let outcome = run_experiment(&cfg)?;
    if let Some(w) = &outcome.stepsize_warning {
        eprintln!("warning: {w}");
    }
    let last = outcome.records.last().expect("run always logs round 0");
    if outcome.early_exit {
        println!("rounds: {} (stopped at the configured tolerances)", outcome.rounds_completed);
    } else {
        println!("rounds: {}", outcome.rounds_completed);
    }
    println!("f_star: {:.10e}", outcome.oracle.f_star);
    println!("objective_hat: {:.10e}", last.objective_hat);
    if let Some(gap) = last.objective_gap {
        println!("objective_gap: {:.10e}", gap);
    }
    println!("violation_norm: {:.10e}", last.violation_norm);
    println!("consensus_spread: {:.10e}", last.consensus_spread);
    println!("trace: {}", cfg.outputs.csv.display());
    if let Some(summary) = &cfg.outputs.summary {
        println!("summary: {}", summary.display());
    }
    println!("wall_time: {:.3}s", outcome.wall_time.as_secs_f64());
    Ok(())
}

fn verify(trace: &PathBuf) -> Result<(), Error> {
    let report = verify_csv(trace)?;
    print!("ok: {} rows, final round {}", report.rows, report.last_round);
    match report.f_star {
        Some(f) => println!(", reference objective {f:.10e}"),
        None => println!(),
    }
    Ok(())
}

fn oracle(config: &PathBuf) -> Result<(), Error> {
    let cfg = load_config(config)?;
    let inst = cfg.build_instance()?;
    let sol = solve_reference(&inst)?;
    println!("f_star: {:.10e}", sol.f_star);
    let lambda: Vec<String> = sol.lambda_star.iter().map(|v| format!("{v:.10e}")).collect();
    println!("lambda_star: [{}]", lambda.join(", "));
    println!("residual: {:.3e}", sol.residual);
    for (i, x) in sol.x_star.iter().enumerate() {
        let xs: Vec<String> = x.iter().map(|v| format!("{v:.10e}")).collect();
        println!("x_star[{i}]: [{}]", xs.join(", "));
    }
    Ok(())
}
