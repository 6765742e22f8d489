use clap::{Parser, Subcommand};
use sflock::experiment::{self, CheckOutcome, Outcome, RunError, EXIT_CONFIG};
use sflock::presets;
use sflock_core::guards::InequalityId;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sflock", version, about = "Nonlinear Cucker-Smale flocking with singular weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Run {
        /// Path to a TOML config.
        config: PathBuf,
    },
    /// Run shipped presets.
    Preset {
        /// Preset names (see `sflock presets`).
        #[arg(required = true)]
        names: Vec<String>,
        /// Output root; each preset writes into <out>/<name>.
        #[arg(long, default_value = "sflock_out")]
        out: PathBuf,
        /// Presets to run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// List shipped presets.
    Presets,
    /// Check inequalities on a stored trajectory.csv.
    Check {
        /// Trajectory written by `run` or `preset`.
        trajectory: PathBuf,
        /// Inequality ids (In1, In2, Es1..Es4, MomEq, EqMot, Apriori).
        #[arg(long = "ineq", required = true, num_args = 1.., value_parser = parse_id)]
        ineq: Vec<InequalityId>,
        /// Config describing the model; defaults to config.toml beside the trajectory.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Collision group, comma-separated agent indices.
        #[arg(long, value_delimiter = ',')]
        group: Option<Vec<usize>>,
    },
}

fn parse_id(s: &str) -> Result<InequalityId, String> {
    s.parse().map_err(|_| {
        let names: Vec<_> = InequalityId::ALL.iter().map(|i| i.name()).collect();
        format!("unknown inequality `{s}` (expected one of {})", names.join(", "))
    })
}

fn report(label: &str, result: Result<Outcome, RunError>) -> i32 {
    match result {
        Ok(o) => {
            for c in &o.checks {
                print_check(c);
            }
            let status = o.summary["terminal_status"].as_str().unwrap_or("?");
            println!("{label}: {status}, exit {} -> {}", o.exit_code, o.config.output_dir.display());
            o.exit_code
        }
        Err(e) => {
            eprintln!("{label}: {e}");
            experiment::error_exit_code(&e)
        }
    }
}

fn print_check(c: &CheckOutcome) {
    let name = c.requested.name();
    match &c.report {
        Ok(r) if c.vacuous => println!("{name}: FAIL (growth condition violated; min_slack {:.3e})", r.min_slack),
        Ok(r) => println!("{name}: {} (min_slack {:.3e}, tol {:.3e})", if r.pass { "PASS" } else { "FAIL" }, r.min_slack, r.tol),
        Err(e) => println!("{name}: FAIL ({e})"),
    }
}

fn run_presets(names: &[String], out: &Path, jobs: usize) -> i32 {
    let mut resolved = Vec::new();
    for name in names {
        match presets::preset(name) {
            Some(p) => resolved.push(p),
            None => {
                eprintln!("unknown preset `{name}`; run `sflock presets` for the list");
                return EXIT_CONFIG;
            }
        }
    }
    let run_one = |p: &presets::Preset| -> i32 {
        let result = p.config(out).map_err(RunError::from).and_then(experiment::run_and_write);
        report(p.name, result)
    };
    let jobs = jobs.max(1);
    let mut codes = Vec::with_capacity(resolved.len());
    for batch in resolved.chunks(jobs) {
        let batch_codes: Vec<i32> = std::thread::scope(|s| {
            let handles: Vec<_> = batch.iter().map(|p| s.spawn(move || run_one(p))).collect();
            handles.into_iter().map(|h| h.join().expect("preset thread panicked")).collect()
        });
        codes.extend(batch_codes);
    }
    codes.into_iter().max().unwrap_or(0)
}

fn main() -> ExitCode {
    // Usage errors are config errors (exit 1), not check failures.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let code = match cli.command {
        Command::Run { config } => report(&config.display().to_string(), experiment::run_experiment(&config)),
        Command::Preset { names, out, jobs } => run_presets(&names, &out, jobs),
        Command::Presets => {
            print!("{}", presets::list_presets());
            0
        }
        Command::Check { trajectory, ineq, config, group } => {
            match experiment::check_trajectory(&trajectory, &ineq, config.as_deref(), group) {
                Ok((checks, code)) => {
                    checks.iter().for_each(print_check);
                    code
                }
                Err(e) => {
                    eprintln!("{}: {e}", trajectory.display());
                    EXIT_CONFIG
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
