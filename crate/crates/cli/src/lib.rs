//! Command-line front end for `isaacs-vex`.
//!
//! Exit codes: 0 success, 1 a verified property failed, 2 usage or
//! validation error, 3 numerical divergence.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use isaacs_vex::model::{builtin_config, load_config, ProblemConfig, BUILTIN_NAMES};
use isaacs_vex::Error;

pub mod beliefs;
pub mod refine;
pub mod solve;
pub mod verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PROPERTY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "isaacs-vex", version, about = "Value functions of stochastic differential games with incomplete information")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "ISAACS_VEX_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the backward scheme and write slices, splits and the report.
    Solve {
        /// Config file, or the name of a built-in problem.
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve on successively refined grids and tabulate the differences.
    Refine {
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// Optional directory for `refine.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate belief paths from the splits of an earlier solve in `--out`.
    Beliefs {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check oracles and regularity properties; exit 1 on any failure.
    Verify {
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// A config file path, or a built-in problem name when no such file exists.
pub fn resolve_config(arg: &str) -> isaacs_vex::Result<ProblemConfig> {
    let path = std::path::Path::new(arg);
    if !path.exists() && BUILTIN_NAMES.contains(&arg) {
        return builtin_config(arg);
    }
    load_config(path)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::DivergedField { .. } | Error::NonFiniteInput(_) => EXIT_DIVERGED,
        Error::InconsistentSplit { .. } => EXIT_PROPERTY,
        _ => EXIT_USAGE,
    }
}

fn fail(e: Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(&e)
}

pub fn run(cli: Cli) -> i32 {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return EXIT_USAGE;
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_USAGE;
        }
    };
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> i32 {
    match command {
        Command::Solve { config, out } => {
            let run = || -> isaacs_vex::Result<()> {
                let cfg = resolve_config(&config)?;
                let sol = solve::cmd_solve(&cfg, &out)?;
                solve::print_summary(&cfg, &sol.report);
                Ok(())
            };
            run().map_or_else(fail, |_| EXIT_OK)
        }
        Command::Refine { config, levels, out } => {
            if levels < 2 {
                eprintln!("error: --levels must be at least 2");
                return EXIT_USAGE;
            }
            let run = || -> isaacs_vex::Result<()> {
                let cfg = resolve_config(&config)?;
                let table = refine::cmd_refine(&cfg, levels)?;
                refine::print_table(&table);
                if let Some(dir) = out {
                    std::fs::create_dir_all(&dir)?;
                    isaacs_vex::io::write_json(&dir.join("refine.json"), &table)?;
                }
                Ok(())
            };
            run().map_or_else(fail, |_| EXIT_OK)
        }
        Command::Beliefs { config, out, paths, seed } => {
            if paths == 0 {
                eprintln!("error: --paths must be at least 1");
                return EXIT_USAGE;
            }
            let run = || -> isaacs_vex::Result<()> {
                let cfg = resolve_config(&config)?;
                let summary = beliefs::cmd_beliefs(&cfg, &out, paths, seed)?;
                beliefs::print_summary(&summary);
                Ok(())
            };
            run().map_or_else(fail, |_| EXIT_OK)
        }
        Command::Verify { config, seed } => {
            let run = || -> isaacs_vex::Result<bool> {
                let cfg = resolve_config(&config)?;
                let outcomes = verify::cmd_verify(&cfg, seed)?;
                for o in &outcomes {
                    println!("{} {:<24} {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
                }
                Ok(outcomes.iter().all(|o| o.passed))
            };
            match run() {
                Ok(true) => EXIT_OK,
                Ok(false) => EXIT_PROPERTY,
                Err(e) => fail(e),
            }
        }
    }
}
