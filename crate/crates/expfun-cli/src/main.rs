//! Config-driven experiment runner for the exponential-functional toolkit.
//!
//! ```text
//! expfun <SUBCOMMAND> --config experiment.cfg [--out DIR] [KEY=VALUE ...]
//! ```
//!
//! Subcommands: classify, tau-tail, estimate, constants, verify, renewal,
//! selftest. Exit codes: 0 ok, 2 config error, 3 numeric guard tripped,
//! 4 oracle-suite failure.

mod commands;
mod config;
mod output;

use clap::Parser;
use config::Config;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "expfun", version, about = "Exponential functionals of random walks: simulate, estimate, verify")]
struct Cli {
    /// Subcommand: classify | tau-tail | estimate | constants | verify | renewal | selftest
    subcommand: String,

    /// Experiment config file (flat key=value with dotted groups)
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Output directory for CSV artifacts and the run manifest
    #[arg(short, long, default_value = ".")]
    out: PathBuf,

    /// Config overrides, e.g. mc.seed=7 ladder.rungs=6
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => match Config::parse(&text) {
                Ok(c) => c,
                Err(e) => return fail("config", 2, &e.to_string()),
            },
            Err(e) => return fail("config", 2, &format!("cannot read {}: {e}", path.display())),
        },
        None => Config::default(),
    };
    for kv in &cli.overrides {
        if let Err(e) = cfg.apply_override(kv) {
            return fail("config", 2, &e.to_string());
        }
    }
    match commands::run_with_pool(&cli.subcommand, &cfg, &cli.out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.exit_code(), &e.message()),
    }
}

fn fail(kind: &str, code: i32, message: &str) -> ExitCode {
    eprintln!("error.kind={kind}");
    eprintln!("error.message={message}");
    ExitCode::from(code as u8)
}
