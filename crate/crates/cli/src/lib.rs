//! Command-line front end: covariance tables, simulation, likelihoods,
//! fitting, prediction and the simulation, timing and convergence studies.

pub mod args;
pub mod commands;
pub mod gridfile;
pub mod record;
pub mod study;

use std::fmt;

use anyhow::Result;
use clap::Parser;

pub use args::{Cli, Command};

/// Bad flag values that clap itself cannot catch.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_SIZE_GUARD: i32 = 4;

/// Exit status for a failed command: numerical failures 3, size guards 4,
/// invalid flags or parameters 2, anything else (I/O, malformed files) 1.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<gridmrf_core::Error>() {
            return if e.is_size_guard() {
                EXIT_SIZE_GUARD
            } else if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            };
        }
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
    }
    EXIT_IO
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads.filter(|&n| n > 0) {
        // a second initialization (e.g. repeated in-process runs) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Cov(a) => commands::cov(a),
        Command::Loglik(a) => commands::loglik(a),
        Command::Fit(a) => commands::fit(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Krige(a) => commands::krige(a),
        Command::Condsim(a) => commands::condsim(a),
        Command::Simstudy(a) => study::simstudy(a),
        Command::Benchmark(a) => study::benchmark(a),
        Command::Convergence(a) => study::convergence(a),
    }
}

/// Parses `args` (including the program name), runs, and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
