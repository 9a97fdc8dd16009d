pub mod commands;
pub mod config;
pub mod output;
pub mod table;

use clap::{Parser, Subcommand};

use config::Flags;

#[derive(Debug, Parser)]
#[command(
    name = "stretchwalk",
    version,
    about = "Localization experiments for stretched random walks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Closed-form rate bounds over an (n, a, eps) grid
    Bounds,
    /// Sequence conditions along a plan
    Conditions,
    /// Cramér rate table and tail diagnostics
    Rate,
    /// Monte Carlo estimates of P(I | C)
    Localize,
    /// Conditioned paths and oblique segments
    Paths,
    /// The acceptance suite
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Bounds => "bounds",
            Command::Conditions => "conditions",
            Command::Rate => "rate",
            Command::Localize => "localize",
            Command::Paths => "paths",
            Command::Verify => "verify",
        }
    }
}

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_ACCEPTANCE: i32 = 3;

/// Caps the global rayon pool from `STRETCHWALK_THREADS`.
pub fn init_threads() {
    if let Some(n) = std::env::var("STRETCHWALK_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // a second call (tests) finds the pool already built
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let flags = match cli.flags.merged() {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            return EXIT_USAGE;
        }
    };
    let result = match cli.command {
        Command::Bounds => commands::bounds(&flags),
        Command::Conditions => commands::conditions(&flags),
        Command::Rate => commands::rate(&flags),
        Command::Localize => commands::localize(&flags),
        Command::Paths => commands::paths(&flags),
        Command::Verify => commands::verify(&flags, |o| eprintln!("{}", o.line())),
    };
    let emission = match result {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            return match e {
                stretchwalk_core::Error::InvalidArgument(_) => EXIT_USAGE,
                _ => EXIT_NUMERIC,
            };
        }
    };
    if let Err(e) = output::emit(cli.command.name(), &flags, &emission) {
        eprintln!("error: {}: {e}", e.name());
        return EXIT_NUMERIC;
    }
    if emission.failed {
        EXIT_ACCEPTANCE
    } else {
        0
    }
}
