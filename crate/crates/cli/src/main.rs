//! Command-line runner for certified Hagedorn wavepacket propagation.

mod commands;
mod config;
mod failure;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use failure::CliError;

#[derive(Parser)]
#[command(name = "semiclassical", version, about = "Certified semiclassical wavepacket propagation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one wavepacket and write trajectory, coefficients and certificate.
    Propagate(Items),
    /// Run a set of ħ values and fit the decay of the error.
    Sweep(Items),
    /// Run the seeded property suites.
    Verify(Items),
    /// Propagate and measure the error against the grid reference.
    Compare(Items),
    /// Fit an existing sweep table.
    Fit(Items),
}

#[derive(clap::Args)]
struct Items {
    /// Optional config file followed by `section.key=value` overrides.
    items: Vec<String>,
}

impl Items {
    fn split(&self) -> Result<(Option<PathBuf>, Vec<String>), CliError> {
        let mut rest = self.items.as_slice();
        let path = match rest.first() {
            Some(first) if !first.contains('=') => {
                rest = &rest[1..];
                Some(PathBuf::from(first))
            }
            _ => None,
        };
        if let Some(bad) = rest.iter().find(|s| !s.contains('=')) {
            return Err(CliError::Config(format!(
                "unexpected argument `{bad}`; only one config path is accepted, then section.key=value overrides"
            )));
        }
        Ok((path, rest.to_vec()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let items = match &cli.command {
        Command::Propagate(i) | Command::Sweep(i) | Command::Verify(i) | Command::Compare(i) | Command::Fit(i) => i,
    };
    let loaded = items
        .split()
        .and_then(|(path, overrides)| config::load(path.as_deref(), &overrides));
    let config = match loaded {
        Ok(c) => c,
        Err(e) => return fail(&e, None),
    };
    let hash = config.hash();
    let result = Context::new(&config, &hash).and_then(|ctx| match cli.command {
        Command::Propagate(_) => commands::propagate(&ctx, false),
        Command::Compare(_) => commands::propagate(&ctx, true),
        Command::Sweep(_) => commands::sweep(&ctx),
        Command::Verify(_) => commands::verify(&ctx),
        Command::Fit(_) => commands::fit(&ctx),
    });
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e, Some(&hash)),
    }
}

fn fail(e: &CliError, hash: Option<&str>) -> ExitCode {
    let record = serde_json::to_string(&e.record(hash)).expect("error record serializes");
    eprintln!("{record}");
    ExitCode::from(e.exit_code() as u8)
}
