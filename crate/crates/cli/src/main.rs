//! `pricefront run | compare | validate`.
//!
//! Exit status: 0 success, 2 blow-up threshold tripped, 1 configuration or runtime error.

mod compare;
mod run;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "pricefront", version, about = "Free-boundary price formation: solve, cross-check, diagnose")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solvers named in a scenario file and write the output tree.
    Run {
        scenario: PathBuf,
        /// Output directory; overrides the scenario and PRICEFRONT_OUTPUT_ROOT.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// L∞/L¹ differences of p, λ and the latest common profile between two runs.
    Compare { a: PathBuf, b: PathBuf },
    /// Parse a scenario and check its initial data without solving.
    Validate { scenario: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run { scenario, output } => run::run(&scenario, output.as_deref()).map(|dir| {
            println!("{}", dir.display());
        }),
        Command::Compare { a, b } => compare::compare(&a, &b).map(|r| {
            println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"));
        }),
        Command::Validate { scenario } => run::validate(&scenario).map(|s| {
            println!("{}", serde_json::to_string_pretty(&s).expect("summary serializes"));
        }),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
