use std::process::ExitCode;

use clap::Parser;
use superproc::cli::{parse_config, run, Cli};

/// Exit status: 0 when every check passes, 1 when a check fails, 2 on errors.
fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, flags) = cli.command.split();
    let outcome = parse_config(kind, &flags).and_then(|cfg| run(&cfg).map(|o| (cfg, o)));
    match outcome {
        Ok((cfg, outcome)) => {
            for c in &outcome.checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                println!("{tag} {}: {}", c.name, c.detail);
            }
            println!("artifacts written to {}", cfg.out.display());
            if outcome.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
