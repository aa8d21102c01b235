use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use homoglab_cli::config::Command;
use homoglab_cli::{execute, Invocation};

/// Effective tensors of degenerate laminates and the anomalous Γ-limit example.
#[derive(Parser, Debug)]
#[command(name = "homoglab", version)]
struct Cli {
    /// homogenize_laminate, homogenize_grid, verify_conditions, counterexample or recovery_sweep
    #[arg(value_parser = |s: &str| s.parse::<Command>())]
    command: Command,
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's output_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized suites
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) as u8 ^ 1;
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let run = execute(&Invocation { command: cli.command, config: cli.config, out: cli.out, seed: cli.seed });
    for line in &run.summary {
        println!("{line}");
    }
    for e in run.report["errors"].as_array().into_iter().flatten() {
        eprintln!("error: {}", e.as_str().unwrap_or_default());
    }
    println!("{}: {} (report in {})", cli.command, run.report["status"].as_str().unwrap_or("?"), run.output_dir.display());
    ExitCode::from(run.exit_code as u8)
}
