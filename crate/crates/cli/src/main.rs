//! Scenario runner: `nhreal <scenario> [--config FILE] [--out DIR] [--format csv|json] [--seed N] [--tol KEY=VALUE]...`
//!
//! Exit status is 0 when every assertion passes, 1 when one fails and 2 on
//! configuration or runtime errors.

mod config;
mod report;
mod scenarios;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{Format, Overrides, Scenario};

#[derive(Parser, Debug)]
#[command(name = "nhreal", version, about = "Non-Hermitian real-spectrum laboratory")]
struct Cli {
    #[arg(value_enum)]
    scenario: Scenario,
    /// JSON scenario config; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance override such as `spectra.real=1e-9`; repeatable.
    #[arg(long = "tol", value_name = "KEY=VALUE")]
    tol: Vec<String>,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let cfg = match cli.config.as_deref().map(config::load).transpose() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let flags = Overrides {
        out: cli.out,
        format: cli.format,
        seed: cli.seed,
        tol: cli.tol,
    };
    let settings = match config::resolve(cli.scenario, cfg, flags) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let report = match scenarios::run(&settings) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e:#}", settings.config.scenario);
            return ExitCode::from(2);
        }
    };
    let (written, report) = match report::write(&settings, report, &argv) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: writing outputs: {e:#}");
            return ExitCode::from(2);
        }
    };
    for line in report.lines() {
        println!("{line}");
    }
    for p in &written {
        println!("wrote {}", p.display());
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
