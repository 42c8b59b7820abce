use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use todalab::experiment::{run_battery, ExperimentConfig};
use todalab::Error;

/// Runs the Toda-hierarchy theorem batteries and writes a JSON/CSV report.
#[derive(Debug, Parser)]
#[command(name = "todalab", version)]
struct Args {
    /// TOML configuration file; defaults are used when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Suite to run (repeatable); replaces the configured suite list.
    #[arg(long = "suite", value_name = "NAME")]
    suites: Vec<String>,
    /// Output directory for the report and data files.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for random instances.
    #[arg(long)]
    seed: Option<u64>,
}

fn load(args: &Args) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if !args.suites.is_empty() {
        cfg.suites = args.suites.clone();
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("todalab: configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    let report = match run_battery(&cfg) {
        Ok(r) => r,
        Err(Error::Config(msg)) => {
            eprintln!("todalab: configuration error: {msg}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("todalab: {e}");
            return ExitCode::from(1);
        }
    };
    for row in &report.rows {
        let value = row.value.map_or_else(|| "error".to_string(), |v| format!("{v:.3e}"));
        let status = if row.pass { "PASS" } else { "FAIL" };
        println!("{status} {:<22} {:<18} {:<40} {value} (tol {:.1e})", row.suite, row.instance, row.metric, row.tolerance);
    }
    let failed = report.failures().count();
    println!(
        "{} rows, {} failed; report written to {}",
        report.rows.len(),
        failed,
        cfg.output_dir.join("report.json").display()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
