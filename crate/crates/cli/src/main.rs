use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use kslab_cli::config::resolve_output_dir;
use kslab_cli::output::write_outcome;
use kslab_cli::{run, CliError, ExperimentConfig, Subcommand};

/// Keller-Segel numerics laboratory.
///
/// Exit codes: 0 all checks pass, 1 a check failed, 2 invalid config, 3 numerical failure.
#[derive(Parser)]
#[command(name = "kslab", version)]
struct Cli {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// TOML config; defaults apply to every missing key.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides KSLAB_OUTPUT_DIR and the config's output_dir.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match drive(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("kslab {}: {e}", cli.subcommand.name());
            e.exit_code()
        }
    }
}

fn drive(cli: &Cli) -> Result<ExitCode, CliError> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(ExitCode::SUCCESS);
    }
    let outcome = run(cli.subcommand, &cfg)?;
    let dir = resolve_output_dir(cli.output_dir.as_deref(), &cfg);
    let written = write_outcome(&outcome, &dir)?;
    let report = &outcome.report;
    for c in &report.checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        println!("{status} {}: value {} target {} tolerance {}", c.name, c.value, c.target, c.tolerance);
    }
    if let Some(v) = report.data.get("verdict").and_then(|v| v.as_str()) {
        println!("{v}");
    }
    println!("config hash {}", report.config_hash);
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    if report.pass {
        Ok(ExitCode::SUCCESS)
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        eprintln!("kslab {}: failed {}", cli.subcommand.name(), names.join(", "));
        Ok(ExitCode::from(kslab_cli::EXIT_CHECK_FAILED))
    }
}
