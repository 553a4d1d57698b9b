use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedproj::config::ExperimentConfig;
use fedproj::experiment::{compare_costs, output_root, run_experiment, RunRecord, OUTPUT_DIR_ENV};
use fedproj::Error;

#[derive(Parser)]
#[command(name = "fedproj", version, about = "Byzantine-robust two-server federated learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its results.
    Run {
        config: PathBuf,
        /// Output root (defaults to $FEDPROJ_OUTPUT_DIR, then ./runs).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the costs of two runs (second / first).
    Compare {
        first: PathBuf,
        second: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

/// Exit code per error category.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } => 2,
        Error::Io(_) => 3,
        Error::Comparison(_) => 4,
        Error::Dataset(_) | Error::Partition(_) => 5,
        _ => 1,
    }
}

fn run(config: &Path, out: Option<&Path>) -> fedproj::Result<()> {
    let root = output_root(out);
    log::debug!("output root {} ({OUTPUT_DIR_ENV} overrides the default)", root.display());
    let result = run_experiment(config, &root)?;
    println!("{}", result.dir.display());
    if let Some(last) = result.reports.last() {
        let ma = last.ma.map_or("-".to_string(), |m| format!("{:.4}", m));
        println!(
            "rounds {}, final ma {ma}, tpr {:.3}, tnr {:.3}, k {}",
            result.reports.len(),
            last.tpr,
            last.tnr,
            last.k
        );
    }
    Ok(())
}

fn compare(first: &Path, second: &Path, json: bool) -> fedproj::Result<()> {
    let table = compare_costs(&RunRecord::load(first)?, &RunRecord::load(second)?)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&table)?);
    } else {
        print!("{}", table.to_table());
    }
    Ok(())
}

fn validate(config: &Path) -> fedproj::Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    cfg.validate()?;
    println!(
        "ok: mode {}, filter {}, n = {}, k = {}",
        cfg.mode.name(),
        cfg.defense.filter.name(),
        cfg.per_round,
        cfg.target_dimension()?
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out } => run(config, out.as_deref()),
        Command::Compare { first, second, json } => compare(first, second, *json),
        Command::Validate { config } => validate(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
    }
}
