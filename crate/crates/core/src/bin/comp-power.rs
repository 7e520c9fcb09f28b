use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use comp_power::experiment::{compare_step_sizes, run_experiment, validate, write_comparison_csv, ExperimentConfig};

#[derive(Parser)]
#[command(name = "comp-power", version, about = "CoMP power allocation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured strategy on every seed and write reports.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        allow_nonconverged: bool,
    },
    /// Tabulate iterations to each dual-gap threshold for both step-size rules.
    CompareSteps {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and build every seed's instance.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn out_dir(config: &ExperimentConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn dispatch(command: Command) -> Result<(), comp_power::experiment::ExperimentError> {
    match command {
        Command::Run {
            config,
            out,
            allow_nonconverged,
        } => {
            let config = ExperimentConfig::load(&config)?;
            let dir = out_dir(&config, out);
            let summary = run_experiment(&config, &dir, allow_nonconverged)?;
            println!("wrote {} files to {}", summary.manifest.files.len() + 1, dir.display());
        }
        Command::CompareSteps { config, out } => {
            let config = ExperimentConfig::load(&config)?;
            let rows = compare_step_sizes(&config)?;
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path).map_err(|source| {
                        comp_power::experiment::ExperimentError::Io { path: path.clone(), source }
                    })?;
                    write_comparison_csv(&rows, file).map_err(|source| {
                        comp_power::experiment::ExperimentError::Io { path, source }
                    })?;
                }
                None => write_comparison_csv(&rows, std::io::stdout().lock())
                    .map_err(|source| comp_power::experiment::ExperimentError::Io { path: "-".into(), source })?,
            }
        }
        Command::Validate { config } => {
            let config = ExperimentConfig::load(&config)?;
            let seeds = validate(&config)?;
            println!("ok: {seeds} seeds");
        }
    }
    Ok(())
}
