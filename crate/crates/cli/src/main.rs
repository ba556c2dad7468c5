use beebo_cli::{export_plot_data, parse_runspec, run, CliError, RunOptions};
use beebo_core::problems::FAMILIES;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Batched energy-entropy Bayesian optimization benchmarks.
///
/// Exit codes: 0 success, 2 configuration error, 3 some runs failed,
/// 4 all failures numerical, 5 missing file, 6 unknown problem.
#[derive(Parser)]
#[command(name = "beebo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every run of a spec not yet recorded in the output manifest.
    Run {
        spec: PathBuf,
        /// Overrides `output_dir` of the spec.
        #[arg(long, env = "BEEBO_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        /// Overrides `parallelism` of the spec.
        #[arg(long, env = "BEEBO_PARALLELISM")]
        parallelism: Option<usize>,
    },
    /// Write per-run best-so-far curves and optimum distances as CSV.
    Export { results_dir: PathBuf },
    /// List the available problem families.
    ListProblems,
    /// Check a spec without running it.
    Validate { spec: PathBuf },
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            spec,
            output_dir,
            parallelism,
        } => {
            let spec = parse_runspec(&spec)?;
            let options = RunOptions::resolve(&spec, output_dir, parallelism);
            let report = run(&spec, &options)?;
            println!(
                "{} runs: {} executed, {} skipped, {} failed; results in {}",
                report.total,
                report.executed,
                report.skipped,
                report.failed,
                options.output_dir.display()
            );
            report.failure().map_or(Ok(()), Err)
        }
        Command::Export { results_dir } => {
            let report = export_plot_data(&results_dir)?;
            println!(
                "exported {} runs ({} files), {} failed runs skipped",
                report.runs,
                report.files.len(),
                report.failed
            );
            Ok(())
        }
        Command::ListProblems => {
            for (name, dims) in FAMILIES {
                println!("{name:<18} {dims}");
            }
            Ok(())
        }
        Command::Validate { spec } => {
            let spec = parse_runspec(&spec)?;
            println!(
                "valid: {} cells, {} runs",
                spec.cells.len(),
                spec.jobs()?.len()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
