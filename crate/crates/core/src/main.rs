use clap::{Args, Parser, Subcommand};
use emscat::cli::config::{apply_overrides, load_config, resolve, Overrides, Resolved};
use emscat::cli::pipeline::{self, exit_code, stage, StagedError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "emscat",
    version,
    about = "Forward scattering and contrast reconstruction for weakly absorbing media"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a scattering dataset and write it as CSV
    Synth(RunArgs),
    /// Solve the forward problem for one incident wave and write the field
    Forward(RunArgs),
    /// Reconstruct the contrast from a dataset in the output directory
    Invert(RunArgs),
    /// Synthesize data and reconstruct in one run
    Pipeline(RunArgs),
    /// Check the configuration, medium, and quadratures
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the configuration
    #[arg(long)]
    output: Option<PathBuf>,
    /// Noise seed, overriding the configuration
    #[arg(long)]
    seed: Option<u64>,
    /// Fixed regularization order, bypassing the automatic choice
    #[arg(long)]
    n: Option<usize>,
    /// Suppress progress notes
    #[arg(long)]
    quiet: bool,
}

fn prepare(args: &RunArgs) -> Result<Resolved, StagedError> {
    let mut raw = stage("config", load_config(&args.config))?;
    apply_overrides(
        &mut raw,
        &Overrides { seed: args.seed, n: args.n, output: args.output.clone() },
    );
    stage("config", resolve(raw))
}

fn run(cli: Cli) -> Result<(), StagedError> {
    match cli.command {
        Command::Synth(a) => pipeline::run_synth(&prepare(&a)?, a.quiet),
        Command::Forward(a) => pipeline::run_forward(&prepare(&a)?, a.quiet),
        Command::Invert(a) => pipeline::run_invert(&prepare(&a)?, a.quiet).map(|_| ()),
        Command::Pipeline(a) => pipeline::run_pipeline(&prepare(&a)?, a.quiet).map(|_| ()),
        Command::Validate(a) => pipeline::run_validate(&prepare(&a)?, a.quiet),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("emscat: {err}");
            ExitCode::from(exit_code(&err.error))
        }
    }
}
