use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use dsgd_lab::{parse_config, run_experiment, CliError};

/// Decentralized SGD stability and generalization experiments.
#[derive(Parser)]
#[command(name = "dsgd-lab", version)]
struct Args {
    /// Experiment configuration (JSON).
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads for replicate runs.
    #[arg(long, env = "DSGD_LAB_JOBS", default_value_t = 1)]
    jobs: usize,
    /// Overrides the base seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(args: Args) -> Result<(), CliError> {
    let mut config = parse_config(&args.config)?;
    if let Some(dir) = args.output_dir {
        config.output_dir = dir;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.jobs == 0 {
        return Err(CliError::Input("jobs: must be at least 1".into()));
    }
    let outcome = run_experiment(&config, args.jobs)?;
    println!("{}", config.output_dir.join("summary.json").display());
    eprintln!("wrote {} files", outcome.files.len() + 1);
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dsgd-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
