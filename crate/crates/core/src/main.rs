use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use mixdiff::runner::{self, Command, Overrides, OUTPUT_DIR_ENV};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    Check,
    Train,
    Sample,
    Mix,
    Curve,
    Confusion,
}

/// Conditional diffusion sampling with run-time condition mixing.
#[derive(Debug, Parser)]
#[command(name = "mixdiff", version)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Global seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = OUTPUT_DIR_ENV)]
    out: Option<PathBuf>,
    /// Reverse sampling steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Mixed-in weight for two-condition mixes and the curve grid.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    kmax: Option<f64>,
    #[arg(long)]
    kmin: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Sub::Check => Command::Check,
        Sub::Train => Command::Train,
        Sub::Sample => Command::Sample,
        Sub::Mix => Command::Mix,
        Sub::Curve => Command::Curve,
        Sub::Confusion => Command::Confusion,
    };
    let overrides = Overrides {
        seed: cli.seed,
        steps: cli.steps,
        gamma: cli.gamma,
        k_max: cli.kmax,
        k_min: cli.kmin,
    };
    let result = runner::load_config(&cli.config)
        .and_then(|cfg| cfg.with_overrides(&overrides))
        .and_then(|cfg| {
            let out = runner::output_dir(cli.out.as_deref(), &cfg);
            runner::run(command, &cfg, &out)
        });
    match result {
        Ok(summary) => {
            for f in summary.failed_checks.iter() {
                eprintln!("check failed: {f}");
            }
            println!(
                "wrote {} to {}",
                summary.outputs.join(", "),
                summary.out_dir.display()
            );
            if summary.failed_checks.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(runner::exit_code(&e) as u8)
        }
    }
}
