mod args;
mod commands;
mod config;
mod output;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use thiserror::Error;

use args::{Cli, Command};
use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("cannot write outputs: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad configuration or input, 3 for failures after validation.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Compute(_) | CliError::Output(_) => 3,
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::from_cli(cli)?;
    let out_dir = cfg.out_dir();
    let result = match &cli.command {
        Command::Synth(_) => commands::synth(&cfg, &out_dir)?,
        Command::Gram(_) => commands::gram(&cfg)?,
        Command::Eval(_) => commands::eval(&cfg)?,
        Command::Early(_) => commands::early(&cfg)?,
    };
    result.files.write_all(&out_dir)?;
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(result.stdout.as_bytes())?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tskernel: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
