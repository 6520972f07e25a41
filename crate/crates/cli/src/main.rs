use std::process::ExitCode;

use clap::Parser;
use specnorm_cli::error::EXIT_INVALID;
use specnorm_cli::{run, Cli, CliError};

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SPECNORM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Input(format!(
            "SPECNORM_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Input(format!("cannot size the thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| run(&cli, &mut std::io::stdout().lock()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("specnorm: {e}");
            let code = e.exit_code();
            debug_assert!(code != 0);
            ExitCode::from(u8::try_from(code).unwrap_or(EXIT_INVALID as u8))
        }
    }
}
