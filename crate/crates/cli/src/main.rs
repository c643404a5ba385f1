mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;
use commands::{CliError, Rendered};
use config::{Cli, Command, Format};

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let out: Rendered = match &cli.command {
        Command::Estimate(a) => commands::estimate(a, cli.threads)?,
        Command::Compare(a) => commands::compare(a, cli.threads)?,
        Command::Simulate(a) => commands::simulate(a, cli.threads)?,
        Command::Oracle(a) => commands::oracle(a)?,
    };
    let write = |path: &std::path::Path, s: &str| {
        std::fs::write(path, s).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
    };
    match (&cli.output, &cli.command) {
        (Some(prefix), Command::Simulate(_)) => {
            let mut json = prefix.clone().into_os_string();
            json.push(".json");
            let mut text = prefix.clone().into_os_string();
            text.push(".txt");
            write(json.as_ref(), &out.json)?;
            write(text.as_ref(), &out.text)?;
        }
        (Some(path), _) => write(path, pick(cli.format, &out))?,
        (None, _) => print!("{}", pick(cli.format, &out)),
    }
    Ok(())
}

fn pick(format: Format, out: &Rendered) -> &str {
    match format {
        Format::Json => &out.json,
        Format::Text => &out.text,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
