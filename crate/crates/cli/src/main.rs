mod commands;
mod config;
mod output;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use config::{Cli, RunConfig};

/// Caps rayon's global pool when `SHORTPKT_THREADS` is set.
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("SHORTPKT_THREADS") else { return Ok(()) };
    let threads: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("SHORTPKT_THREADS must be a positive integer, got `{raw}`"))?;
    if threads == 0 {
        bail!("SHORTPKT_THREADS must be a positive integer, got 0");
    }
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let cfg = RunConfig { flags: cli.flags.merge_config()? };
    let table = commands::run(cli.command, &cfg)?;
    match cfg.out() {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            let mut w = BufWriter::new(file);
            table.write(cfg.format(), &mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = std::io::stdout().lock();
            table.write(cfg.format(), &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
