//! `gwolab`: command-line front end for the exact engine, the simulator and the limit law.

mod config;
mod run;

use std::process::ExitCode;

use clap::Parser;

use config::Cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GWOLAB_LOG", "warn")).init();
    let cli = Cli::parse();
    match run::run(cli) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("gwolab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
