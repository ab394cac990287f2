use std::process::ExitCode;

use clap::Parser;
use log::LevelFilter;
use smoothqr_cli::RunConfig;

fn main() -> ExitCode {
    let config = RunConfig::parse();
    let level = match config.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    match smoothqr_cli::run(&config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // messages already embed their causes
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
