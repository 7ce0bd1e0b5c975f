use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

mod args;
mod cmd;
mod config;
mod error;
mod output;
mod units;

use args::{Cli, Command};
use config::{preset_book, ExperimentConfig, Task};
use error::{CliError, CliResult};

fn load_config(path: Option<&PathBuf>, task: Task) -> CliResult<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if path.is_some() && cfg.task != task {
        log::warn!("config task is {:?}; running it as {task:?}", cfg.task);
    }
    cfg.task = task;
    Ok(cfg)
}

/// Runs the command and returns the directory its artifacts went to.
fn dispatch(cli: &Cli) -> CliResult<Option<PathBuf>> {
    let book = preset_book(cli.presets.as_deref())?;
    match &cli.command {
        Command::Characterize(a) => {
            cmd::characterize::run(a, &book)?;
            Ok(Some(a.out.clone()))
        }
        Command::Fit(a) => {
            cmd::fit::run(a, &book)?;
            Ok(a.out.as_ref().and_then(|p| p.parent()).map(PathBuf::from))
        }
        Command::Simulate(a) => {
            cmd::simulate::run(a, &book)?;
            Ok(a.out.as_ref().and_then(|p| p.parent()).map(PathBuf::from))
        }
        Command::Sonds(a) => {
            let mut cfg = load_config(a.run.config.as_ref(), Task::Sonds)?;
            a.apply(&mut cfg);
            cmd::sonds::run(&cfg, &book)?;
            Ok(Some(cfg.output_dir))
        }
        Command::Neuro(a) => {
            let mut cfg = load_config(a.run.config.as_ref(), Task::Neuro)?;
            a.apply(&mut cfg);
            cmd::neuro::run(&cfg, &book, a.per_offset)?;
            Ok(Some(cfg.output_dir))
        }
        Command::Gridsearch(a) => {
            let mut cfg = load_config(a.run.config.as_ref(), Task::Sonds)?;
            a.run.apply(&mut cfg);
            a.data.apply(&mut cfg);
            let points = if a.gamma_points.is_some() || a.delta_points.is_some() || a.dt_points.is_some() {
                Some((a.gamma_points.unwrap_or(20), a.delta_points.unwrap_or(20), a.dt_points.unwrap_or(20)))
            } else {
                None
            };
            cmd::gridsearch::run(&cfg, &book, points, a.probe)?;
            Ok(Some(cfg.output_dir))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(error::EXIT_INPUT);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let argv: Vec<String> = std::env::args().collect();
    match dispatch(&cli) {
        Ok(dir) => {
            if let Some(d) = dir.filter(|d| d.is_dir()) {
                output::append_run_log(&d, &argv, 0);
            }
            ExitCode::SUCCESS
        }
        Err(CliError { code, msg }) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
