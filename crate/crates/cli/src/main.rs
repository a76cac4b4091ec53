mod args;
mod commands;
mod config;
mod report;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command, Overrides};
use config::RunConfig;
use report::CliError;

fn resolve(o: &Overrides) -> Result<Option<RunConfig>, CliError> {
    let cfg = RunConfig::resolve(o)?;
    if o.print_config {
        println!("{}", cfg.to_json());
        return Ok(None);
    }
    Ok(Some(cfg))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Convert(o) => resolve(o)?.map_or(Ok(()), |c| commands::convert(&c)),
        Command::Synth {
            common,
            grid,
            sample_rate,
            delay,
        } => {
            let mut cfg = RunConfig::resolve(common)?;
            if let Some(g) = grid {
                cfg.synth.grid_points = *g;
            }
            if let Some(fs) = sample_rate {
                cfg.synth.sample_rate = *fs;
            }
            if let Some(d) = delay {
                cfg.synth.delay_taps = *d;
            }
            if common.print_config {
                println!("{}", cfg.to_json());
                return Ok(());
            }
            commands::synth(&cfg)
        }
        Command::Mask(o) => resolve(o)?.map_or(Ok(()), |c| commands::mask(&c)),
        Command::Solve(o) => resolve(o)?.map_or(Ok(()), |c| commands::solve(&c)),
        Command::Optimize { common, init, mask } => {
            resolve(common)?.map_or(Ok(()), |c| commands::optimize_cmd(&c, init.as_deref(), mask.as_deref()))
        }
        Command::Eval {
            common,
            candidates,
            mask,
        } => resolve(common)?.map_or(Ok(()), |c| commands::eval(&c, candidates, mask.as_deref())),
        Command::Export {
            common,
            candidates,
            mask,
        } => resolve(common)?.map_or(Ok(()), |c| commands::export(&c, candidates, mask.as_deref())),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::usage("usage.invalid_arguments", e.render().to_string().trim());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
