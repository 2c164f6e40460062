#![allow(clippy::neg_cmp_op_on_partial_ord)]
mod args;
mod common;
mod config;
mod failure;
mod fusion_cmds;
mod scoring;
mod vqc_cmd;

use std::ffi::OsString;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};
use failure::CliResult;

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Prepare(a) => fusion_cmds::prepare(a),
        Command::Search(a) => fusion_cmds::search(a),
        Command::Calibrate(a) => fusion_cmds::calibrate(a),
        Command::FitFusion(a) => fusion_cmds::fit_fusion(a),
        Command::BuildDelta(a) => fusion_cmds::build_delta(a),
        Command::TrainVqc(a) => vqc_cmd::train_vqc(a),
        Command::Score(a) => scoring::score(a),
        Command::Evaluate(a) => scoring::evaluate_cmd(a),
    }
}

fn run(argv: Vec<OsString>) -> i32 {
    let cmd = Cli::command()
        .args_override_self(true)
        .mut_subcommands(|s| s.args_override_self(true));
    let argv = match config::expand(argv, &cmd) {
        Ok(a) => a,
        Err(f) => {
            eprintln!("{}", f.to_json());
            return f.exit_code();
        }
    };
    let matches = match cmd.try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    init_logging(cli.verbose);
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(f) => {
            log::debug!("{f}");
            eprintln!("{}", f.to_json());
            f.exit_code()
        }
    }
}

fn main() {
    std::process::exit(run(std::env::args_os().collect()));
}

#[cfg(test)]
mod tests {
    use super::*;
    use failure::Failure;

    #[test]
    fn flags_override_config() {
        let cmd = Cli::command()
            .args_override_self(true)
            .mut_subcommands(|s| s.args_override_self(true));
        let argv: Vec<OsString> = [
            "geoq", "search", "--data", "a.csv", "--label", "y", "--seed", "1", "--seed", "7",
        ]
        .iter()
        .map(OsString::from)
        .collect();
        let m = cmd.try_get_matches_from(argv).unwrap();
        let cli = Cli::from_arg_matches(&m).unwrap();
        match cli.command {
            Command::Search(a) => assert_eq!(a.data.seed, 7),
            _ => panic!("wrong subcommand"),
        }
    }

    #[test]
    fn missing_subcommand_is_usage_error() {
        assert_eq!(run(vec!["geoq".into(), "frobnicate".into()]), 2);
        assert_eq!(Failure::usage("x").exit_code(), 2);
        assert_eq!(Failure::data("x").exit_code(), 3);
        assert_eq!(Failure::artifact("x").exit_code(), 4);
    }
}
