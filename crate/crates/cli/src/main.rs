mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{ConfigErrors, RunConfig, KEYS};

const COMMANDS: &[(&str, &str)] = &[
    ("simulate", "simulate a trade series from a parameter set"),
    ("fit", "estimate a model on a trade series"),
    ("filter", "run the impact filter with given parameters"),
    ("irf", "per-trade cumulative impulse responses"),
    ("impact", "permanent-impact estimates over trade windows"),
    ("diagnose", "residual diagnostics and information criteria"),
    ("benchmark", "simulation benchmarks with a pass/fail table"),
];

/// Exit codes by failure category.
pub mod exit {
    pub const CONFIG: u8 = 2;
    pub const INPUT: u8 = 3;
    pub const NUMERICAL: u8 = 4;
    pub const BENCHMARK: u8 = 5;
    pub const OTHER: u8 = 1;
}

fn cli() -> Command {
    let mut cmd = Command::new("sdamh")
        .about("Score-driven Hasbrouck-type models of trade impact")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .value_name("FILE")
                .global(true)
                .help("flat key = value configuration file"),
        )
        .arg(
            Arg::new("verbose")
                .long("verbose")
                .short('v')
                .action(ArgAction::Count)
                .global(true)
                .help("more log output (repeatable)"),
        );
    for (key, aliases, help) in KEYS {
        let mut arg = Arg::new(*key).long(key.replace('_', "-")).value_name("VALUE").global(true).help(*help);
        for a in *aliases {
            arg = arg.alias(*a);
        }
        cmd = cmd.arg(arg);
    }
    for (name, about) in COMMANDS {
        cmd = cmd.subcommand(Command::new(*name).about(*about));
    }
    cmd
}

fn flag_values(m: &ArgMatches) -> Vec<(String, String)> {
    KEYS.iter()
        .filter_map(|(k, _, _)| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect()
}

fn category(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigErrors>().is_some() {
        return exit::CONFIG;
    }
    if let Some(e) = err.downcast_ref::<sdamh::Error>() {
        use sdamh::Error::*;
        return match e {
            Parse { .. } | Io(_) | Csv(_) | InvalidEvent { .. } => exit::INPUT,
            InvalidParams(_) | InvalidArgument(_) | UnsupportedVariant { .. } | UnknownScenario(_) | AlreadyMirrored => {
                exit::CONFIG
            }
            _ => exit::NUMERICAL,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() || err.downcast_ref::<serde_json::Error>().is_some() {
        return exit::INPUT;
    }
    exit::OTHER
}

fn main() -> ExitCode {
    let m = cli().get_matches();
    let (name, sub) = m.subcommand().expect("a subcommand is required");
    let level = match sub.get_count("verbose") {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let file = sub.get_one::<String>("config").map(PathBuf::from);
    let result = RunConfig::resolve(file.as_deref(), &flag_values(sub))
        .map_err(anyhow::Error::from)
        .and_then(|cfg| commands::run(name, &cfg));
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            match e.downcast_ref::<ConfigErrors>() {
                Some(c) => eprint!("error: {c}"),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::from(category(&e))
        }
    }
}
