mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command as ClapCommand};

use crate::commands::Command;
use crate::config::{RunConfig, KEYS};
use crate::error::CliError;

const THREADS_ENV: &str = "DIMER_OTOC_THREADS";

const COMMANDS: &[(Command, &str)] = &[
    (
        Command::StabilityScan,
        "stability exponent λs(Θ) over a Θ range",
    ),
    (
        Command::PhasePortrait,
        "energy landscape, fixed points and separatrix",
    ),
    (Command::Otoc, "quantum OTOC with classical overlay columns"),
    (
        Command::Husimi,
        "Husimi density frames of the evolving state",
    ),
    (Command::Scan, "fitted growth exponents over Θ and N"),
];

fn cli() -> ClapCommand {
    let mut app = ClapCommand::new("dimer-otoc")
        .about("OTOC growth around the unstable fixed point of a Bose-Hubbard dimer")
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .global(true)
                .value_name("FILE")
                .help("key = value configuration file; flags override it"),
        )
        .after_help(format!("Set {THREADS_ENV} to limit worker threads."));
    for &(key, default, help) in KEYS {
        let help = if default.is_empty() {
            help.to_string()
        } else {
            format!("{help} [default: {default}]")
        };
        app = app.arg(
            Arg::new(key)
                .long(key.replace('_', "-"))
                .global(true)
                .action(ArgAction::Set)
                .allow_negative_numbers(true)
                .value_name("VALUE")
                .help(help),
        );
    }
    for &(cmd, about) in COMMANDS {
        app = app.subcommand(ClapCommand::new(cmd.name()).about(about));
    }
    app
}

fn resolve(matches: &ArgMatches, name: &str) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = matches.get_one::<String>("config") {
        let (command, entries) = RunConfig::load(&PathBuf::from(path))?;
        if let Some(c) = command.filter(|c| c != name) {
            return Err(CliError::Config(format!(
                "{path} is for command `{c}`, not `{name}`"
            )));
        }
        for (k, v) in entries {
            cfg.set(k, v)?;
        }
    }
    for &(key, _, _) in KEYS {
        if let Some(v) = matches.get_one::<String>(key) {
            cfg.set(key, v.clone())?;
        }
    }
    Ok(cfg)
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!("{THREADS_ENV} = `{raw}` is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let cmd = COMMANDS
        .iter()
        .map(|c| c.0)
        .find(|c| c.name() == name)
        .expect("registered subcommand");
    let result = init_threads()
        .and_then(|_| resolve(sub, name))
        .and_then(|cfg| commands::run(cmd, &cfg));
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("dimer-otoc {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
