//! `ebaloha`: command-line front end to the backoff simulators and solvers.

mod commands;
mod config;
mod output;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{command, parse_config_text, Resolved, COMMANDS, GLOBAL};
use output::{Format, Sink};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(ebaloha::Error),
    Io(io::Error),
}

impl From<ebaloha::Error> for CliError {
    fn from(e: ebaloha::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use ebaloha::Error::*;
        match self {
            CliError::Config(_) | CliError::Core(Parameter(_) | Unsupported(_)) => 2,
            CliError::Io(_) | CliError::Core(Resource(_)) => 3,
            CliError::Core(Integrity(_) | Diagnostic(_)) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "I/O error: {e}"),
        }
    }
}

fn value_arg(name: &'static str, help: &'static str, default: Option<&'static str>) -> Arg {
    let help = match default {
        Some(d) => format!("{help} [default: {d}]"),
        None => help.to_string(),
    };
    Arg::new(name).long(name).value_name("VALUE").help(help).action(ArgAction::Set)
}

fn cli() -> Command {
    let mut root = Command::new("ebaloha")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Exponential-backoff ALOHA: simulation, exact solves and diagnostics")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("out")
                .long("out")
                .short('o')
                .value_name("PATH")
                .global(true)
                .value_parser(clap::value_parser!(PathBuf))
                .help("write records here instead of standard output"),
        )
        .arg(
            Arg::new("config")
                .long("config")
                .short('c')
                .value_name("PATH")
                .global(true)
                .value_parser(clap::value_parser!(PathBuf))
                .help("config file, or an earlier output to rerun"),
        );
    for p in GLOBAL {
        root = root.arg(value_arg(p.name, p.help, p.default).global(true));
    }
    for spec in COMMANDS {
        let mut sub = Command::new(spec.name).about(spec.about);
        for p in spec.params {
            sub = sub.arg(value_arg(p.name, p.help, p.default));
        }
        root = root.subcommand(sub);
    }
    root
}

fn flags(name: &str, m: &ArgMatches) -> BTreeMap<String, String> {
    let spec = command(name).expect("registered subcommand");
    let sections: [(&str, &[config::Param]); 2] = [("global", GLOBAL), (name, spec.params)];
    let mut out = BTreeMap::new();
    for (section, params) in sections {
        for p in params {
            if let Some(v) = m.get_one::<String>(p.name) {
                out.insert(format!("{section}.{}", p.name), v.clone());
            }
        }
    }
    out
}

fn execute(name: &str, m: &ArgMatches) -> Result<(), CliError> {
    let file = match m.get_one::<PathBuf>("config") {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    let spec = command(name).expect("registered subcommand");
    let cfg = Resolved::build(spec, &file, &flags(name, m))?;
    let format = match cfg.raw("format") {
        Some("jsonl") => Format::Jsonl,
        Some("csv") => Format::Csv,
        other => return Err(CliError::Config(format!("unknown format {other:?}, expected jsonl or csv"))),
    };
    // validate everything before creating the output file
    let replicas: usize = cfg.get("replicas")?;
    if replicas == 0 {
        return Err(ebaloha::Error::Parameter("replicas must be at least 1".into()).into());
    }
    let mut buf = Vec::new();
    {
        let writer: Box<dyn Write + '_> = Box::new(&mut buf);
        let mut sink = Sink::new(writer, format, &cfg)?;
        commands::run(&cfg, &mut sink)?;
        sink.finish()?;
    }
    match m.get_one::<PathBuf>("out") {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            f.write_all(&buf)?;
            f.flush()?;
        }
        None => io::stdout().lock().write_all(&buf)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    match execute(name, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ebaloha {name}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        cli().debug_assert();
    }

    #[test]
    fn flags_are_collected_per_section() {
        let m = cli().try_get_matches_from(["ebaloha", "classify", "--n", "4", "--seed", "9"]).unwrap();
        let (name, sub) = m.subcommand().unwrap();
        let f = flags(name, sub);
        assert_eq!(f.get("classify.n").map(String::as_str), Some("4"));
        assert_eq!(f.get("global.seed").map(String::as_str), Some("9"));
        assert_eq!(f.len(), 2);
    }
}
