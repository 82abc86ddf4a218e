//! `mltc`: data preparation, cross-validated distillation runs, swarm tuning,
//! evaluation, ablations and replication statistics.

mod commands;
mod config;
mod error;
mod output;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{Config, KEYS};
use error::CliError;
use output::VERSION;

const SUBCOMMANDS: [(&str, &str); 7] = [
    ("generate-synthetic", "Write a keyword-separable synthetic corpus"),
    ("sample", "Write a stratified subset of a corpus"),
    (
        "run",
        "Cross-validated training of one mode; writes predictions and metrics",
    ),
    ("tune", "Swarm search over the distillation hyperparameters"),
    ("evaluate", "Score a prediction file"),
    ("ablate", "Compare the four distillation variants on shared folds"),
    (
        "stats",
        "Descriptive statistics, t-tests and ANOVA over replication scores",
    ),
];

fn cli() -> Command {
    let mut cmd = Command::new("mltc")
        .version(VERSION)
        .about("Knowledge distillation for multi-label text classification")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for k in KEYS {
        let help = if k.default.is_empty() {
            k.help.to_owned()
        } else {
            format!("{} [default: {}]", k.help, k.default)
        };
        cmd = cmd.arg(
            Arg::new(k.name)
                .long(k.name)
                .value_name("VALUE")
                .help(help)
                .global(true)
                .action(ArgAction::Set),
        );
    }
    for (name, about) in SUBCOMMANDS {
        let mut sub = Command::new(name).about(about);
        sub = match name {
            "evaluate" => sub.arg(Arg::new("file").help("Prediction file (sets evaluate.predictions)")),
            "stats" => sub.arg(Arg::new("file").help("Replication file (sets stats.input)")),
            _ => sub,
        };
        cmd = cmd.subcommand(sub);
    }
    cmd
}

/// Defaults, then the `--config` file, then every flag given explicitly.
fn resolve(matches: &ArgMatches, sub: &ArgMatches, name: &str) -> Result<Config, CliError> {
    let mut config = Config::defaults();
    let flag = |key: &str| -> Option<String> {
        sub.get_one::<String>(key)
            .or_else(|| matches.get_one::<String>(key))
            .cloned()
    };
    if let Some(path) = flag("config") {
        config.load_file(Path::new(&path))?;
        config.set("config", &path)?;
    }
    for k in KEYS {
        if k.name == "config" {
            continue;
        }
        if let Some(v) = flag(k.name) {
            config.set(k.name, &v)?;
        }
    }
    if let Some(file) = sub.try_get_one::<String>("file").ok().flatten() {
        let key = if name == "evaluate" {
            "evaluate.predictions"
        } else {
            "stats.input"
        };
        config.set(key, file)?;
    }
    config.expand_preset()?;
    Ok(config)
}

fn execute(name: &str, config: &Config) -> Result<(), CliError> {
    let started = Instant::now();
    let workers = config.workers()?;
    // Caps fold-level parallelism; the swarm sizes its own pool from the same value.
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| CliError::internal("thread pool", e))?;
    let out = match name {
        "generate-synthetic" => commands::generate_synthetic(config)?,
        "sample" => commands::sample(config)?,
        "run" => commands::run(config)?,
        "tune" => commands::tune(config, workers)?,
        "evaluate" => commands::evaluate(config)?,
        "ablate" => commands::ablate(config)?,
        "stats" => commands::stats(config)?,
        other => return Err(CliError::Usage(format!("unknown subcommand {other:?}"))),
    };
    out.write_timing(workers, started)?;
    eprintln!("{name}: wrote {}", config.out_dir().display());
    Ok(())
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let result = resolve(&matches, sub, name).and_then(|config| execute(name, &config));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mltc {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
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
    fn flags_override_config_values() {
        let m = cli()
            .try_get_matches_from(["mltc", "run", "--seed", "9", "--folds.k", "3"])
            .unwrap();
        let (name, sub) = m.subcommand().unwrap();
        let c = resolve(&m, sub, name).unwrap();
        assert_eq!((c.get("seed"), c.get("folds.k")), ("9", "3"));
    }
}
