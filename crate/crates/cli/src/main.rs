//! `aact`: generate data, train, evaluate and run experiment suites.
//!
//! Exit status is 0 on success, 1 on runtime failures and 2 on usage errors.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgMatches, Command};

use config::{RunConfig, UsageError, KEYS};

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn config_args(cmd: Command) -> Command {
    let defaults = RunConfig::default().entries();
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .value_parser(value_parser!(PathBuf))
            .help("key = value config file; flags override it"),
    );
    KEYS.iter().zip(defaults).fold(cmd, |cmd, ((key, help), (_, default))| {
        cmd.arg(
            Arg::new(*key)
                .long(flag_name(key))
                .value_name("VALUE")
                .help(format!("{help} [default: {default}]"))
                .help_heading("Config"),
        )
    })
}

fn path_arg(name: &'static str, help: &'static str, required: bool) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("PATH")
        .value_parser(value_parser!(PathBuf))
        .required(required)
        .help(help)
}

fn cli() -> Command {
    let sub = |name: &'static str, about: &'static str| config_args(Command::new(name).about(about));
    Command::new("aact")
        .about("Action anticipation with cycle transformations on synthetic procedural videos")
        .after_help("Set AACT_THREADS to cap evaluation workers (0 runs serially).")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            sub("gen-data", "Generate train and test datasets").arg(path_arg(
                "out",
                "training split path; the test split goes to <stem>.test.<ext>",
                true,
            )),
        )
        .subcommand(
            sub("train", "Train a model and write a checkpoint and history")
                .arg(path_arg("data", "training dataset (generated from the config if absent)", false))
                .arg(path_arg("val", "validation dataset", false))
                .arg(path_arg("out-dir", "output directory", true)),
        )
        .subcommand(
            sub("eval", "Evaluate a checkpoint and write a report")
                .arg(path_arg("checkpoint", "checkpoint to evaluate", true))
                .arg(path_arg("data", "test dataset (generated from the config if absent)", false))
                .arg(path_arg("out-dir", "output directory", true)),
        )
        .subcommand(
            sub("gradcheck", "Compare analytic gradients with finite differences")
                .arg(path_arg("out-dir", "directory for the config echo", false)),
        )
        .subcommand(
            sub("ablate", "Run an ablation suite and write reports and plot data")
                .arg(path_arg("out-dir", "output directory", true)),
        )
        .subcommand(
            sub("sweep-horizon", "Run the horizon sweep and write reports and plot data")
                .arg(path_arg("out-dir", "output directory", true)),
        )
        .version(env!("CARGO_PKG_VERSION"))
}

fn resolve(m: &ArgMatches) -> Result<RunConfig, UsageError> {
    let mut config = RunConfig::default();
    if let Some(path) = m.get_one::<PathBuf>("config") {
        config.apply_file(path)?;
    }
    for (key, _) in KEYS {
        if let Some(value) = m.get_one::<String>(key) {
            config
                .set(key, value)
                .map_err(|e| UsageError(format!("--{}: {e}", flag_name(key))))?;
        }
    }
    Ok(config)
}

fn path<'a>(m: &'a ArgMatches, name: &str) -> Option<&'a Path> {
    m.get_one::<PathBuf>(name).map(PathBuf::as_path)
}

fn run(name: &str, m: &ArgMatches) -> anyhow::Result<()> {
    let config = resolve(m)?;
    let out_dir = || path(m, "out-dir").expect("required by clap");
    match name {
        "gen-data" => commands::gen_data(&config, path(m, "out").expect("required by clap")),
        "train" => commands::train_cmd(&config, path(m, "data"), path(m, "val"), out_dir()),
        "eval" => commands::eval_cmd(
            &config,
            path(m, "checkpoint").expect("required by clap"),
            path(m, "data"),
            out_dir(),
        ),
        "gradcheck" => commands::gradcheck_cmd(&config, path(m, "out-dir")),
        "ablate" => commands::ablate_cmd(&config, out_dir()),
        "sweep-horizon" => commands::sweep_horizon_cmd(&config, out_dir()),
        other => unreachable!("unhandled subcommand {other}"),
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match run(name, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
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
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "epochs = 3\nd = 8\n").unwrap();
        let m = cli()
            .try_get_matches_from(["aact", "gradcheck", "--config", file.to_str().unwrap(), "--d", "12"])
            .unwrap();
        let config = resolve(m.subcommand().unwrap().1).unwrap();
        assert_eq!((config.epochs, config.d), (3, 12));
    }

    #[test]
    fn bad_flag_values_name_the_flag() {
        let m = cli().try_get_matches_from(["aact", "gradcheck", "--batch-size", "x"]).unwrap();
        let e = resolve(m.subcommand().unwrap().1).unwrap_err();
        assert!(e.0.starts_with("--batch-size"), "{e}");
    }
}
