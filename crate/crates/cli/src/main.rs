//! `crisis`: data preparation, training, detection, explanation and
//! evaluation for the crisis detector.

mod commands;
mod config;
mod html;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{flag_name, RunConfig, KEYS};

const SUBCOMMANDS: &[(&str, &str)] = &[
    ("prep", "split a labeled dataset into train/val/test files"),
    ("synth", "write a synthetic corpus (and optionally a treebank)"),
    ("train", "train the neural or logistic detector"),
    ("detect", "score posts with a trained detector"),
    ("explain", "emit explanation spans for posts"),
    ("train-parser", "train the tagger and dependency parser on CoNLL-U"),
    ("evaluate", "detection or explanation metrics against gold data"),
    ("visualize", "write an attention heatmap as static HTML"),
];

fn cli() -> Command {
    let mut cmd = Command::new("crisis")
        .about("Crisis detection with extractive explanations")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_parser(clap::value_parser!(PathBuf))
                .help("flat key = value file; flags override it"),
        );
    for (key, default, help) in KEYS {
        let help = if default.is_empty() { help.to_string() } else { format!("{help} [default: {default}]") };
        cmd = cmd.arg(
            Arg::new(*key)
                .long(flag_name(key))
                .value_name(key.to_uppercase())
                .global(true)
                .action(ArgAction::Set)
                .help(help),
        );
    }
    for (name, about) in SUBCOMMANDS {
        cmd = cmd.subcommand(Command::new(*name).about(*about));
    }
    cmd.after_help("Every configuration key is also a flag: `epochs = 5` in the file is `--epochs 5`.")
}

fn effective(m: &ArgMatches) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = m.get_one::<PathBuf>("config") {
        cfg.apply_file(p)?;
    }
    for (key, _, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn run(m: &ArgMatches) -> anyhow::Result<()> {
    let (name, sub) = m.subcommand().expect("subcommand required");
    let cfg = effective(sub)?;
    match name {
        "prep" => commands::prep(&cfg),
        "synth" => commands::synth(&cfg),
        "train" => commands::train(&cfg),
        "detect" => commands::detect(&cfg),
        "explain" => commands::explain(&cfg),
        "train-parser" => commands::train_parser_cmd(&cfg),
        "evaluate" => commands::evaluate(&cfg),
        "visualize" => commands::visualize(&cfg),
        _ => unreachable!("unknown subcommand {name}"),
    }
}

fn main() -> ExitCode {
    let m = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&m) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
