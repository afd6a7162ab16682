//! `pretrain gen`: the replaced-token-detection corpus.

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use titlepress_cli::{run, Command, GenArgs, GlobalArgs};

#[derive(Parser)]
#[command(name = "pretrain", version, about = "Pre-training corpus generation")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    Gen(GenArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let Sub::Gen(a) = cli.command;
    match run(&cli.global, &Command::PretrainGen(a)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
