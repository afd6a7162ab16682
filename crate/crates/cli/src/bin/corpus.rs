//! `corpus build-vocab` and `corpus split`.

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use titlepress_cli::{run, BuildVocabArgs, Command, GlobalArgs, SplitArgs};

#[derive(Parser)]
#[command(name = "corpus", version, about = "Vocabulary and dataset splits")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    BuildVocab(BuildVocabArgs),
    Split(SplitArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let command = match cli.command {
        Sub::BuildVocab(a) => Command::BuildVocab(a),
        Sub::Split(a) => Command::Split(a),
    };
    match run(&cli.global, &command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
