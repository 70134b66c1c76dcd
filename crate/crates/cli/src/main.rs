mod cli;
mod commands;
mod inputs;
mod settings;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use cli::{Cli, Command, DesignCmd, EmbedCmd, IngestCmd, RecoverCmd, VepCmd};
use settings::{Settings, UsageError};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Tokenize(_) => "tokenize",
        Command::BpeTrain(_) => "bpe-train",
        Command::Ingest(IngestCmd::Extract(_)) => "ingest extract",
        Command::Ingest(IngestCmd::Stats(_)) => "ingest stats",
        Command::Ingest(IngestCmd::GenerTasks(_)) => "ingest gener-tasks",
        Command::TrainMarkov(_) => "train-markov",
        Command::Generate(_) => "generate",
        Command::Recover(RecoverCmd::Build(_)) => "recover build",
        Command::Recover(RecoverCmd::Run(_)) => "recover run",
        Command::Vep(VepCmd::Score(_)) => "vep score",
        Command::Vep(VepCmd::Eval(_)) => "vep eval",
        Command::Design(DesignCmd::Label(_)) => "design label",
        Command::Design(DesignCmd::Fit(_)) => "design fit",
        Command::Design(DesignCmd::Rank(_)) => "design rank",
        Command::Design(DesignCmd::Contrib(_)) => "design contrib",
        Command::Embed(EmbedCmd::Project(_)) => "embed project",
        Command::Embed(EmbedCmd::Silhouette(_)) => "embed silhouette",
        Command::Translate(_) => "translate",
    }
}

fn subcommand_help(name: &str) -> String {
    let mut cmd = Cli::command();
    cmd.build();
    for part in name.split(' ') {
        match cmd.find_subcommand(part) {
            Some(c) => cmd = c.clone(),
            None => break,
        }
    }
    cmd.render_help().to_string()
}

fn threads(s: &mut Settings, flag: Option<usize>) -> anyhow::Result<usize> {
    let env = std::env::var("GENOLM_THREADS").ok().and_then(|v| v.parse().ok());
    let default = env.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let n = s.get("threads", flag, default)?;
    inputs::ensure(n > 0, "--threads must be at least 1")?;
    Ok(n)
}

fn run(cli: Cli, s: &mut Settings) -> anyhow::Result<()> {
    let n = threads(s, cli.global.threads)?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    let seed = s.get("seed", cli.global.seed, 0u64)?;
    commands::dispatch(cli.command, s, seed)?;
    s.warn_unused();
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                ErrorKind::InvalidSubcommand | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    if e.kind() == ErrorKind::InvalidSubcommand {
                        eprintln!("\n{}", Cli::command().render_help());
                    }
                    ExitCode::from(EXIT_USAGE)
                }
                _ => {
                    let _ = e.print();
                    ExitCode::from(EXIT_USAGE)
                }
            };
        }
    };
    let name = command_name(&cli.command);
    let mut settings = match Settings::new(name, cli.global.config.as_deref(), cli.global.json, cli.global.out.clone()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(if e.is::<UsageError>() { EXIT_USAGE } else { EXIT_DATA });
        }
    };
    match run(cli, &mut settings) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\n{}", subcommand_help(name));
            ExitCode::from(EXIT_USAGE)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
