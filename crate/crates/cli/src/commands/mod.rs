mod design;
mod embed;
mod ingest;
mod lm;
mod recover;
mod seqtools;
mod vep;

use anyhow::Result;

use crate::cli::{Command, DesignCmd, EmbedCmd, IngestCmd, RecoverCmd, VepCmd};
use crate::settings::Settings;

pub fn dispatch(cmd: Command, s: &mut Settings, seed: u64) -> Result<()> {
    match cmd {
        Command::Tokenize(a) => seqtools::tokenize(s, a, seed),
        Command::BpeTrain(a) => seqtools::bpe_train(s, a, seed),
        Command::Translate(a) => seqtools::translate(s, a),
        Command::Ingest(IngestCmd::Extract(a)) => ingest::extract(s, a),
        Command::Ingest(IngestCmd::Stats(a)) => ingest::stats(s, a),
        Command::Ingest(IngestCmd::GenerTasks(a)) => ingest::gener_tasks(s, a, seed),
        Command::TrainMarkov(a) => lm::train_markov(s, a, seed),
        Command::Generate(a) => lm::generate(s, a, seed),
        Command::Recover(RecoverCmd::Build(a)) => recover::build(s, a, seed),
        Command::Recover(RecoverCmd::Run(a)) => recover::run(s, a, seed),
        Command::Vep(VepCmd::Score(a)) => vep::score(s, a),
        Command::Vep(VepCmd::Eval(a)) => vep::eval(s, a),
        Command::Design(DesignCmd::Label(a)) => design::label(s, a),
        Command::Design(DesignCmd::Fit(a)) => design::fit(s, a),
        Command::Design(DesignCmd::Rank(a)) => design::rank(s, a, seed),
        Command::Design(DesignCmd::Contrib(a)) => design::contrib(s, a),
        Command::Embed(EmbedCmd::Project(a)) => embed::project(s, a),
        Command::Embed(EmbedCmd::Silhouette(a)) => embed::silhouette(s, a),
    }
}
