use std::collections::HashSet;
use std::io;
use std::path::Path;

use anyhow::{Context, Result};
use genolm::design::{build_prefix_dataset, ActivityBand, ActivityRecord, PromoterClass};
use genolm::lm::{MarkovConfig, MarkovLm};
use genolm::sample::{conditioned_generate_batch, generate_batch, DecodeMode, SamplerConfig};
use genolm::seq::fasta::write_fasta;
use genolm::seq::NucleotideSequence;
use genolm::tokenize::Tokenizer;
use serde_json::json;

use super::seqtools::{encode, offset_policy};
use crate::cli::{GenerateArgs, SamplingArgs, TrainMarkovArgs};
use crate::inputs::{self, ensure, parse_list, DEFAULT_K};
use crate::settings::{usage, Settings};

/// Rows of `sequence ... band`: the first column is the sequence and the last
/// an activity band.
fn read_prefixed(path: &str) -> Result<(Vec<ActivityRecord>, Vec<ActivityBand>)> {
    let text = inputs::read_text(Path::new(path))?;
    let (mut recs, mut bands) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let ctx = || format!("{path} line {}", i + 1);
        ensure(cols.len() >= 2, "prefixed rows need a sequence and a band column").with_context(ctx)?;
        recs.push(ActivityRecord {
            sequence: NucleotideSequence::validate(cols[0]).with_context(ctx)?,
            activity: 0.0,
            promoter_class: PromoterClass::Dev,
        });
        bands.push(cols[cols.len() - 1].trim().parse().map_err(anyhow::Error::msg).with_context(ctx)?);
    }
    Ok((recs, bands))
}

pub fn train_markov(s: &mut Settings, a: TrainMarkovArgs, seed: u64) -> Result<()> {
    let tok = match inputs::tokenizer(s, a.tokenizer.k, a.tokenizer.tokenizer)? {
        Some(t) => t,
        None => {
            s.record("k", DEFAULT_K);
            Tokenizer::kmer(DEFAULT_K)?
        }
    };
    let order = s.get("order", a.order, 5usize)?;
    let alphas: Vec<f64> = parse_list(&s.get("alpha", a.alpha, "0.1".to_string())?, "alpha")?;
    let mut cfg = MarkovConfig::new(order, alphas[0]);
    cfg.alphas = alphas;
    if let Some(raw) = s.opt::<String>("lambdas", a.lambdas)? {
        cfg = cfg.with_lambdas(parse_list(&raw, "lambda")?);
    }
    let policy = offset_policy(s, a.offset, a.random_offset, seed)?;
    let plain = s.list("corpus", a.corpus)?;
    let prefixed = s.list("prefixed", a.prefixed)?;
    ensure(
        !plain.is_empty() || !prefixed.is_empty(),
        "train-markov needs --corpus and/or --prefixed input",
    )?;

    let mut corpus: Vec<Vec<u32>> = Vec::new();
    let mut job = 0u64;
    for f in &plain {
        for rec in inputs::read_fasta_file(Path::new(f))? {
            for (start, end) in rec.unambiguous_runs() {
                let ids = encode(&tok, &rec.slice(start, end), policy, job)?.ids;
                job += 1;
                if !ids.is_empty() {
                    corpus.push(ids);
                }
            }
        }
    }
    for f in &prefixed {
        let (recs, bands) = read_prefixed(f)?;
        corpus.extend(build_prefix_dataset(&recs, &bands, &tok)?);
    }
    let tokens: usize = corpus.iter().map(Vec::len).sum();
    let model = MarkovLm::train(tok, &corpus, &cfg)?;
    eprintln!("trained order-{order} model on {} sequences, {tokens} tokens", corpus.len());
    s.emit_artifact("model", |w| model.write_to(w).map_err(io::Error::other))
}

pub fn sampler(s: &mut Settings, a: SamplingArgs, greedy: bool, max_new_tokens: usize, seed: u64) -> Result<SamplerConfig> {
    let d = SamplerConfig::default();
    let cfg = SamplerConfig {
        temperature: s.get("temperature", a.temperature, d.temperature)?,
        top_p: s.get("top-p", a.top_p, d.top_p)?,
        max_new_tokens,
        seed,
        mode: if greedy { DecodeMode::Greedy } else { DecodeMode::Sample },
        max_context: s.opt("max-context", a.max_context)?,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

pub fn generate(s: &mut Settings, a: GenerateArgs, seed: u64) -> Result<()> {
    let tok = inputs::tokenizer(s, a.model.tokenizer.k, a.model.tokenizer.tokenizer)?;
    let prefix = match s.opt::<String>("prefix", a.prefix)? {
        Some(p) => Some(p.parse::<ActivityBand>().map_err(usage)?),
        None => None,
    };
    let context = NucleotideSequence::validate(&s.get("seed-context", a.seed_context, String::new())?)?;
    let n = s.get("n", a.n, 1usize)?;
    let max_attempts = s.get("max-attempts", a.max_attempts, n.saturating_mul(10).max(1))?;
    let max_new = s.get("max-new-tokens", a.max_new_tokens, 256usize)?;
    let greedy = s.flag("greedy", a.greedy)?;
    let cfg = sampler(s, a.sampling, greedy, max_new, seed)?;
    let mut reference: HashSet<String> = HashSet::new();
    for f in s.list("dedup-against", a.dedup_against)? {
        reference.extend(inputs::read_fasta_file(Path::new(&f))?.iter().map(|r| r.to_string()));
    }
    let (model, tok) = inputs::model(s, a.model.model, tok, a.model.timeout)?;
    let dedup = (!reference.is_empty()).then_some(&reference);
    let batch = match prefix {
        Some(band) => conditioned_generate_batch(
            model.lm(),
            &tok,
            band.prefix_token(),
            &context,
            &cfg,
            n,
            dedup,
            max_attempts,
        )?,
        None => {
            let prompt = tok.encode(&tok.align_right(&context))?;
            generate_batch(model.lm(), &tok, &prompt, &cfg, n, dedup, max_attempts)?
        }
    };
    if batch.report.exhausted {
        eprintln!(
            "warning: produced {} of {} sequences in {} attempts",
            batch.report.produced, n, batch.report.attempts
        );
    }
    let label = prefix.map_or("none", ActivityBand::label);
    let records: Vec<NucleotideSequence> = batch
        .sequences
        .iter()
        .enumerate()
        .map(|(i, q)| {
            q.clone()
                .with_id(format!("gen{}", i + 1))
                .with_meta("description", format!("prefix={label}"))
        })
        .collect();
    s.emit(
        |w| write_fasta(w, &records),
        || {
            json!({
                "sequences": batch.sequences.iter().map(|q| q.to_string()).collect::<Vec<_>>(),
                "report": batch.report,
            })
        },
    )
}
