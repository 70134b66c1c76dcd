use std::path::Path;

use anyhow::{Context, Result};
use genolm::seq::{translate as translate_seq, NucleotideSequence};
use genolm::tokenize::{BpeTrainer, KmerEncoding, OffsetPolicy, Tokenizer};
use serde_json::json;

use crate::cli::{BpeTrainArgs, TokenizeArgs, TranslateArgs};
use crate::inputs::{self, ensure, DEFAULT_K};
use crate::settings::{usage, Settings};

/// Offset policy from `--offset` / `--random-offset`.
pub fn offset_policy(s: &mut Settings, offset: Option<usize>, random: bool, seed: u64) -> Result<OffsetPolicy> {
    let random = s.flag("random-offset", random)?;
    let offset = s.opt("offset", offset)?;
    match (random, offset) {
        (true, Some(_)) => Err(usage("--offset and --random-offset are mutually exclusive")),
        (true, None) => Ok(OffsetPolicy::UniformRandom { seed }),
        (false, o) => Ok(OffsetPolicy::Fixed(o.unwrap_or(0))),
    }
}

/// Encodes the `job`-th sequence. BPE ignores the offset policy.
pub fn encode(tok: &Tokenizer, seq: &NucleotideSequence, policy: OffsetPolicy, job: u64) -> Result<KmerEncoding> {
    match tok {
        Tokenizer::Kmer(kt) => {
            let spec = genolm::tokenize::KmerSpec::new(kt.k(), policy).map_err(|e| usage(e.to_string()))?;
            Ok(kt.encode_at(seq, spec.offset_for(job))?)
        }
        Tokenizer::Bpe(m) => Ok(KmerEncoding {
            offset_used: 0,
            ids: m.encode(seq)?,
            lead: String::new(),
            tail: String::new(),
        }),
    }
}

fn join_ids(ids: &[u32]) -> String {
    ids.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

pub fn tokenize(s: &mut Settings, a: TokenizeArgs, seed: u64) -> Result<()> {
    let tok = match inputs::tokenizer(s, a.tokenizer.k, a.tokenizer.tokenizer)? {
        Some(t) => t,
        None => {
            s.record("k", DEFAULT_K);
            Tokenizer::kmer(DEFAULT_K)?
        }
    };
    let input = s.opt::<String>("input", a.input)?;
    if s.flag("decode", a.decode)? {
        let lines: Vec<String> = if a.items.is_empty() {
            inputs::read_text(Path::new(input.as_deref().unwrap_or("-")))?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(str::to_string)
                .collect()
        } else {
            a.items
        };
        let decoded = lines
            .iter()
            .map(|l| {
                let ids = l
                    .split_whitespace()
                    .map(|t| t.parse::<u32>().with_context(|| format!("bad token id {t:?}")))
                    .collect::<Result<Vec<_>>>()?;
                Ok(tok.decode(&ids)?)
            })
            .collect::<Result<Vec<NucleotideSequence>>>()?;
        return s.emit(
            |w| {
                writeln!(w, "#index\tsequence")?;
                for (i, d) in decoded.iter().enumerate() {
                    writeln!(w, "{}\t{}", i + 1, d.as_str())?;
                }
                Ok(())
            },
            || json!(decoded.iter().map(|d| d.as_str()).collect::<Vec<_>>()),
        );
    }

    let policy = offset_policy(s, a.offset, a.random_offset, seed)?;
    let seqs = inputs::sequences(&a.items, input.as_deref())?;
    let encoded = seqs
        .iter()
        .enumerate()
        .map(|(i, seq)| encode(&tok, seq, policy, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let id = |i: usize| seqs[i].id.clone().unwrap_or_else(|| format!("seq{}", i + 1));
    s.emit(
        |w| {
            writeln!(w, "#id\toffset\tlead\ttail\tids")?;
            for (i, e) in encoded.iter().enumerate() {
                writeln!(w, "{}\t{}\t{}\t{}\t{}", id(i), e.offset_used, e.lead, e.tail, join_ids(&e.ids))?;
            }
            Ok(())
        },
        || {
            json!(encoded
                .iter()
                .enumerate()
                .map(|(i, e)| json!({"id": id(i), "encoding": e}))
                .collect::<Vec<_>>())
        },
    )
}

pub fn bpe_train(s: &mut Settings, a: BpeTrainArgs, seed: u64) -> Result<()> {
    let files = s.list("input", a.input)?;
    ensure(!files.is_empty(), "bpe-train needs at least one --input FASTA")?;
    let target = s.required::<usize>("vocab-size", a.vocab_size)?;
    let mut trainer = BpeTrainer::new(target, seed);
    trainer.max_training_nt = s.get("max-training-nt", a.max_training_nt, trainer.max_training_nt)?;
    let mut corpus = Vec::new();
    for f in &files {
        corpus.extend(inputs::read_fasta_file(Path::new(f))?);
    }
    let model = trainer.train(&corpus)?;
    eprintln!("trained {} merges, vocabulary {}", model.merges().len(), model.vocab().len());
    let text = serde_json::to_string_pretty(&Tokenizer::Bpe(model))? + "\n";
    s.emit_artifact("tokenizer", |w| w.write_all(text.as_bytes()))
}

pub fn translate(s: &mut Settings, a: TranslateArgs) -> Result<()> {
    let frame = s.get("frame", a.frame, 0usize)?;
    ensure(frame <= 2, "--frame must be 0, 1 or 2")?;
    let input = s.opt::<String>("input", a.input)?;
    let seqs = inputs::sequences(&a.sequences, input.as_deref())?;
    let reports = seqs
        .iter()
        .map(|q| translate_seq(q, frame))
        .collect::<Result<Vec<_>, _>>()?;
    let id = |i: usize| seqs[i].id.clone().unwrap_or_else(|| format!("seq{}", i + 1));
    s.emit(
        |w| {
            writeln!(w, "#id\tframe\tcomplete\tpremature_stop\tstarts_with_met\tprotein")?;
            for (i, r) in reports.iter().enumerate() {
                writeln!(
                    w,
                    "{}\t{frame}\t{}\t{}\t{}\t{}",
                    id(i),
                    r.complete,
                    r.premature_stop,
                    r.starts_with_met,
                    r.protein.as_str()
                )?;
            }
            Ok(())
        },
        || {
            json!(reports
                .iter()
                .enumerate()
                .map(|(i, r)| json!({
                    "id": id(i),
                    "frame": frame,
                    "complete": r.complete,
                    "premature_stop": r.premature_stop,
                    "starts_with_met": r.starts_with_met,
                    "protein": r.protein.as_str(),
                }))
                .collect::<Vec<_>>())
        },
    )
}
