//! Loading sequences, genomes, tokenizers and models from the command line.

use std::fs::{self, File};
use std::io::{self, BufReader, Read};
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use genolm::ingest::{parse_bed_like, parse_genbank, AnnotationRecord};
use genolm::lm::{BridgeLm, CausalLm, MarkovLm, UniformLm};
use genolm::recover::check_vocabulary;
use genolm::seq::fasta::{parse_fasta, read_fasta};
use genolm::seq::NucleotideSequence;
use genolm::tokenize::Tokenizer;

use crate::settings::{usage, Settings};

pub fn read_text(path: &Path) -> Result<String> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

pub fn read_fasta_file(path: &Path) -> Result<Vec<NucleotideSequence>> {
    read_fasta(open(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Sequences given inline, from a file (FASTA, or one sequence per line), or
/// from stdin when neither is given.
pub fn sequences(inline: &[String], input: Option<&str>) -> Result<Vec<NucleotideSequence>> {
    if !inline.is_empty() {
        return inline
            .iter()
            .enumerate()
            .map(|(i, s)| Ok(NucleotideSequence::validate(s)?.with_id(format!("seq{}", i + 1))))
            .collect();
    }
    let text = read_text(Path::new(input.unwrap_or("-")))?;
    if text.trim_start().starts_with('>') {
        return Ok(parse_fasta(&text)?);
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, s)| Ok(NucleotideSequence::validate(s)?.with_id(format!("seq{}", i + 1))))
        .collect()
}

/// Genome plus annotations, either from GenBank files or from FASTA plus a
/// BED-like table.
pub fn genome_and_annotations(
    s: &mut Settings,
    genbank: Vec<String>,
    fasta: Option<String>,
    annotations: Option<String>,
) -> Result<(Vec<NucleotideSequence>, Vec<AnnotationRecord>)> {
    let genbank = s.list("genbank", genbank)?;
    let fasta = s.opt("fasta", fasta)?;
    let annotations = s.opt("annotations", annotations)?;
    match (genbank.is_empty(), fasta, annotations) {
        (false, None, None) => {
            let (mut genome, mut ann) = (Vec::new(), Vec::new());
            for path in &genbank {
                let text = read_text(Path::new(path))?;
                for rec in parse_genbank(&text).with_context(|| format!("parsing {path}"))? {
                    let mut seq = rec.sequence;
                    if let Some(t) = rec.taxon_group {
                        seq = seq.with_meta("taxon", t.label());
                    }
                    genome.push(seq);
                    ann.extend(rec.genes);
                }
            }
            Ok((genome, ann))
        }
        (true, Some(f), Some(a)) => {
            let genome = read_fasta_file(Path::new(&f))?;
            let ann = parse_bed_like(&read_text(Path::new(&a))?).with_context(|| format!("parsing {a}"))?;
            Ok((genome, ann))
        }
        _ => Err(usage("give either --genbank FILE... or both --fasta and --annotations")),
    }
}

/// `--tokenizer FILE` (JSON written by `bpe-train`) or `--k K`.
pub fn tokenizer(s: &mut Settings, k: Option<usize>, file: Option<String>) -> Result<Option<Tokenizer>> {
    let k = s.opt("k", k)?;
    let file = s.opt("tokenizer", file)?;
    match (k, file) {
        (Some(_), Some(_)) => Err(usage("--k and --tokenizer are mutually exclusive")),
        (Some(k), None) => Ok(Some(Tokenizer::kmer(k).map_err(|e| usage(e.to_string()))?)),
        (None, Some(f)) => {
            let text = read_text(Path::new(&f))?;
            Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing tokenizer {f}"))?))
        }
        (None, None) => Ok(None),
    }
}

pub const DEFAULT_K: usize = 6;

pub enum Model {
    Markov(MarkovLm),
    Uniform(UniformLm),
    Bridge(BridgeLm),
}

impl Model {
    pub fn lm(&self) -> &dyn CausalLm {
        match self {
            Model::Markov(m) => m,
            Model::Uniform(m) => m,
            Model::Bridge(m) => m,
        }
    }
}

/// Resolves `--model`: a saved Markov model path, `uniform`, or
/// `bridge:cmd:<shell command>` / `bridge:tcp:<host:port>`. Returns the model
/// and the tokenizer to use with it; an explicit tokenizer must match the
/// model's vocabulary.
pub fn model(s: &mut Settings, spec: Option<String>, tok: Option<Tokenizer>, timeout_s: Option<f64>) -> Result<(Model, Tokenizer)> {
    let spec = s.required::<String>("model", spec)?;
    let timeout = s.get("timeout", timeout_s, genolm::lm::DEFAULT_TIMEOUT.as_secs_f64())?;
    if !(timeout.is_finite() && timeout > 0.0) {
        return Err(usage("--timeout must be positive"));
    }
    let (model, tok) = if spec == "uniform" {
        let tok = tok.map_or_else(|| Tokenizer::kmer(DEFAULT_K), Ok)?;
        (Model::Uniform(UniformLm::over_sequence_tokens(tok.vocab().clone())), tok)
    } else if let Some(endpoint) = spec.strip_prefix("bridge:") {
        let tok = tok.map_or_else(|| Tokenizer::kmer(DEFAULT_K), Ok)?;
        let lm = BridgeLm::open(endpoint, Duration::from_secs_f64(timeout))?;
        (Model::Bridge(lm), tok)
    } else {
        let lm = MarkovLm::load(&spec).with_context(|| format!("loading model {spec}"))?;
        let tok = tok.unwrap_or_else(|| lm.tokenizer().clone());
        (Model::Markov(lm), tok)
    };
    check_vocabulary(&tok, model.lm())?;
    Ok((model, tok))
}

pub fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| usage(format!("bad {what} {p:?}"))))
        .collect()
}

pub fn ensure(cond: bool, msg: &str) -> Result<()> {
    if !cond {
        return Err(usage(msg));
    }
    Ok(())
}
