//! Variant effect prediction by nucleotide marginalization of token
//! distributions and reference/alternative log-likelihood ratios.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analytics::{auprc, auroc, AnalyticsError};
use crate::lm::{CausalLm, LmError, TokenDistribution};
use crate::sample::MaskedLm;
use crate::seq::{base_rank, NucleotideSequence};
use crate::tokenize::{TokenizeError, Tokenizer, Vocabulary};

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-18;
/// Scores are clamped to ±SCORE_CAP.
pub const SCORE_CAP: f64 = 40.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VepError {
    #[error("{seq_id}:{pos}: reference allele {expected} but genome has {found}")]
    RefMismatch {
        seq_id: String,
        pos: usize,
        expected: char,
        found: char,
    },
    #[error("unknown sequence id {0:?}")]
    UnknownSequence(String),
    #[error("{seq_id}:{pos} is outside the contig (length {len})")]
    OutOfBounds { seq_id: String, pos: usize, len: usize },
    #[error("tokenizer vocabulary does not match the model vocabulary")]
    VocabularyMismatch,
    #[error("phase {j} is outside a token of width {width}")]
    BadPhase { j: usize, width: usize },
    #[error("the model assigns no mass to nucleotide tokens")]
    NoSequenceMass,
    #[error("line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantLabel {
    Benign,
    Pathogenic,
}

impl std::str::FromStr for VariantLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "benign" | "0" => Ok(Self::Benign),
            "pathogenic" | "1" => Ok(Self::Pathogenic),
            _ => Err(format!("unknown label {s:?}")),
        }
    }
}

/// A single-nucleotide variant at a 1-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variant {
    pub seq_id: String,
    pub pos: usize,
    pub ref_allele: u8,
    pub alt_allele: u8,
    pub label: Option<VariantLabel>,
}

impl Variant {
    pub fn swapped(&self) -> Self {
        Self {
            ref_allele: self.alt_allele,
            alt_allele: self.ref_allele,
            ..self.clone()
        }
    }
}

/// Parses `seq_id, pos, ref, alt[, label]` rows; `#` lines are comments.
pub fn read_variants_tsv<R: BufRead>(r: R) -> Result<Vec<Variant>, VepError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let bad = |reason: String| VepError::BadRow { line: i + 1, reason };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if !(4..=5).contains(&cols.len()) {
            return Err(bad(format!("expected 4 or 5 columns, found {}", cols.len())));
        }
        let pos: usize = cols[1].parse().map_err(|_| bad(format!("bad position {:?}", cols[1])))?;
        if pos == 0 {
            return Err(bad("positions are 1-based".into()));
        }
        let allele = |s: &str| match s.as_bytes() {
            [b] if base_rank(b.to_ascii_uppercase()).is_some() => Ok(b.to_ascii_uppercase()),
            _ => Err(bad(format!("allele {s:?} is not one of A, C, G, T"))),
        };
        let (ref_allele, alt_allele) = (allele(cols[2])?, allele(cols[3])?);
        if ref_allele == alt_allele {
            return Err(bad("reference and alternative alleles are equal".into()));
        }
        let label = match cols.get(4).filter(|s| !s.is_empty()) {
            Some(s) => Some(s.parse().map_err(bad)?),
            None => None,
        };
        out.push(Variant {
            seq_id: cols[0].to_string(),
            pos,
            ref_allele,
            alt_allele,
            label,
        });
    }
    Ok(out)
}

/// Checks every variant against the genome.
pub fn validate_variants(genome: &[NucleotideSequence], variants: &[Variant]) -> Result<(), VepError> {
    let idx = genome_index(genome);
    for v in variants {
        contig_for(&idx, v)?;
    }
    Ok(())
}

fn genome_index(genome: &[NucleotideSequence]) -> HashMap<&str, &NucleotideSequence> {
    genome.iter().filter_map(|s| Some((s.id.as_deref()?, s))).collect()
}

fn contig_for<'a>(idx: &HashMap<&str, &'a NucleotideSequence>, v: &Variant) -> Result<&'a NucleotideSequence, VepError> {
    let contig = idx
        .get(v.seq_id.as_str())
        .ok_or_else(|| VepError::UnknownSequence(v.seq_id.clone()))?;
    if v.pos == 0 || v.pos > contig.len() {
        return Err(VepError::OutOfBounds {
            seq_id: v.seq_id.clone(),
            pos: v.pos,
            len: contig.len(),
        });
    }
    let found = contig.as_bytes()[v.pos - 1];
    if found != v.ref_allele {
        return Err(VepError::RefMismatch {
            seq_id: v.seq_id.clone(),
            pos: v.pos,
            expected: v.ref_allele as char,
            found: found as char,
        });
    }
    Ok(contig)
}

/// Distribution over A, C, G, T at one position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NucleotideMarginal {
    pub probs: [f64; 4],
}

impl NucleotideMarginal {
    pub fn prob(&self, base: u8) -> f64 {
        base_rank(base).map_or(0.0, |r| self.probs[r])
    }
}

/// Collapses a token distribution to the nucleotide at offset `j` of the next
/// token. Specials, and tokens shorter than `j + 1`, are dropped and the
/// remaining mass renormalized.
pub fn marginalize(dist: &TokenDistribution, vocab: &Vocabulary, j: usize) -> Result<NucleotideMarginal, VepError> {
    if dist.len() != vocab.len() {
        return Err(VepError::VocabularyMismatch);
    }
    let mut probs = [0.0; 4];
    for (id, &p) in dist.probs().iter().enumerate() {
        if p == 0.0 || vocab.is_special(id as u32) {
            continue;
        }
        if let Ok(c) = vocab.token_char(id as u32, j) {
            probs[base_rank(c).expect("sequence tokens are ACGT")] += p;
        }
    }
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Err(VepError::NoSequenceMass);
    }
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(NucleotideMarginal { probs })
}

fn check_phase(tokenizer: &Tokenizer, j: usize) -> Result<(), VepError> {
    let width = tokenizer.fixed_width().unwrap_or_else(|| {
        tokenizer
            .vocab()
            .tokens()
            .iter()
            .enumerate()
            .filter(|(i, _)| !tokenizer.vocab().is_special(*i as u32))
            .map(|(_, t)| t.len())
            .max()
            .unwrap_or(1)
    });
    if j >= width {
        return Err(VepError::BadPhase { j, width });
    }
    Ok(())
}

fn check_vocab(tokenizer: &Tokenizer, model: &Vocabulary) -> Result<(), VepError> {
    if tokenizer.vocab().tokens() != model.tokens() {
        return Err(VepError::VocabularyMismatch);
    }
    Ok(())
}

/// Marginal of the nucleotide at offset `j` of the token following
/// `context_before`. The context is left-trimmed to end on a token boundary.
pub fn marginal_nucleotide_prob(
    lm: &dyn CausalLm,
    tokenizer: &Tokenizer,
    context_before: &NucleotideSequence,
    j: usize,
) -> Result<NucleotideMarginal, VepError> {
    check_vocab(tokenizer, lm.vocabulary())?;
    check_phase(tokenizer, j)?;
    let ids = tokenizer.encode(&tokenizer.align_right(context_before))?;
    if let Some(max) = lm.max_context() {
        if ids.len() > max {
            return Err(LmError::ContextOverflow { len: ids.len(), max }.into());
        }
    }
    marginalize(&lm.next_distribution(&ids)?, lm.vocabulary(), j)
}

/// Phase placement of the variant inside the scored token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Variant at the last position of the token (`j = k - 1`).
    TokenEnd,
    Fixed(usize),
    /// Mean score over every `j` in `0..k`.
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VepOptions {
    pub phase: Phase,
    /// Nucleotides of context (causal: before the scored token; masked: on
    /// each side of it).
    pub window: usize,
}

impl Default for VepOptions {
    fn default() -> Self {
        Self {
            phase: Phase::TokenEnd,
            window: 1_024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VepScore {
    /// ln p(ref) - ln p(alt), floored and capped. Positive favours the reference.
    pub score: f64,
    /// The context window was cut short by a contig end.
    pub truncated: bool,
}

/// `ln(max(p_ref, floor)) - ln(max(p_alt, floor))` clamped to ±40.
pub fn log_ratio(m: &NucleotideMarginal, ref_allele: u8, alt_allele: u8) -> f64 {
    let (r, a) = (m.prob(ref_allele).max(PROB_FLOOR), m.prob(alt_allele).max(PROB_FLOOR));
    (r.ln() - a.ln()).clamp(-SCORE_CAP, SCORE_CAP)
}

fn phases(tokenizer: &Tokenizer, phase: Phase) -> Result<Vec<usize>, VepError> {
    let k = tokenizer.fixed_width().unwrap_or(1);
    Ok(match phase {
        Phase::TokenEnd => vec![k - 1],
        Phase::Fixed(j) => {
            check_phase(tokenizer, j)?;
            vec![j]
        }
        Phase::Average => (0..k).collect(),
    })
}

/// Causal-mode score: the variant sits at offset `j` of the next token and the
/// model sees up to `window` nucleotides before that token.
///
/// Near the contig start, phases that would place the token before position 1
/// are skipped and the result is marked truncated.
pub fn vep_score(
    lm: &dyn CausalLm,
    tokenizer: &Tokenizer,
    genome: &[NucleotideSequence],
    variant: &Variant,
    opts: &VepOptions,
) -> Result<VepScore, VepError> {
    let idx = genome_index(genome);
    let contig = contig_for(&idx, variant)?;
    score_causal(lm, tokenizer, contig, variant, opts)
}

fn score_causal(
    lm: &dyn CausalLm,
    tokenizer: &Tokenizer,
    contig: &NucleotideSequence,
    variant: &Variant,
    opts: &VepOptions,
) -> Result<VepScore, VepError> {
    let v = variant.pos - 1;
    let mut truncated = false;
    let mut total = 0.0;
    let mut used = 0usize;
    for j in phases(tokenizer, opts.phase)? {
        if j > v {
            truncated = true;
            continue;
        }
        let end = v - j;
        let start = end.saturating_sub(opts.window);
        truncated |= end < opts.window;
        let m = marginal_nucleotide_prob(lm, tokenizer, &contig.slice(start, end), j)?;
        total += log_ratio(&m, variant.ref_allele, variant.alt_allele);
        used += 1;
    }
    if used == 0 {
        // no phase fits: score at the contig start with empty context
        let m = marginal_nucleotide_prob(lm, tokenizer, &contig.slice(0, 0), v)?;
        return Ok(VepScore {
            score: log_ratio(&m, variant.ref_allele, variant.alt_allele),
            truncated: true,
        });
    }
    Ok(VepScore {
        score: total / used as f64,
        truncated,
    })
}

/// Masked-mode score: the token holding the variant at offset `j` is replaced
/// by MASK, with up to `window` nucleotides of context on each side.
pub fn mlm_vep_score(
    mlm: &dyn MaskedLm,
    tokenizer: &Tokenizer,
    genome: &[NucleotideSequence],
    variant: &Variant,
    opts: &VepOptions,
) -> Result<VepScore, VepError> {
    let idx = genome_index(genome);
    let contig = contig_for(&idx, variant)?;
    score_masked(mlm, tokenizer, contig, variant, opts)
}

fn score_masked(
    mlm: &dyn MaskedLm,
    tokenizer: &Tokenizer,
    contig: &NucleotideSequence,
    variant: &Variant,
    opts: &VepOptions,
) -> Result<VepScore, VepError> {
    check_vocab(tokenizer, mlm.vocabulary())?;
    let mask = mlm
        .vocabulary()
        .mask()
        .ok_or(LmError::Unsupported("masking without a <mask> token"))?;
    let k = tokenizer.fixed_width().unwrap_or(1);
    let v = variant.pos - 1;
    let mut truncated = false;
    let mut total = 0.0;
    let mut used = 0usize;
    for j in phases(tokenizer, opts.phase)? {
        if j > v || v - j + k > contig.len() {
            truncated = true;
            continue;
        }
        let tok_start = v - j;
        let tok_end = tok_start + k;
        let left_start = tok_start.saturating_sub(opts.window);
        let right_end = (tok_end + opts.window).min(contig.len());
        truncated |= tok_start < opts.window || tok_end + opts.window > contig.len();
        let mut ids = tokenizer.encode(&tokenizer.align_right(&contig.slice(left_start, tok_start)))?;
        ids.push(mask);
        ids.extend(tokenizer.encode(&contig.slice(tok_end, right_end))?);
        if let Some(max) = mlm.max_context() {
            if ids.len() > max {
                return Err(LmError::ContextOverflow { len: ids.len(), max }.into());
            }
        }
        let m = marginalize(&mlm.distribution_at_mask(&ids)?, mlm.vocabulary(), j)?;
        total += log_ratio(&m, variant.ref_allele, variant.alt_allele);
        used += 1;
    }
    if used == 0 {
        return Err(VepError::OutOfBounds {
            seq_id: variant.seq_id.clone(),
            pos: variant.pos,
            len: contig.len(),
        });
    }
    Ok(VepScore {
        score: total / used as f64,
        truncated,
    })
}

/// Model used for scoring a batch.
pub enum Scorer<'a> {
    Causal(&'a dyn CausalLm),
    Masked(&'a dyn MaskedLm),
}

/// Scores every variant in parallel; output order follows input order.
pub fn score_variants(
    scorer: &Scorer<'_>,
    tokenizer: &Tokenizer,
    genome: &[NucleotideSequence],
    variants: &[Variant],
    opts: &VepOptions,
) -> Result<Vec<VepScore>, VepError> {
    let idx = genome_index(genome);
    let contigs: Vec<&NucleotideSequence> = variants
        .iter()
        .map(|v| contig_for(&idx, v))
        .collect::<Result<_, _>>()?;
    variants
        .par_iter()
        .zip(contigs)
        .map(|(v, contig)| match scorer {
            Scorer::Causal(lm) => score_causal(*lm, tokenizer, contig, v, opts),
            Scorer::Masked(mlm) => score_masked(*mlm, tokenizer, contig, v, opts),
        })
        .collect()
}

pub fn write_scores_tsv<W: Write>(mut w: W, variants: &[Variant], scores: &[VepScore]) -> io::Result<()> {
    writeln!(w, "#seq_id\tpos\tref\talt\tlabel\tvep_score\ttruncated")?;
    for (v, s) in variants.iter().zip(scores) {
        let label = match v.label {
            Some(VariantLabel::Benign) => "benign",
            Some(VariantLabel::Pathogenic) => "pathogenic",
            None => "",
        };
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{:.10}\t{}",
            v.seq_id, v.pos, v.ref_allele as char, v.alt_allele as char, label, s.score, s.truncated
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VepMetrics {
    pub auroc: f64,
    pub auprc: f64,
    pub n: usize,
    pub n_positive: usize,
    pub positive_class: &'static str,
    /// Higher values of this statistic are taken to indicate the positive class.
    pub statistic: &'static str,
}

/// AUROC and AUPRC with pathogenic as the positive class and the VEP score
/// (higher means the alternative allele is disfavoured) as the statistic.
pub fn evaluate_vep(scores: &[f64], pathogenic: &[bool]) -> Result<VepMetrics, VepError> {
    Ok(VepMetrics {
        auroc: auroc(scores, pathogenic)?,
        auprc: auprc(scores, pathogenic)?,
        n: scores.len(),
        n_positive: pathogenic.iter().filter(|&&p| p).count(),
        positive_class: "pathogenic",
        statistic: "vep_score",
    })
}
