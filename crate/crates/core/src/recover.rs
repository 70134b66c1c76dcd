//! Sequence recovery: given a genomic prompt, how many of the following
//! nucleotides does a model reproduce?

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, Write};

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ingest::{taxon_label, FunctionalRegion, Strand, TaxonGroup};
use crate::lm::CausalLm;
use crate::rng::job_rng;
use crate::sample::{generate_job, strip_eos, DecodeMode, SampleError, SamplerConfig};
use crate::seq::{NucleotideSequence, SeqError};
use crate::tokenize::{TokenizeError, Tokenizer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecoverError {
    #[error("reference of {len} nt is shorter than the scored length {needed}")]
    ReferenceTooShort { len: usize, needed: usize },
    #[error("lengths must be positive")]
    ZeroLength,
    #[error("group {group}: {needed} items requested but only {available} eligible loci")]
    InsufficientData {
        group: String,
        needed: usize,
        available: usize,
    },
    #[error("tokenizer vocabulary ({tokenizer}) does not match the model vocabulary ({model})")]
    VocabularyMismatch { tokenizer: String, model: String },
    #[error("line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error(transparent)]
    Seq(#[from] SeqError),
}

/// Fraction of the first `len` positions where `generated` matches
/// `reference`. Positions past the end of `generated` count as mismatches.
pub fn recovery_accuracy(reference: &[u8], generated: &[u8], len: usize) -> Result<f64, RecoverError> {
    if len == 0 {
        return Err(RecoverError::ZeroLength);
    }
    if reference.len() < len {
        return Err(RecoverError::ReferenceTooShort {
            len: reference.len(),
            needed: len,
        });
    }
    let hits = reference[..len]
        .iter()
        .zip(generated)
        .filter(|(r, g)| r == g)
        .count();
    Ok(hits as f64 / len as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryItem {
    pub prompt: NucleotideSequence,
    pub reference: NucleotideSequence,
    pub taxon_group: Option<TaxonGroup>,
}

/// Where within an eligible region the reference continuation starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// At the region's 5' end, so the prompt is upstream non-gene context.
    #[default]
    RegionStart,
    /// Uniformly at random among positions leaving room for the reference.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryDatasetConfig {
    pub prompt_len: usize,
    pub predict_len: usize,
    pub per_group_n: usize,
    pub anchor: Anchor,
    /// Groups to sample; `None` means every group present in the regions.
    pub groups: Option<Vec<Option<TaxonGroup>>>,
    pub seed: u64,
}

impl Default for RecoveryDatasetConfig {
    fn default() -> Self {
        Self {
            prompt_len: 6_144,
            predict_len: 30,
            per_group_n: 100,
            anchor: Anchor::RegionStart,
            groups: None,
            seed: 0,
        }
    }
}

/// Builds a balanced recovery set: `per_group_n` items per taxonomic group,
/// each a reference lying inside one functional region on its annotated
/// strand, prompted by the `prompt_len` nucleotides immediately upstream.
///
/// Loci whose region piece is shorter than `predict_len`, or whose prompt
/// would leave the contig or cross an N, are ineligible.
pub fn build_recovery_dataset(
    regions: &[FunctionalRegion],
    genome: &[NucleotideSequence],
    cfg: &RecoveryDatasetConfig,
) -> Result<Vec<RecoveryItem>, RecoverError> {
    if cfg.prompt_len == 0 || cfg.predict_len == 0 {
        return Err(RecoverError::ZeroLength);
    }
    let by_id: HashMap<&str, &NucleotideSequence> =
        genome.iter().filter_map(|s| Some((s.id.as_deref()?, s))).collect();
    let mut by_group: BTreeMap<Option<TaxonGroup>, Vec<&FunctionalRegion>> = BTreeMap::new();
    for r in regions {
        by_group.entry(r.source.taxon_group).or_default().push(r);
    }
    let groups: Vec<Option<TaxonGroup>> = match &cfg.groups {
        Some(g) => g.clone(),
        None => by_group.keys().copied().collect(),
    };

    let mut items = Vec::new();
    for (gi, group) in groups.iter().enumerate() {
        if cfg.per_group_n == 0 {
            continue;
        }
        let mut rng = job_rng(cfg.seed, gi as u64);
        let candidates = by_group.get(group).map(Vec::as_slice).unwrap_or(&[]);
        let mut eligible: Vec<(&FunctionalRegion, usize)> = Vec::new();
        for r in candidates {
            let Some(contig) = by_id.get(r.source.seq_id.as_str()) else {
                continue;
            };
            let room = r.sequence.len().saturating_sub(cfg.predict_len);
            if r.sequence.len() < cfg.predict_len {
                continue;
            }
            let offset = match cfg.anchor {
                Anchor::RegionStart => 0,
                Anchor::Uniform => rng.gen_range(0..=room),
            };
            if locus(contig, r, offset, cfg).is_some() {
                eligible.push((r, offset));
            }
        }
        if eligible.len() < cfg.per_group_n {
            return Err(RecoverError::InsufficientData {
                group: taxon_label(*group).to_string(),
                needed: cfg.per_group_n,
                available: eligible.len(),
            });
        }
        let mut picks = index::sample(&mut rng, eligible.len(), cfg.per_group_n).into_vec();
        picks.sort_unstable();
        for i in picks {
            let (r, offset) = eligible[i];
            let contig = by_id[r.source.seq_id.as_str()];
            let (prompt, reference) = locus(contig, r, offset, cfg).expect("checked eligible");
            items.push(RecoveryItem {
                prompt,
                reference,
                taxon_group: *group,
            });
        }
    }
    Ok(items)
}

/// Prompt and reference for a region piece, both on the annotated strand.
fn locus(
    contig: &NucleotideSequence,
    r: &FunctionalRegion,
    offset: usize,
    cfg: &RecoveryDatasetConfig,
) -> Option<(NucleotideSequence, NucleotideSequence)> {
    let (p, l) = (cfg.prompt_len, cfg.predict_len);
    // 0-based half-open piece coordinates on the plus strand
    let (s0, e0) = (r.start - 1, r.end);
    let (prompt, reference) = match r.source.strand {
        Strand::Plus => {
            let ref_start = s0 + offset;
            if ref_start < p || ref_start + l > e0 {
                return None;
            }
            (contig.slice(ref_start - p, ref_start), contig.slice(ref_start, ref_start + l))
        }
        Strand::Minus => {
            let ref_end = e0.checked_sub(offset)?;
            if ref_end + p > contig.len() || ref_end < s0 + l {
                return None;
            }
            (
                contig.slice(ref_end, ref_end + p).reverse_complement(),
                contig.slice(ref_end - l, ref_end).reverse_complement(),
            )
        }
    };
    if prompt.has_ambiguous() || reference.has_ambiguous() {
        return None;
    }
    Some((prompt, reference))
}

pub fn write_dataset_tsv<W: Write>(mut w: W, items: &[RecoveryItem]) -> io::Result<()> {
    writeln!(w, "#prompt\treference\ttaxon")?;
    for it in items {
        writeln!(w, "{}\t{}\t{}", it.prompt, it.reference, taxon_label(it.taxon_group))?;
    }
    Ok(())
}

pub fn read_dataset_tsv<R: BufRead>(r: R) -> Result<Vec<RecoveryItem>, RecoverError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let bad = |reason: String| RecoverError::BadRow { line: i + 1, reason };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(bad(format!("expected 3 columns, found {}", cols.len())));
        }
        let taxon_group = match cols[2].trim() {
            "unassigned" | "" => None,
            t => Some(t.parse().map_err(bad)?),
        };
        out.push(RecoveryItem {
            prompt: NucleotideSequence::validate(cols[0]).map_err(|e| bad(e.to_string()))?,
            reference: NucleotideSequence::validate(cols[1]).map_err(|e| bad(e.to_string()))?,
            taxon_group,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryRunConfig {
    pub predict_lens: Vec<usize>,
    pub sampler: SamplerConfig,
}

impl Default for RecoveryRunConfig {
    fn default() -> Self {
        Self {
            predict_lens: vec![30],
            sampler: SamplerConfig {
                mode: DecodeMode::Greedy,
                ..SamplerConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemResult {
    pub index: usize,
    pub taxon: String,
    pub prompt_len: usize,
    pub generated: String,
    /// One accuracy per configured prediction length.
    pub accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    pub taxon: String,
    pub prompt_len: usize,
    pub predict_len: usize,
    pub n: usize,
    pub mean: f64,
    pub std_err: f64,
}

/// Unweighted mean of the group means sharing a prompt and prediction length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverallRow {
    pub prompt_len: usize,
    pub predict_len: usize,
    pub groups: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub groups: Vec<GroupRow>,
    pub overall: Vec<OverallRow>,
    pub items: Vec<ItemResult>,
}

impl RecoveryReport {
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "#taxon\tprompt_len\tpredict_len\tn\tmean_accuracy\tstd_err")?;
        for g in &self.groups {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
                g.taxon, g.prompt_len, g.predict_len, g.n, g.mean, g.std_err
            )?;
        }
        for o in &self.overall {
            writeln!(w, "overall\t{}\t{}\t{}\t{:.6}\t", o.prompt_len, o.predict_len, o.groups, o.mean)?;
        }
        Ok(())
    }

    pub fn write_items_tsv<W: Write>(&self, mut w: W, predict_lens: &[usize]) -> io::Result<()> {
        write!(w, "#index\ttaxon\tprompt_len\tgenerated")?;
        for l in predict_lens {
            write!(w, "\tacc_{l}")?;
        }
        writeln!(w)?;
        for it in &self.items {
            write!(w, "{}\t{}\t{}\t{}", it.index, it.taxon, it.prompt_len, it.generated)?;
            for a in &it.accuracy {
                write!(w, "\t{a:.6}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Checks that `tokenizer` and `lm` agree on the vocabulary.
pub fn check_vocabulary(tokenizer: &Tokenizer, lm: &dyn CausalLm) -> Result<(), RecoverError> {
    let (t, m) = (tokenizer.vocab(), lm.vocabulary());
    if t.tokens() != m.tokens() {
        return Err(RecoverError::VocabularyMismatch {
            tokenizer: format!("{} tokens, {}", t.len(), &t.fingerprint()[..12]),
            model: format!("{} tokens, {}", m.len(), &m.fingerprint()[..12]),
        });
    }
    Ok(())
}

/// Scores one continuation of `prompt`: the prompt is left-trimmed to a
/// token boundary, then enough tokens are decoded to cover `max_len` nt.
pub fn recover_one(
    lm: &dyn CausalLm,
    tokenizer: &Tokenizer,
    prompt: &NucleotideSequence,
    max_len: usize,
    cfg: &SamplerConfig,
    job: u64,
) -> Result<NucleotideSequence, RecoverError> {
    let ids = tokenizer.encode(&tokenizer.align_right(prompt))?;
    let n_tokens = match tokenizer.fixed_width() {
        Some(k) => max_len.div_ceil(k),
        None => max_len,
    };
    let cfg = SamplerConfig {
        max_new_tokens: n_tokens,
        ..cfg.clone()
    };
    let out = generate_job(lm, &ids, &cfg, job)?;
    Ok(tokenizer.decode(strip_eos(&out, tokenizer.vocab()))?)
}

/// Runs every item (in parallel) and aggregates per taxonomic group.
/// In sampling mode item `i` draws from PRNG stream `(seed, i)`.
pub fn run_recovery(
    lm: &dyn CausalLm,
    tokenizer: &Tokenizer,
    items: &[RecoveryItem],
    cfg: &RecoveryRunConfig,
) -> Result<RecoveryReport, RecoverError> {
    check_vocabulary(tokenizer, lm)?;
    let max_len = cfg.predict_lens.iter().copied().max().ok_or(RecoverError::ZeroLength)?;
    if cfg.predict_lens.contains(&0) {
        return Err(RecoverError::ZeroLength);
    }
    if let Some(it) = items.iter().find(|it| it.reference.len() < max_len) {
        return Err(RecoverError::ReferenceTooShort {
            len: it.reference.len(),
            needed: max_len,
        });
    }
    let results: Vec<ItemResult> = items
        .par_iter()
        .enumerate()
        .map(|(index, it)| {
            let generated = recover_one(lm, tokenizer, &it.prompt, max_len, &cfg.sampler, index as u64)?;
            let accuracy = cfg
                .predict_lens
                .iter()
                .map(|&l| recovery_accuracy(it.reference.as_bytes(), generated.as_bytes(), l))
                .collect::<Result<_, _>>()?;
            Ok(ItemResult {
                index,
                taxon: taxon_label(it.taxon_group).to_string(),
                prompt_len: it.prompt.len(),
                generated: generated.as_str()[..generated.len().min(max_len)].to_string(),
                accuracy,
            })
        })
        .collect::<Result<_, RecoverError>>()?;
    Ok(aggregate(results, &cfg.predict_lens))
}

fn aggregate(items: Vec<ItemResult>, predict_lens: &[usize]) -> RecoveryReport {
    // (prompt_len, predict_len) -> taxon -> accuracies, in item order
    let mut cells: BTreeMap<(usize, usize), BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for it in &items {
        for (&l, &a) in predict_lens.iter().zip(&it.accuracy) {
            cells
                .entry((it.prompt_len, l))
                .or_default()
                .entry(it.taxon.clone())
                .or_default()
                .push(a);
        }
    }
    let mut groups = Vec::new();
    let mut overall = Vec::new();
    for (&(prompt_len, predict_len), by_taxon) in &cells {
        let mut means = Vec::new();
        for (taxon, accs) in by_taxon {
            let n = accs.len();
            let mean = accs.iter().sum::<f64>() / n as f64;
            let std_err = if n > 1 {
                let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            means.push(mean);
            groups.push(GroupRow {
                taxon: taxon.clone(),
                prompt_len,
                predict_len,
                n,
                mean,
                std_err,
            });
        }
        overall.push(OverallRow {
            prompt_len,
            predict_len,
            groups: means.len(),
            mean: means.iter().sum::<f64>() / means.len() as f64,
        });
    }
    RecoveryReport { groups, overall, items }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{extract_functional_regions, AnnotationRecord, FeatureType};
    use crate::lm::UniformLm;

    fn seq(s: &str) -> NucleotideSequence {
        NucleotideSequence::validate(s).unwrap()
    }

    #[test]
    fn accuracy_fixtures() {
        let r = b"ACGTACGTACGTACGTACGTACGTACGTAC";
        assert_eq!(recovery_accuracy(r, r, 30).unwrap(), 1.0);
        let comp: Vec<u8> = r.iter().map(|&b| crate::seq::complement(b)).collect();
        assert_eq!(recovery_accuracy(r, &comp, 30).unwrap(), 0.0);
        let mut one = r.to_vec();
        one[7] = b'A';
        assert!((recovery_accuracy(r, &one, 30).unwrap() - 29.0 / 30.0).abs() < 1e-15);
        assert_eq!(recovery_accuracy(r, &r[..15], 30).unwrap(), 0.5);
        assert_eq!(
            recovery_accuracy(&r[..10], r, 30),
            Err(RecoverError::ReferenceTooShort { len: 10, needed: 30 })
        );
    }

    fn genome_with_gene(strand: Strand) -> (Vec<NucleotideSequence>, Vec<FunctionalRegion>) {
        // 20 nt upstream, gene at 21..=40 (1-based), 20 nt downstream
        let up = "ACGTTGCAACGTTGCAACGT";
        let gene = "GGGGAAAACCCCTTTTGAGA";
        let down = "TTTTTTTTTTCCCCCCCCCC";
        let g = vec![seq(&format!("{up}{gene}{down}")).with_id("c1")];
        let rec = AnnotationRecord {
            seq_id: "c1".into(),
            start: 21,
            end: 40,
            strand,
            feature_type: FeatureType::Cds,
            taxon_group: Some(TaxonGroup::Plant),
        };
        let regions = extract_functional_regions(&g, &[rec], 1).unwrap();
        (g, regions)
    }

    #[test]
    fn dataset_boundaries_plus_strand() {
        let (g, regions) = genome_with_gene(Strand::Plus);
        let cfg = RecoveryDatasetConfig {
            prompt_len: 8,
            predict_len: 6,
            per_group_n: 1,
            ..Default::default()
        };
        let items = build_recovery_dataset(&regions, &g, &cfg).unwrap();
        assert_eq!(items[0].prompt.as_str(), "TGCAACGT");
        assert_eq!(items[0].reference.as_str(), "GGGGAA");
        assert_eq!(items[0].taxon_group, Some(TaxonGroup::Plant));
    }

    #[test]
    fn dataset_boundaries_minus_strand() {
        let (g, regions) = genome_with_gene(Strand::Minus);
        let cfg = RecoveryDatasetConfig {
            prompt_len: 8,
            predict_len: 6,
            per_group_n: 1,
            ..Default::default()
        };
        let items = build_recovery_dataset(&regions, &g, &cfg).unwrap();
        // minus-strand 5' end is genomic 40; prompt is rc of 41..=48, reference rc of 35..=40
        assert_eq!(items[0].prompt.as_str(), "AAAAAAAA");
        assert_eq!(items[0].reference.as_str(), "TCTCAA");
    }

    #[test]
    fn eligibility_and_counts() {
        let (g, regions) = genome_with_gene(Strand::Plus);
        let mut cfg = RecoveryDatasetConfig {
            prompt_len: 8,
            predict_len: 21,
            per_group_n: 1,
            ..Default::default()
        };
        assert!(matches!(
            build_recovery_dataset(&regions, &g, &cfg),
            Err(RecoverError::InsufficientData { available: 0, .. })
        ));
        cfg.predict_len = 6;
        cfg.prompt_len = 21;
        assert!(build_recovery_dataset(&regions, &g, &cfg).is_err());
        cfg.per_group_n = 0;
        assert!(build_recovery_dataset(&regions, &g, &cfg).unwrap().is_empty());
    }

    #[test]
    fn tsv_roundtrip() {
        let items = vec![
            RecoveryItem {
                prompt: seq("ACGT"),
                reference: seq("GGA"),
                taxon_group: Some(TaxonGroup::Fungi),
            },
            RecoveryItem {
                prompt: seq("TT"),
                reference: seq("CCC"),
                taxon_group: None,
            },
        ];
        let mut buf = Vec::new();
        write_dataset_tsv(&mut buf, &items).unwrap();
        assert_eq!(read_dataset_tsv(&buf[..]).unwrap(), items);
        assert!(read_dataset_tsv(&b"ACGT\tGG\n"[..]).is_err());
    }

    #[test]
    fn vocabulary_mismatch() {
        let lm = UniformLm::new(crate::tokenize::Vocabulary::kmer(2).unwrap());
        let tok = Tokenizer::kmer(3).unwrap();
        assert!(matches!(
            run_recovery(&lm, &tok, &[], &RecoveryRunConfig::default()),
            Err(RecoverError::VocabularyMismatch { .. })
        ));
    }

    #[test]
    fn overall_is_unweighted_mean_of_groups() {
        let mk = |taxon: &str, a: f64| ItemResult {
            index: 0,
            taxon: taxon.into(),
            prompt_len: 10,
            generated: String::new(),
            accuracy: vec![a],
        };
        let rep = aggregate(vec![mk("fungi", 1.0), mk("fungi", 1.0), mk("fungi", 1.0), mk("plant", 0.0)], &[30]);
        assert_eq!(rep.overall[0].mean, 0.5);
        assert_eq!(rep.groups.len(), 2);
    }
}
