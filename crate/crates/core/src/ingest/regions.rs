use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use super::{taxon_label, AnnotationRecord, FeatureType, IngestError, Strand, TaxonGroup};
use crate::seq::{fasta, NucleotideSequence};

/// An N-free piece of an annotated region, oriented 5'->3' on the annotated
/// strand. `start..=end` are the piece's own 1-based genomic coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalRegion {
    pub source: AnnotationRecord,
    pub start: usize,
    pub end: usize,
    pub sequence: NucleotideSequence,
}

impl FunctionalRegion {
    pub fn header(&self) -> String {
        format!(
            "{}:{}-{}{}|{}|{}",
            self.source.seq_id,
            self.start,
            self.end,
            self.source.strand,
            taxon_label(self.source.taxon_group),
            self.source.feature_type
        )
    }
}

/// Extracts every annotated region from `genome`, reverse-complementing minus
/// strand regions and splitting at N runs; pieces shorter than `k_min` are dropped.
pub fn extract_functional_regions(
    genome: &[NucleotideSequence],
    annotations: &[AnnotationRecord],
    k_min: usize,
) -> Result<Vec<FunctionalRegion>, IngestError> {
    let by_id: HashMap<&str, &NucleotideSequence> =
        genome.iter().filter_map(|s| Some((s.id.as_deref()?, s))).collect();

    let per_record: Vec<Vec<FunctionalRegion>> = annotations
        .par_iter()
        .map(|rec| {
            let contig = by_id
                .get(rec.seq_id.as_str())
                .ok_or_else(|| IngestError::UnknownSequenceId(rec.seq_id.clone()))?;
            if rec.start == 0 || rec.start > rec.end || rec.end > contig.len() {
                return Err(IngestError::OutOfBounds {
                    seq_id: rec.seq_id.clone(),
                    start: rec.start,
                    end: rec.end,
                    len: contig.len(),
                });
            }
            let span = contig.slice(rec.start - 1, rec.end);
            let mut pieces: Vec<FunctionalRegion> = span
                .unambiguous_runs()
                .into_iter()
                .filter(|(a, b)| b - a >= k_min.max(1))
                .map(|(a, b)| {
                    let piece = span.slice(a, b);
                    let sequence = match rec.strand {
                        Strand::Plus => piece,
                        Strand::Minus => piece.reverse_complement(),
                    };
                    FunctionalRegion {
                        source: rec.clone(),
                        start: rec.start + a,
                        end: rec.start + b - 1,
                        sequence,
                    }
                })
                .collect();
            if rec.strand == Strand::Minus {
                pieces.reverse();
            }
            Ok(pieces)
        })
        .collect::<Result<_, _>>()?;
    Ok(per_record.into_iter().flatten().collect())
}

/// Writes the corpus as FASTA with `>seq:start-end strand|taxon|feature` headers.
pub fn write_corpus<W: Write>(writer: W, regions: &[FunctionalRegion]) -> io::Result<()> {
    let records: Vec<NucleotideSequence> = regions
        .iter()
        .map(|r| {
            let mut s = r.sequence.clone();
            s.id = Some(r.header());
            s.meta.clear();
            s
        })
        .collect();
    fasta::write_fasta(writer, &records)
}

/// Reads a corpus FASTA back into `(taxon, feature type, sequence)` triples.
/// Headers without the `|taxon|feature` suffix are read as unassigned `gene`.
pub fn read_corpus(records: &[NucleotideSequence]) -> Vec<(Option<TaxonGroup>, FeatureType, &NucleotideSequence)> {
    records
        .iter()
        .map(|r| {
            let id = r.id.as_deref().unwrap_or("");
            let mut parts = id.rsplitn(3, '|');
            let feature = parts.next().and_then(|f| f.parse().ok());
            let taxon = parts.next().and_then(|t| t.parse().ok());
            match feature {
                Some(f) => (taxon, f, r),
                None => (None, FeatureType::Gene, r),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StatsRow {
    pub genes: u64,
    pub nucleotides: u64,
}

/// Gene and nucleotide counts per (taxonomic group, feature type).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub rows: BTreeMap<(Option<TaxonGroup>, FeatureType), StatsRow>,
}

impl CorpusStats {
    pub fn add(&mut self, taxon: Option<TaxonGroup>, feature: FeatureType, nucleotides: usize) {
        let row = self.rows.entry((taxon, feature)).or_default();
        row.genes += 1;
        row.nucleotides += nucleotides as u64;
    }

    pub fn total(&self) -> StatsRow {
        self.rows.values().fold(StatsRow::default(), |acc, r| StatsRow {
            genes: acc.genes + r.genes,
            nucleotides: acc.nucleotides + r.nucleotides,
        })
    }

    pub fn by_feature(&self) -> BTreeMap<FeatureType, StatsRow> {
        let mut out: BTreeMap<FeatureType, StatsRow> = BTreeMap::new();
        for (&(_, f), r) in &self.rows {
            let e = out.entry(f).or_default();
            e.genes += r.genes;
            e.nucleotides += r.nucleotides;
        }
        out
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "#taxon\tfeature\tgenes\tnucleotides")?;
        for (&(t, f), r) in &self.rows {
            writeln!(w, "{}\t{}\t{}\t{}", taxon_label(t), f, r.genes, r.nucleotides)?;
        }
        let t = self.total();
        writeln!(w, "all\tall\t{}\t{}", t.genes, t.nucleotides)
    }
}

pub fn corpus_stats(regions: &[FunctionalRegion]) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for r in regions {
        stats.add(r.source.taxon_group, r.source.feature_type, r.sequence.len());
    }
    stats
}
