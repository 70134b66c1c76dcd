//! Gene-type and taxonomic classification datasets.
//!
//! Gene task: for each taxonomic group and each requested gene class, exactly
//! `per_class` regions of at least `min_len` nt (longer ones are cut to a
//! random `max_len` window), plus `control` windows from intergenic sequence
//! at least `intergenic_margin` away from any annotated span.
//!
//! Taxonomic task: `taxonomic_per_group` N-free windows of `window_len` nt per
//! group, at distinct positions. Contigs shorter than the window are skipped
//! and counted.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Write};

use rand::seq::index;
use rand::Rng;
use serde::Serialize;

use super::{FeatureType, FunctionalRegion, IngestError, TaxonGroup};
use crate::rng::job_rng;
use crate::seq::NucleotideSequence;

#[derive(Debug, Clone)]
pub struct GenerTaskConfig {
    pub per_class: usize,
    pub gene_types: Vec<FeatureType>,
    pub include_control: bool,
    pub min_len: usize,
    pub max_len: usize,
    pub intergenic_margin: usize,
    pub taxonomic_per_group: usize,
    pub window_len: usize,
    /// Groups to sample; `None` means every group present in the regions.
    pub groups: Option<Vec<TaxonGroup>>,
    pub seed: u64,
}

impl Default for GenerTaskConfig {
    fn default() -> Self {
        Self {
            per_class: 100,
            gene_types: FeatureType::GENE_CLASSES.to_vec(),
            include_control: true,
            min_len: 100,
            max_len: 5_000,
            intergenic_margin: 1_000,
            taxonomic_per_group: 0,
            window_len: 96_000,
            groups: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub sequence: NucleotideSequence,
    pub label: String,
    pub group: TaxonGroup,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GenerReport {
    pub gene_task_counts: BTreeMap<String, usize>,
    pub taxonomic_counts: BTreeMap<String, usize>,
    /// Contigs shorter than the taxonomic window, per group.
    pub skipped_short_contigs: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerDatasets {
    pub gene_classification: Vec<LabeledSequence>,
    pub taxonomic: Vec<LabeledSequence>,
    pub report: GenerReport,
}

const CONTROL: &str = "control";

fn contig_taxa(genome: &[NucleotideSequence], regions: &[FunctionalRegion]) -> HashMap<String, TaxonGroup> {
    let mut out = HashMap::new();
    for r in regions {
        if let Some(t) = r.source.taxon_group {
            out.entry(r.source.seq_id.clone()).or_insert(t);
        }
    }
    for s in genome {
        if let (Some(id), Some(t)) = (&s.id, s.meta.get("taxon").and_then(|t| t.parse().ok())) {
            out.insert(id.clone(), t);
        }
    }
    out
}

/// Intergenic N-free stretches (0-based half-open) per contig.
fn intergenic_zones(
    contig: &NucleotideSequence,
    spans: &[(usize, usize)],
    margin: usize,
) -> Vec<(usize, usize)> {
    let mut blocked: Vec<(usize, usize)> = spans
        .iter()
        .map(|&(s, e)| ((s - 1).saturating_sub(margin), (e + margin).min(contig.len())))
        .collect();
    blocked.sort_unstable();
    let mut zones = Vec::new();
    let mut cursor = 0;
    let mut free = Vec::new();
    for (a, b) in blocked {
        if a > cursor {
            free.push((cursor, a));
        }
        cursor = cursor.max(b);
    }
    if cursor < contig.len() {
        free.push((cursor, contig.len()));
    }
    for (a, b) in free {
        for (ra, rb) in contig.slice(a, b).unambiguous_runs() {
            zones.push((a + ra, a + rb));
        }
    }
    zones
}

/// Draws a position uniformly over all valid window starts of length `len`.
fn draw_window(zones: &[(usize, &[(usize, usize)])], len: usize, rng: &mut impl Rng) -> Option<(usize, usize)> {
    let starts = |(a, b): (usize, usize)| if b - a >= len { b - a - len + 1 } else { 0 };
    let total: usize = zones.iter().flat_map(|(_, z)| z.iter().map(|&r| starts(r))).sum();
    if total == 0 {
        return None;
    }
    let mut pick = rng.gen_range(0..total);
    for &(contig, zs) in zones {
        for &z in zs {
            let n = starts(z);
            if pick < n {
                return Some((contig, z.0 + pick));
            }
            pick -= n;
        }
    }
    unreachable!("pick < total")
}

pub fn build_gener_task_datasets(
    regions: &[FunctionalRegion],
    genome: &[NucleotideSequence],
    config: &GenerTaskConfig,
) -> Result<GenerDatasets, IngestError> {
    let mut out = GenerDatasets::default();
    let groups: Vec<TaxonGroup> = match &config.groups {
        Some(g) => g.clone(),
        None => regions
            .iter()
            .filter_map(|r| r.source.taxon_group)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let taxa = contig_taxa(genome, regions);

    // gene-type classification
    if config.per_class > 0 {
        for (gi, &group) in groups.iter().enumerate() {
            for (ci, &class) in config.gene_types.iter().enumerate() {
                let pool: Vec<&FunctionalRegion> = regions
                    .iter()
                    .filter(|r| {
                        r.source.taxon_group == Some(group)
                            && r.source.feature_type == class
                            && r.sequence.len() >= config.min_len
                    })
                    .collect();
                let key = format!("{group}/{class}");
                if pool.len() < config.per_class {
                    return Err(IngestError::InsufficientData {
                        group: key,
                        needed: config.per_class,
                        available: pool.len(),
                    });
                }
                let mut rng = job_rng(config.seed, (gi * 64 + ci) as u64);
                for idx in index::sample(&mut rng, pool.len(), config.per_class).into_vec() {
                    let seq = &pool[idx].sequence;
                    let sequence = if seq.len() > config.max_len {
                        let s = rng.gen_range(0..=seq.len() - config.max_len);
                        seq.slice(s, s + config.max_len)
                    } else {
                        seq.slice(0, seq.len())
                    };
                    out.gene_classification.push(LabeledSequence {
                        sequence,
                        label: class.to_string(),
                        group,
                    });
                }
                out.report.gene_task_counts.insert(key, config.per_class);
            }

            if config.include_control {
                let mut spans: HashMap<&str, Vec<(usize, usize)>> = HashMap::new();
                for r in regions {
                    spans
                        .entry(r.source.seq_id.as_str())
                        .or_default()
                        .push((r.source.start, r.source.end));
                }
                let zones: Vec<(usize, Vec<(usize, usize)>)> = genome
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.id.as_ref().and_then(|id| taxa.get(id)) == Some(&group))
                    .map(|(i, c)| {
                        let s = spans.get(c.id.as_deref().unwrap_or("")).map_or(&[][..], |v| v.as_slice());
                        (i, intergenic_zones(c, s, config.intergenic_margin))
                    })
                    .collect();
                let zone_refs: Vec<(usize, &[(usize, usize)])> = zones.iter().map(|(i, z)| (*i, z.as_slice())).collect();
                let longest = zones.iter().flat_map(|(_, z)| z.iter().map(|(a, b)| b - a)).max().unwrap_or(0);
                let key = format!("{group}/{CONTROL}");
                if longest < config.min_len {
                    return Err(IngestError::InsufficientData {
                        group: key,
                        needed: config.per_class,
                        available: 0,
                    });
                }
                let mut rng = job_rng(config.seed, 10_000 + gi as u64);
                for _ in 0..config.per_class {
                    let len = rng.gen_range(config.min_len..=config.max_len.min(longest).max(config.min_len));
                    let (contig, start) = draw_window(&zone_refs, len, &mut rng).expect("longest zone fits");
                    out.gene_classification.push(LabeledSequence {
                        sequence: genome[contig].slice(start, start + len),
                        label: CONTROL.to_string(),
                        group,
                    });
                }
                out.report.gene_task_counts.insert(key, config.per_class);
            }
        }
    }

    // taxonomic classification
    if config.taxonomic_per_group > 0 {
        let w = config.window_len;
        for (gi, &group) in groups.iter().enumerate() {
            // (contig, first valid start, number of valid starts)
            let mut ranges: Vec<(usize, usize, usize)> = Vec::new();
            let mut skipped = 0;
            for (i, c) in genome.iter().enumerate() {
                if c.id.as_ref().and_then(|id| taxa.get(id)) != Some(&group) {
                    continue;
                }
                if c.len() < w {
                    skipped += 1;
                    continue;
                }
                ranges.extend(
                    c.unambiguous_runs()
                        .into_iter()
                        .filter(|(a, b)| b - a >= w)
                        .map(|(a, b)| (i, a, b - a - w + 1)),
                );
            }
            out.report.skipped_short_contigs.insert(group.to_string(), skipped);
            let total: usize = ranges.iter().map(|r| r.2).sum();
            if total < config.taxonomic_per_group {
                return Err(IngestError::InsufficientData {
                    group: group.to_string(),
                    needed: config.taxonomic_per_group,
                    available: total,
                });
            }
            let mut rng = job_rng(config.seed, 20_000 + gi as u64);
            for mut p in index::sample(&mut rng, total, config.taxonomic_per_group).into_vec() {
                let mut located = None;
                for &(contig, first, n) in &ranges {
                    if p < n {
                        located = Some((contig, first));
                        break;
                    }
                    p -= n;
                }
                let (contig, first) = located.expect("p < total");
                let start = first + p;
                out.taxonomic.push(LabeledSequence {
                    sequence: genome[contig].slice(start, start + w),
                    label: group.to_string(),
                    group,
                });
            }
            out.report.taxonomic_counts.insert(group.to_string(), config.taxonomic_per_group);
        }
    }
    Ok(out)
}

/// `#sequence\tlabel` followed by one row per item.
pub fn write_labeled_tsv<W: Write>(mut w: W, items: &[LabeledSequence]) -> io::Result<()> {
    writeln!(w, "#sequence\tlabel")?;
    for it in items {
        writeln!(w, "{}\t{}", it.sequence, it.label)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{extract_functional_regions, AnnotationRecord, Strand};
    use super::*;
    use crate::rng::seeded;

    fn random_dna(len: usize, seed: u64) -> String {
        let mut rng = seeded(seed);
        (0..len).map(|_| ['A', 'C', 'G', 'T'][rng.gen_range(0..4)]).collect()
    }

    /// Two groups, each with one contig carrying 10 genes of each of three classes.
    fn fixture() -> (Vec<NucleotideSequence>, Vec<FunctionalRegion>) {
        let classes = [FeatureType::Cds, FeatureType::Trna, FeatureType::Rrna];
        let mut genome = Vec::new();
        let mut recs = Vec::new();
        for (gi, group) in [TaxonGroup::Fungi, TaxonGroup::Plant].into_iter().enumerate() {
            let id = format!("c{gi}");
            genome.push(
                NucleotideSequence::validate(&random_dna(20_000, gi as u64))
                    .unwrap()
                    .with_id(&id)
                    .with_meta("taxon", group.label()),
            );
            for (ci, class) in classes.iter().enumerate() {
                for j in 0..10 {
                    let start = 1 + (ci * 10 + j) * 300;
                    recs.push(AnnotationRecord {
                        seq_id: id.clone(),
                        start,
                        end: start + 199,
                        strand: if j % 2 == 0 { Strand::Plus } else { Strand::Minus },
                        feature_type: *class,
                        taxon_group: Some(group),
                    });
                }
            }
        }
        let regions = extract_functional_regions(&genome, &recs, 8).unwrap();
        (genome, regions)
    }

    fn gene_config() -> GenerTaskConfig {
        GenerTaskConfig {
            per_class: 10,
            gene_types: vec![FeatureType::Cds, FeatureType::Trna, FeatureType::Rrna],
            include_control: false,
            ..Default::default()
        }
    }

    #[test]
    fn balanced_gene_task() {
        let (genome, regions) = fixture();
        let ds = build_gener_task_datasets(&regions, &genome, &gene_config()).unwrap();
        assert_eq!(ds.gene_classification.len(), 60);
        let mut counts: BTreeMap<(TaxonGroup, String), usize> = BTreeMap::new();
        for it in &ds.gene_classification {
            *counts.entry((it.group, it.label.clone())).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        assert!(counts.values().all(|&c| c == 10));
    }

    #[test]
    fn insufficient_data() {
        let (genome, regions) = fixture();
        let cfg = GenerTaskConfig {
            per_class: 11,
            ..gene_config()
        };
        assert!(matches!(
            build_gener_task_datasets(&regions, &genome, &cfg),
            Err(IngestError::InsufficientData {
                needed: 11,
                available: 10,
                ..
            })
        ));
    }

    #[test]
    fn controls_avoid_genes() {
        let (genome, regions) = fixture();
        let cfg = GenerTaskConfig {
            per_class: 10,
            include_control: true,
            max_len: 500,
            intergenic_margin: 1_000,
            ..gene_config()
        };
        let ds = build_gener_task_datasets(&regions, &genome, &cfg).unwrap();
        let controls: Vec<_> = ds.gene_classification.iter().filter(|i| i.label == "control").collect();
        assert_eq!(controls.len(), 20);
        // genes end at 30*300; margin 1000 -> controls come from beyond ~10,000
        for c in controls {
            let pos = genome
                .iter()
                .find_map(|g| g.as_str().find(c.sequence.as_str()))
                .unwrap();
            assert!(pos >= 8_900 + 1_000, "control at {pos}");
            assert!((100..=500).contains(&c.sequence.len()));
        }
    }

    #[test]
    fn taxonomic_windows_skip_short_contigs() {
        let (mut genome, regions) = fixture();
        genome.push(
            NucleotideSequence::validate(&random_dna(500, 9))
                .unwrap()
                .with_id("short")
                .with_meta("taxon", "fungi"),
        );
        let cfg = GenerTaskConfig {
            per_class: 0,
            taxonomic_per_group: 5,
            window_len: 1_000,
            ..Default::default()
        };
        let ds = build_gener_task_datasets(&regions, &genome, &cfg).unwrap();
        assert_eq!(ds.taxonomic.len(), 10);
        assert!(ds.taxonomic.iter().all(|t| t.sequence.len() == 1_000));
        assert_eq!(ds.report.skipped_short_contigs["fungi"], 1);
        assert_eq!(ds.report.skipped_short_contigs["plant"], 0);

        let too_long = GenerTaskConfig {
            window_len: 50_000,
            ..cfg
        };
        assert!(matches!(
            build_gener_task_datasets(&regions, &genome, &too_long),
            Err(IngestError::InsufficientData { available: 0, .. })
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        let (genome, regions) = fixture();
        let cfg = GenerTaskConfig {
            include_control: true,
            max_len: 150,
            taxonomic_per_group: 3,
            window_len: 2_000,
            ..gene_config()
        };
        let render = |ds: &GenerDatasets| {
            let mut a = Vec::new();
            write_labeled_tsv(&mut a, &ds.gene_classification).unwrap();
            write_labeled_tsv(&mut a, &ds.taxonomic).unwrap();
            a
        };
        let a = build_gener_task_datasets(&regions, &genome, &cfg).unwrap();
        let b = build_gener_task_datasets(&regions, &genome, &cfg).unwrap();
        assert_eq!(render(&a), render(&b));
        let c = build_gener_task_datasets(&regions, &genome, &GenerTaskConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(render(&a), render(&c));
    }
}
