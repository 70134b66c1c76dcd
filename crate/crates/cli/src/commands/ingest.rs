use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use genolm::ingest::{
    build_gener_task_datasets, corpus_stats, extract_functional_regions, read_corpus, taxon_label, write_corpus,
    write_labeled_tsv, CorpusStats, FeatureType, FunctionalRegion, GenerTaskConfig, TaxonGroup,
};
use genolm::seq::{fasta::write_fasta, NucleotideSequence};
use serde_json::json;

use crate::cli::{ExtractArgs, GenerArgs, GenomeArgs, StatsArgs};
use crate::inputs::{self, ensure, parse_list};
use crate::settings::{usage, Settings};

pub const DEFAULT_K_MIN: usize = 8;

pub fn load_regions(s: &mut Settings, g: GenomeArgs) -> Result<(Vec<NucleotideSequence>, Vec<FunctionalRegion>)> {
    let k_min = s.get("k-min", g.k_min, DEFAULT_K_MIN)?;
    let (genome, ann) = inputs::genome_and_annotations(s, g.genbank, g.fasta, g.annotations)?;
    let regions = extract_functional_regions(&genome, &ann, k_min)?;
    Ok((genome, regions))
}

fn create(path: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {path}"))?))
}

pub fn extract(s: &mut Settings, a: ExtractArgs) -> Result<()> {
    let genome_out = s.opt::<String>("genome-out", a.genome_out)?;
    let (genome, regions) = load_regions(s, a.genome)?;
    if let Some(p) = genome_out {
        let mut w = create(&p)?;
        write_fasta(&mut w, &genome)?;
        w.flush()?;
    }
    eprintln!("extracted {} regions from {} sequences", regions.len(), genome.len());
    s.emit_artifact("corpus FASTA", |w| write_corpus(w, &regions))
}

fn stats_json(stats: &CorpusStats) -> serde_json::Value {
    let rows: Vec<_> = stats
        .rows
        .iter()
        .map(|(&(t, f), r)| json!({"taxon": taxon_label(t), "feature": f, "genes": r.genes, "nucleotides": r.nucleotides}))
        .collect();
    json!({"rows": rows, "total": stats.total()})
}

pub fn stats(s: &mut Settings, a: StatsArgs) -> Result<()> {
    let stats = match s.opt::<String>("corpus", a.corpus)? {
        Some(path) => {
            let records = inputs::read_fasta_file(Path::new(&path))?;
            let mut stats = CorpusStats::default();
            for (t, f, seq) in read_corpus(&records) {
                stats.add(t, f, seq.len());
            }
            stats
        }
        None => corpus_stats(&load_regions(s, a.genome)?.1),
    };
    s.emit(|w| stats.write_tsv(w), || stats_json(&stats))
}

pub fn gener_tasks(s: &mut Settings, a: GenerArgs, seed: u64) -> Result<()> {
    let d = GenerTaskConfig::default();
    let gene_types = match s.opt::<String>("gene-types", a.gene_types)? {
        Some(raw) => parse_list::<FeatureType>(&raw, "gene type")?,
        None => d.gene_types.clone(),
    };
    let groups = match s.opt::<String>("groups", a.groups)? {
        Some(raw) => Some(parse_list::<TaxonGroup>(&raw, "taxonomic group")?),
        None => None,
    };
    let cfg = GenerTaskConfig {
        per_class: s.get("per-class", a.per_class, d.per_class)?,
        gene_types,
        include_control: !s.flag("no-control", a.no_control)?,
        min_len: s.get("min-len", a.min_len, d.min_len)?,
        max_len: s.get("max-len", a.max_len, d.max_len)?,
        intergenic_margin: s.get("margin", a.margin, d.intergenic_margin)?,
        taxonomic_per_group: s.get("taxonomic-per-group", a.taxonomic_per_group, d.taxonomic_per_group)?,
        window_len: s.get("window-len", a.window_len, d.window_len)?,
        groups,
        seed,
    };
    ensure(cfg.min_len > 0 && cfg.min_len <= cfg.max_len, "need 0 < --min-len <= --max-len")?;
    let gene_out = s.opt::<String>("gene-out", a.gene_out)?;
    let tax_out = s.opt::<String>("taxonomic-out", a.taxonomic_out)?;
    if gene_out.is_none() && tax_out.is_none() {
        return Err(usage("give --gene-out and/or --taxonomic-out"));
    }
    let (genome, regions) = load_regions(s, a.genome)?;
    let ds = build_gener_task_datasets(&regions, &genome, &cfg)?;
    for (path, items) in [(gene_out, &ds.gene_classification), (tax_out, &ds.taxonomic)] {
        if let Some(p) = path {
            let mut w = create(&p)?;
            write_labeled_tsv(&mut w, items)?;
            w.flush()?;
            s.write_sidecar(Path::new(&p))?;
        }
    }
    let r = &ds.report;
    s.emit(
        |w| {
            writeln!(w, "#task\tlabel\tcount")?;
            for (l, n) in &r.gene_task_counts {
                writeln!(w, "gene\t{l}\t{n}")?;
            }
            for (l, n) in &r.taxonomic_counts {
                writeln!(w, "taxonomic\t{l}\t{n}")?;
            }
            for (l, n) in &r.skipped_short_contigs {
                writeln!(w, "skipped_short_contigs\t{l}\t{n}")?;
            }
            Ok(())
        },
        || json!(r),
    )
}
