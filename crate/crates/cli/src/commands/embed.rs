use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{Context, Result};
use genolm::analytics::{pca_project, profile_embedding, silhouette as silhouette_score, Distance, EmbeddingSet};
use rayon::prelude::*;
use serde_json::json;

use crate::cli::{EmbedProjectArgs, EmbedSilhouetteArgs};
use crate::inputs::{self, ensure};
use crate::settings::{usage, Settings};

fn read_set(path: &str) -> Result<EmbeddingSet> {
    EmbeddingSet::read_tsv(inputs::open(Path::new(path))?).with_context(|| format!("reading {path}"))
}

pub fn project(s: &mut Settings, a: EmbedProjectArgs) -> Result<()> {
    let dims = s.get("dims", a.dims, 2usize)?;
    ensure(dims >= 1, "--dims must be at least 1")?;
    let fasta = s.opt::<String>("input", a.input)?;
    let table = s.opt::<String>("embeddings", a.embeddings)?;
    let set = match (fasta, table) {
        (Some(f), None) => {
            let k = s.get("kmer", a.kmer, 4usize)?;
            let seqs = inputs::read_fasta_file(Path::new(&f))?;
            let vectors = seqs
                .par_iter()
                .map(|q| profile_embedding(q, k))
                .collect::<Result<Vec<_>, _>>()?;
            let ids: Vec<String> = seqs
                .iter()
                .enumerate()
                .map(|(i, q)| q.id.clone().unwrap_or_else(|| format!("seq{}", i + 1)))
                .collect();
            let labels = ids.iter().map(|id| id.rsplit('|').next().unwrap_or(id).to_string()).collect();
            EmbeddingSet::new(ids, labels, vectors)?
        }
        (None, Some(t)) => read_set(&t)?,
        _ => return Err(usage("give exactly one of --input FASTA or --embeddings TSV")),
    };
    let proj = pca_project(&set, dims)?;
    if proj.degenerate {
        eprintln!("warning: fewer than {dims} non-degenerate components; the rest are zero");
    }
    s.emit(
        |w| proj.write_tsv(w, &set),
        || json!({"ids": set.ids, "labels": set.labels, "projection": proj}),
    )
}

pub fn silhouette(s: &mut Settings, a: EmbedSilhouetteArgs) -> Result<()> {
    let path = s.required::<String>("input", a.input)?;
    let metric = match s.get("metric", a.metric, "euclidean".to_string())?.as_str() {
        "euclidean" => Distance::Euclidean,
        "cosine" => Distance::Cosine,
        other => return Err(usage(format!("unknown metric {other:?} (euclidean or cosine)"))),
    };
    let set = read_set(&path)?;
    let score = silhouette_score(&set.vectors, &set.labels, metric)?;
    let clusters = set.labels.iter().collect::<BTreeSet<_>>().len();
    s.emit(
        |w| {
            writeln!(w, "#metric\tvalue")?;
            writeln!(w, "silhouette\t{score:.6}")?;
            writeln!(w, "n\t{}", set.len())?;
            writeln!(w, "clusters\t{clusters}")
        },
        || json!({"silhouette": score, "n": set.len(), "clusters": clusters}),
    )
}
