use std::path::Path;

use anyhow::{Context, Result};
use genolm::analytics::pearson_r;
use genolm::design::{
    contribution_scores, fit_kmer_ridge, quantile_labels, rank_and_select, read_starr_tsv, write_selection_fasta,
    ActivityPredictor, ActivityRecord, Candidate, KmerRidgePredictor, PromoterClass, SelectionPlan,
};
use serde_json::json;

use crate::cli::{ActivityInput, DesignContribArgs, DesignFitArgs, DesignLabelArgs, DesignRankArgs};
use crate::inputs::{self, ensure};
use crate::settings::{usage, Settings};

fn activity_records(s: &mut Settings, a: ActivityInput) -> Result<Vec<ActivityRecord>> {
    let path = s.required::<String>("input", a.input)?;
    let class: PromoterClass = s.required::<String>("class", a.class)?.parse().map_err(usage)?;
    let split = s.opt::<String>("split", a.split)?;
    let rows = read_starr_tsv(inputs::open(Path::new(&path))?).with_context(|| format!("reading {path}"))?;
    let recs: Vec<ActivityRecord> = rows
        .iter()
        .filter(|r| split.as_ref().is_none_or(|sp| &r.split == sp))
        .map(|r| r.record(class))
        .collect();
    Ok(recs)
}

fn load_predictor(s: &mut Settings, path: Option<String>) -> Result<KmerRidgePredictor> {
    let path = s.required::<String>("predictor", path)?;
    let text = inputs::read_text(Path::new(&path))?;
    serde_json::from_str(&text).with_context(|| format!("parsing predictor {path}"))
}

pub fn label(s: &mut Settings, a: DesignLabelArgs) -> Result<()> {
    let recs = activity_records(s, a.activity)?;
    let activities: Vec<f64> = recs.iter().map(|r| r.activity).collect();
    let bands = quantile_labels(&activities)?;
    s.emit(
        |w| {
            writeln!(w, "#sequence\tactivity\tband")?;
            for (r, b) in recs.iter().zip(&bands) {
                writeln!(w, "{}\t{}\t{}", r.sequence, r.activity, b)?;
            }
            Ok(())
        },
        || {
            json!(recs
                .iter()
                .zip(&bands)
                .map(|(r, b)| json!({"sequence": r.sequence.to_string(), "activity": r.activity, "band": b}))
                .collect::<Vec<_>>())
        },
    )
}

pub fn fit(s: &mut Settings, a: DesignFitArgs) -> Result<()> {
    let k = s.get("kmer", a.kmer, 5usize)?;
    let mu = s.get("mu", a.mu, 1.0f64)?;
    let recs = activity_records(s, a.activity)?;
    let model = fit_kmer_ridge(&recs, k, mu)?;
    let predicted: Vec<f64> = recs.iter().map(|r| model.predict(&r.sequence)).collect();
    let observed: Vec<f64> = recs.iter().map(|r| r.activity).collect();
    match pearson_r(&observed, &predicted) {
        Ok(r) => eprintln!("fitted on {} sequences, training Pearson r = {r:.4}", recs.len()),
        Err(e) => eprintln!("fitted on {} sequences ({e})", recs.len()),
    }
    let text = serde_json::to_string(&model)? + "\n";
    s.emit_artifact("predictor", |w| w.write_all(text.as_bytes()))
}

pub fn rank(s: &mut Settings, a: DesignRankArgs, seed: u64) -> Result<()> {
    let predictor = load_predictor(s, a.predictor)?;
    let pools = s.list("pool", a.pool)?;
    ensure(!pools.is_empty(), "give at least one --pool GROUP=FASTA")?;
    let mut candidates = Vec::new();
    for p in &pools {
        let (group, file) = p.split_once('=').ok_or_else(|| usage(format!("--pool expects GROUP=FILE, got {p:?}")))?;
        for seq in inputs::read_fasta_file(Path::new(file))? {
            candidates.push(Candidate {
                sequence: seq,
                group: group.to_string(),
            });
        }
    }
    let plan = SelectionPlan {
        top: s.get("top", a.top, 0usize)?,
        top_group: Some(s.get("top-group", a.top_group, "high".to_string())?),
        bottom: s.get("bottom", a.bottom, 0usize)?,
        bottom_group: Some(s.get("bottom-group", a.bottom_group, "low".to_string())?),
        random: s.get("random", a.random, 0usize)?,
        random_group: Some(s.get("random-group", a.random_group, "mid".to_string())?),
        seed,
    };
    let report = rank_and_select(&predictor, &candidates, &plan)?;
    s.emit(|w| write_selection_fasta(w, &report), || json!(report))
}

pub fn contrib(s: &mut Settings, a: DesignContribArgs) -> Result<()> {
    let predictor = load_predictor(s, a.predictor)?;
    let input = s.opt::<String>("input", a.input)?;
    let seqs = inputs::sequences(&a.sequences, input.as_deref())?;
    let profiles: Vec<Vec<Option<f64>>> = seqs.iter().map(|q| contribution_scores(&predictor, q)).collect();
    let id = |i: usize| seqs[i].id.clone().unwrap_or_else(|| format!("seq{}", i + 1));
    s.emit(
        |w| {
            writeln!(w, "#id\tpos\tbase\tC")?;
            for (i, (q, prof)) in seqs.iter().zip(&profiles).enumerate() {
                for (p, (b, c)) in q.as_bytes().iter().zip(prof).enumerate() {
                    match c {
                        Some(c) => writeln!(w, "{}\t{}\t{}\t{c:.10}", id(i), p + 1, *b as char)?,
                        None => writeln!(w, "{}\t{}\t{}\tNA", id(i), p + 1, *b as char)?,
                    }
                }
            }
            Ok(())
        },
        || {
            json!(seqs
                .iter()
                .enumerate()
                .map(|(i, q)| json!({"id": id(i), "sequence": q.to_string(), "contribution": profiles[i]}))
                .collect::<Vec<_>>())
        },
    )
}
