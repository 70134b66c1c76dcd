use std::path::Path;

use anyhow::{Context, Result};
use genolm::sample::CausalAsMasked;
use genolm::vep::{
    evaluate_vep, read_variants_tsv, score_variants, validate_variants, write_scores_tsv, Phase, Scorer, VariantLabel,
    VepOptions,
};
use serde_json::json;

use crate::cli::{VepEvalArgs, VepScoreArgs};
use crate::inputs;
use crate::settings::{usage, Settings};

fn parse_phase(raw: &str) -> Result<Phase> {
    match raw {
        "token-end" => Ok(Phase::TokenEnd),
        "average" => Ok(Phase::Average),
        j => j
            .parse()
            .map(Phase::Fixed)
            .map_err(|_| usage(format!("bad phase {j:?} (token-end, average or an offset)"))),
    }
}

pub fn score(s: &mut Settings, a: VepScoreArgs) -> Result<()> {
    let genome_path = s.required::<String>("genome", a.genome)?;
    let variants_path = s.required::<String>("variants", a.variants)?;
    let d = VepOptions::default();
    let opts = VepOptions {
        phase: parse_phase(&s.get("phase", a.phase, "token-end".to_string())?)?,
        window: s.get("window", a.window, d.window)?,
    };
    let masked = s.flag("masked", a.masked)?;
    let tok = inputs::tokenizer(s, a.model.tokenizer.k, a.model.tokenizer.tokenizer)?;
    let (model, tok) = inputs::model(s, a.model.model, tok, a.model.timeout)?;
    let genome = inputs::read_fasta_file(Path::new(&genome_path))?;
    let variants =
        read_variants_tsv(inputs::open(Path::new(&variants_path))?).with_context(|| format!("reading {variants_path}"))?;
    validate_variants(&genome, &variants)?;
    let mlm = CausalAsMasked(model.lm());
    let scorer = if masked { Scorer::Masked(&mlm) } else { Scorer::Causal(model.lm()) };
    let scores = score_variants(&scorer, &tok, &genome, &variants, &opts)?;
    let truncated = scores.iter().filter(|x| x.truncated).count();
    if truncated > 0 {
        eprintln!("warning: {truncated} variants scored with truncated context");
    }
    s.emit(
        |w| write_scores_tsv(w, &variants, &scores),
        || {
            json!(variants
                .iter()
                .zip(&scores)
                .map(|(v, x)| json!({
                    "seq_id": v.seq_id,
                    "pos": v.pos,
                    "ref": (v.ref_allele as char).to_string(),
                    "alt": (v.alt_allele as char).to_string(),
                    "vep_score": x.score,
                    "truncated": x.truncated,
                }))
                .collect::<Vec<_>>())
        },
    )
}

pub fn eval(s: &mut Settings, a: VepEvalArgs) -> Result<()> {
    let path = s.required::<String>("scores", a.scores)?;
    let text = inputs::read_text(Path::new(&path))?;
    let (mut scores, mut labels, mut unlabeled) = (Vec::new(), Vec::new(), 0usize);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let ctx = || format!("{path} line {}", i + 1);
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 6 {
            anyhow::bail!("{}: expected the columns written by `vep score`", ctx());
        }
        if cols[4].trim().is_empty() {
            unlabeled += 1;
            continue;
        }
        let label: VariantLabel = cols[4].trim().parse().map_err(anyhow::Error::msg).with_context(ctx)?;
        scores.push(cols[5].trim().parse::<f64>().with_context(ctx)?);
        labels.push(label == VariantLabel::Pathogenic);
    }
    if unlabeled > 0 {
        eprintln!("skipped {unlabeled} unlabeled variants");
    }
    let m = evaluate_vep(&scores, &labels)?;
    s.emit(
        |w| {
            writeln!(w, "#metric\tvalue")?;
            writeln!(w, "auroc\t{:.6}", m.auroc)?;
            writeln!(w, "auprc\t{:.6}", m.auprc)?;
            writeln!(w, "n\t{}", m.n)?;
            writeln!(w, "n_positive\t{}", m.n_positive)?;
            writeln!(w, "positive_class\t{}", m.positive_class)?;
            writeln!(w, "statistic\t{}", m.statistic)
        },
        || json!(m),
    )
}
