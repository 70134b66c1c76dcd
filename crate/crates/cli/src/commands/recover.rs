use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use genolm::ingest::TaxonGroup;
use genolm::recover::{
    build_recovery_dataset, read_dataset_tsv, run_recovery, write_dataset_tsv, Anchor, RecoveryDatasetConfig,
    RecoveryRunConfig,
};
use serde_json::json;

use super::ingest::load_regions;
use super::lm::sampler;
use crate::cli::{RecoverBuildArgs, RecoverRunArgs};
use crate::inputs::{self, ensure, parse_list};
use crate::settings::{usage, Settings};

pub fn build(s: &mut Settings, a: RecoverBuildArgs, seed: u64) -> Result<()> {
    let d = RecoveryDatasetConfig::default();
    let anchor = match s.get("anchor", a.anchor, "region-start".to_string())?.as_str() {
        "region-start" => Anchor::RegionStart,
        "uniform" => Anchor::Uniform,
        other => return Err(usage(format!("unknown anchor {other:?} (region-start or uniform)"))),
    };
    let groups = match s.opt::<String>("groups", a.groups)? {
        Some(raw) => Some(
            raw.split(',')
                .map(|g| match g.trim() {
                    "unassigned" => Ok(None),
                    t => t.parse::<TaxonGroup>().map(Some).map_err(usage),
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let cfg = RecoveryDatasetConfig {
        prompt_len: s.get("prompt-len", a.prompt_len, d.prompt_len)?,
        predict_len: s.get("predict-len", a.predict_len, d.predict_len)?,
        per_group_n: s.get("per-group", a.per_group, d.per_group_n)?,
        anchor,
        groups,
        seed,
    };
    ensure(cfg.prompt_len > 0 && cfg.predict_len > 0, "lengths must be positive")?;
    let (genome, regions) = load_regions(s, a.genome)?;
    let items = build_recovery_dataset(&regions, &genome, &cfg)?;
    eprintln!("built {} recovery items", items.len());
    s.emit(
        |w| write_dataset_tsv(w, &items),
        || {
            json!(items
                .iter()
                .map(|it| json!({
                    "prompt": it.prompt.to_string(),
                    "reference": it.reference.to_string(),
                    "taxon": genolm::ingest::taxon_label(it.taxon_group),
                }))
                .collect::<Vec<_>>())
        },
    )
}

pub fn run(s: &mut Settings, a: RecoverRunArgs, seed: u64) -> Result<()> {
    let dataset = s.required::<String>("dataset", a.dataset)?;
    let predict_lens: Vec<usize> = parse_list(&s.get("predict-lens", a.predict_lens, "30".to_string())?, "length")?;
    ensure(predict_lens.iter().all(|&l| l > 0), "prediction lengths must be positive")?;
    let sample = s.flag("sample", a.sample)?;
    let sampler_cfg = sampler(s, a.sampling, !sample, 1, seed)?;
    let items_out = s.opt::<String>("items-out", a.items_out)?;
    let tok = inputs::tokenizer(s, a.model.tokenizer.k, a.model.tokenizer.tokenizer)?;
    let (model, tok) = inputs::model(s, a.model.model, tok, a.model.timeout)?;
    let items = read_dataset_tsv(inputs::open(Path::new(&dataset))?).with_context(|| format!("reading {dataset}"))?;
    let cfg = RecoveryRunConfig {
        predict_lens,
        sampler: sampler_cfg,
    };
    let report = run_recovery(model.lm(), &tok, &items, &cfg)?;
    if let Some(p) = items_out {
        let mut w = BufWriter::new(File::create(&p).with_context(|| format!("creating {p}"))?);
        report.write_items_tsv(&mut w, &cfg.predict_lens)?;
        w.flush()?;
        s.write_sidecar(Path::new(&p))?;
    }
    s.emit(|w| report.write_tsv(w), || json!({"groups": report.groups, "overall": report.overall}))
}
