use super::{AnnotationRecord, IngestError};

/// Parses `seq_id, start, end, strand, feature_type[, taxon_group]` rows with
/// BED (0-based half-open) coordinates. Blank lines and `#` comments are skipped.
pub fn parse_bed_like(tsv: &str) -> Result<Vec<AnnotationRecord>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in tsv.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| IngestError::BadRow { line: line_no, reason };
        let cols: Vec<&str> = line.split('\t').collect();
        if !(5..=6).contains(&cols.len()) {
            return Err(bad(format!("expected 5 or 6 columns, found {}", cols.len())));
        }
        let start0: usize = cols[1].trim().parse().map_err(|_| bad(format!("bad start {:?}", cols[1])))?;
        let end: usize = cols[2].trim().parse().map_err(|_| bad(format!("bad end {:?}", cols[2])))?;
        if end <= start0 {
            return Err(bad(format!("end {end} must exceed start {start0}")));
        }
        let strand = cols[3].trim().parse().map_err(bad)?;
        let feature_type = cols[4].trim().parse().map_err(bad)?;
        let taxon_group = match cols.get(5).map(|s| s.trim()).filter(|s| !s.is_empty()) {
            Some(t) => Some(t.parse().map_err(bad)?),
            None => None,
        };
        out.push(AnnotationRecord {
            seq_id: cols[0].trim().to_string(),
            start: start0 + 1,
            end,
            strand,
            feature_type,
            taxon_group,
        });
    }
    Ok(out)
}
