//! Minimal GenBank flat-file reader: LOCUS name, organism lineage, `gene`
//! features and the ORIGIN sequence. Qualifiers other than `/gene`,
//! `/locus_tag` and `/pseudo` are ignored.

use std::collections::HashMap;

use super::{AnnotationRecord, FeatureType, IngestError, Strand, TaxonGroup};
use crate::seq::NucleotideSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct GenbankRecord {
    pub sequence: NucleotideSequence,
    pub taxon_group: Option<TaxonGroup>,
    pub genes: Vec<AnnotationRecord>,
}

#[derive(Debug)]
struct Feature {
    key: String,
    location: String,
    line: usize,
    qualifiers: Vec<(String, String)>,
}

impl Feature {
    fn qualifier(&self, name: &str) -> Option<&str> {
        self.qualifiers.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }

    /// `/locus_tag`, falling back to `/gene`.
    fn tag(&self) -> Option<&str> {
        self.qualifier("locus_tag").or_else(|| self.qualifier("gene"))
    }
}

/// Maps an NCBI lineage string onto the six RefSeq eukaryotic groups.
pub fn lineage_to_taxon(lineage: &str) -> Option<TaxonGroup> {
    let has = |clade: &str| lineage.split([';', '.']).any(|t| t.trim() == clade);
    if has("Mammalia") {
        Some(TaxonGroup::Mammalian)
    } else if has("Vertebrata") {
        Some(TaxonGroup::VertebrateOther)
    } else if has("Viridiplantae") {
        Some(TaxonGroup::Plant)
    } else if has("Fungi") {
        Some(TaxonGroup::Fungi)
    } else if has("Metazoa") {
        Some(TaxonGroup::Invertebrate)
    } else if has("Eukaryota") {
        Some(TaxonGroup::Protozoa)
    } else {
        None
    }
}

/// Parses a location into its outer span and strand. `join`/`order` collapse
/// to `[min, max]`; partial markers `<`/`>` are accepted and ignored.
fn parse_location(loc: &str, line: usize) -> Result<(usize, usize, Strand), IngestError> {
    let bad = || IngestError::MalformedLocation {
        line,
        location: loc.to_string(),
    };
    fn inner(s: &str) -> Option<(usize, usize, Option<Strand>)> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("complement(").and_then(|r| r.strip_suffix(')')) {
            let (a, b, strand) = inner(rest)?;
            let flipped = match strand {
                Some(Strand::Minus) => Strand::Plus,
                _ => Strand::Minus,
            };
            return Some((a, b, Some(flipped)));
        }
        for op in ["join(", "order("] {
            if let Some(rest) = s.strip_prefix(op).and_then(|r| r.strip_suffix(')')) {
                let mut parts = Vec::new();
                let mut depth = 0i32;
                let mut begin = 0;
                for (i, c) in rest.char_indices() {
                    match c {
                        '(' => depth += 1,
                        ')' => depth -= 1,
                        ',' if depth == 0 => {
                            parts.push(&rest[begin..i]);
                            begin = i + 1;
                        }
                        _ => {}
                    }
                }
                parts.push(&rest[begin..]);
                let spans: Vec<_> = parts.into_iter().map(inner).collect::<Option<_>>()?;
                let strands: Vec<Strand> = spans.iter().map(|s| s.2.unwrap_or(Strand::Plus)).collect();
                if strands.windows(2).any(|w| w[0] != w[1]) {
                    return None;
                }
                let a = spans.iter().map(|s| s.0).min()?;
                let b = spans.iter().map(|s| s.1).max()?;
                return Some((a, b, strands.first().copied()));
            }
        }
        let clean: String = s.chars().filter(|c| *c != '<' && *c != '>').collect();
        let num = |t: &str| t.parse::<usize>().ok().filter(|&v| v >= 1);
        let (a, b) = match clean.split_once("..") {
            Some((a, b)) => (num(a)?, num(b)?),
            None => match clean.split_once('^') {
                Some((a, b)) => (num(a)?, num(b)?),
                None => (num(&clean)?, num(&clean)?),
            },
        };
        (a <= b).then_some((a, b, None))
    }
    let (a, b, strand) = inner(loc).ok_or_else(bad)?;
    Ok((a, b, strand.unwrap_or(Strand::Plus)))
}

fn child_type(key: &str) -> Option<FeatureType> {
    match key {
        "CDS" => Some(FeatureType::Cds),
        "tRNA" => Some(FeatureType::Trna),
        "rRNA" => Some(FeatureType::Rrna),
        "ncRNA" => Some(FeatureType::Ncrna),
        "misc_RNA" => Some(FeatureType::MiscRna),
        _ => None,
    }
}

/// Parses every record of a GenBank flat file.
///
/// One [`AnnotationRecord`] is produced per `gene` feature. Its feature type is
/// `pseudo` when the gene carries `/pseudo`, otherwise the type of the first
/// CDS/tRNA/rRNA/ncRNA/misc_RNA feature sharing its `/locus_tag` (or `/gene`),
/// otherwise `gene`. Non-ACGT IUPAC letters in ORIGIN become `N`.
pub fn parse_genbank(text: &str) -> Result<Vec<GenbankRecord>, IngestError> {
    #[derive(PartialEq)]
    enum Section {
        Header,
        Features,
        Origin,
    }
    let mut out = Vec::new();
    let mut name = String::new();
    let mut lineage = String::new();
    let mut in_organism = false;
    let mut features: Vec<Feature> = Vec::new();
    let mut origin: Option<Vec<u8>> = None;
    let mut section = Section::Header;
    let mut started = false;

    let lines: Vec<&str> = text.lines().collect();
    let mut close = |name: &mut String,
                     lineage: &mut String,
                     features: &mut Vec<Feature>,
                     origin: &mut Option<Vec<u8>>|
     -> Result<(), IngestError> {
        let bases = origin.take().ok_or_else(|| IngestError::MissingOrigin(name.clone()))?;
        let taxon = lineage_to_taxon(lineage);
        let mut seq = NucleotideSequence::from_bytes(&bases)?.with_id(name.clone());
        if let Some(t) = taxon {
            seq = seq.with_meta("taxon", t.label());
        }
        let by_tag: HashMap<&str, FeatureType> = features
            .iter()
            .rev()
            .filter_map(|f| Some((f.tag()?, child_type(&f.key)?)))
            .collect();
        let by_span: HashMap<&str, FeatureType> = features
            .iter()
            .rev()
            .filter_map(|f| Some((f.location.as_str(), child_type(&f.key)?)))
            .collect();
        let mut genes = Vec::new();
        for f in features.iter().filter(|f| f.key == "gene") {
            let (start, end, strand) = parse_location(&f.location, f.line)?;
            if end > seq.len() {
                return Err(IngestError::MalformedLocation {
                    line: f.line,
                    location: f.location.clone(),
                });
            }
            let feature_type = if f.qualifiers.iter().any(|(k, _)| k == "pseudo" || k == "pseudogene") {
                FeatureType::Pseudo
            } else {
                f.tag()
                    .and_then(|t| by_tag.get(t))
                    .or_else(|| by_span.get(f.location.as_str()))
                    .copied()
                    .unwrap_or(FeatureType::Gene)
            };
            genes.push(AnnotationRecord {
                seq_id: name.clone(),
                start,
                end,
                strand,
                feature_type,
                taxon_group: taxon,
            });
        }
        out.push(GenbankRecord {
            sequence: seq,
            taxon_group: taxon,
            genes,
        });
        name.clear();
        lineage.clear();
        features.clear();
        Ok(())
    };

    for (i, raw) in lines.iter().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end();
        if line.starts_with("LOCUS") {
            name = line.split_whitespace().nth(1).unwrap_or("").to_string();
            section = Section::Header;
            started = true;
            continue;
        }
        if !started {
            continue;
        }
        if line.starts_with("//") {
            close(&mut name, &mut lineage, &mut features, &mut origin)?;
            started = false;
            section = Section::Header;
            continue;
        }
        if line.starts_with("FEATURES") {
            section = Section::Features;
            continue;
        }
        if line.starts_with("ORIGIN") {
            section = Section::Origin;
            origin = Some(Vec::new());
            continue;
        }
        match section {
            Section::Header => {
                if line.starts_with("  ORGANISM") {
                    in_organism = true;
                } else if line.starts_with("            ") && in_organism {
                    lineage.push_str(line.trim());
                    lineage.push(' ');
                } else {
                    in_organism = false;
                }
            }
            Section::Features => {
                if line.len() > 5 && line.as_bytes()[5] != b' ' && line.starts_with("     ") {
                    let mut parts = line[5..].splitn(2, char::is_whitespace);
                    let key = parts.next().unwrap_or("").to_string();
                    let location = parts.next().unwrap_or("").trim().to_string();
                    features.push(Feature {
                        key,
                        location,
                        line: line_no,
                        qualifiers: Vec::new(),
                    });
                } else if let Some(f) = features.last_mut() {
                    let body = line.trim();
                    if let Some(q) = body.strip_prefix('/') {
                        let (k, v) = q.split_once('=').unwrap_or((q, ""));
                        f.qualifiers.push((k.to_string(), v.trim_matches('"').to_string()));
                    } else if f.qualifiers.is_empty() {
                        f.location.push_str(body);
                    } else if let Some(last) = f.qualifiers.last_mut() {
                        last.1.push(' ');
                        last.1.push_str(body.trim_matches('"'));
                    }
                } else if !line.trim().is_empty() {
                    return Err(IngestError::BadRow {
                        line: line_no,
                        reason: "feature qualifier before any feature key".into(),
                    });
                }
            }
            Section::Origin => {
                let bases = origin.as_mut().expect("ORIGIN opened");
                bases.extend(line.bytes().filter(u8::is_ascii_alphabetic).map(|b| {
                    let up = b.to_ascii_uppercase();
                    if b"ACGT".contains(&up) {
                        up
                    } else {
                        b'N'
                    }
                }));
            }
        }
    }
    if started {
        close(&mut name, &mut lineage, &mut features, &mut origin)?;
    }
    Ok(out)
}

/// All gene annotations in a flat file.
pub fn parse_genbank_genes(text: &str) -> Result<Vec<AnnotationRecord>, IngestError> {
    Ok(parse_genbank(text)?.into_iter().flat_map(|r| r.genes).collect())
}
