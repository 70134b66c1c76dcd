//! Corpus construction: annotation parsing, gene-centric region extraction,
//! benchmark dataset sampling and corpus statistics.

mod bed;
mod genbank;
mod gener;
mod regions;

pub use bed::parse_bed_like;
pub use genbank::{lineage_to_taxon, parse_genbank, parse_genbank_genes, GenbankRecord};
pub use gener::{build_gener_task_datasets, write_labeled_tsv, GenerDatasets, GenerReport, GenerTaskConfig, LabeledSequence};
pub use regions::{
    corpus_stats, extract_functional_regions, read_corpus, write_corpus, CorpusStats, FunctionalRegion, StatsRow,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seq::SeqError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("line {line}: malformed location {location:?}")]
    MalformedLocation { line: usize, location: String },
    #[error("GenBank record {0:?} has no ORIGIN section")]
    MissingOrigin(String),
    #[error("line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("annotation references unknown sequence id {0:?}")]
    UnknownSequenceId(String),
    #[error("insufficient data for {group}: needed {needed}, available {available}")]
    InsufficientData {
        group: String,
        needed: usize,
        available: usize,
    },
    #[error("annotation {seq_id}:{start}-{end} lies outside a sequence of length {len}")]
    OutOfBounds {
        seq_id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error(transparent)]
    Seq(#[from] SeqError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strand {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl fmt::Display for Strand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strand::Plus => "+",
            Strand::Minus => "-",
        })
    }
}

impl FromStr for Strand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "+" => Ok(Strand::Plus),
            "-" | "\u{2212}" => Ok(Strand::Minus),
            other => Err(format!("unknown strand {other:?}")),
        }
    }
}

macro_rules! labelled_enum {
    ($name:ident { $($variant:ident => $label:literal $(| $alias:literal)*),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $label)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($label $(| $alias)* => Ok($name::$variant),)+
                    other => Err(format!(concat!("unknown ", stringify!($name), " {:?}"), other)),
                }
            }
        }
    };
}

labelled_enum!(FeatureType {
    Cds => "CDS",
    Pseudo => "pseudo",
    Trna => "tRNA",
    Rrna => "rRNA",
    Ncrna => "ncRNA",
    MiscRna => "miscRNA" | "misc_RNA",
    Gene => "gene",
});

labelled_enum!(TaxonGroup {
    Protozoa => "protozoa",
    Fungi => "fungi",
    Plant => "plant",
    Invertebrate => "invertebrate",
    Mammalian => "mammalian",
    VertebrateOther => "vertebrate_other",
});

impl FeatureType {
    /// The six gene categories used for gene-type classification.
    pub const GENE_CLASSES: [FeatureType; 6] = [
        FeatureType::Cds,
        FeatureType::Pseudo,
        FeatureType::Trna,
        FeatureType::Rrna,
        FeatureType::Ncrna,
        FeatureType::MiscRna,
    ];
}

pub fn taxon_label(t: Option<TaxonGroup>) -> &'static str {
    t.map_or("unassigned", TaxonGroup::label)
}

/// One annotated interval, normalized to 1-based inclusive coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub seq_id: String,
    pub start: usize,
    pub end: usize,
    pub strand: Strand,
    pub feature_type: FeatureType,
    pub taxon_group: Option<TaxonGroup>,
}

impl AnnotationRecord {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}
