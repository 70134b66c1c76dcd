//! Validated DNA sequences and the primitive operations the rest of the
//! toolkit builds on: reverse complement, codon translation, FASTA I/O.

mod codon;
pub mod fasta;

pub use codon::{translate, GeneticCode, ProteinSequence, TranslationReport};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeqError {
    #[error("invalid nucleotide symbol {:?} at position {position}", char::from(*byte))]
    InvalidSymbol { position: usize, byte: u8 },
    #[error("ambiguous base at position {0} inside a translated codon")]
    AmbiguousBase(usize),
    #[error("invalid reading frame {0} (expected 0, 1 or 2)")]
    BadFrame(usize),
    #[error("invalid amino-acid symbol {:?} at position {position}", char::from(*byte))]
    InvalidResidue { position: usize, byte: u8 },
    #[error("malformed FASTA: {0}")]
    MalformedFasta(String),
}

/// Rank of a nucleotide in the A<C<G<T ordering; `None` for N.
#[inline]
pub fn base_rank(b: u8) -> Option<usize> {
    match b {
        b'A' => Some(0),
        b'C' => Some(1),
        b'G' => Some(2),
        b'T' => Some(3),
        _ => None,
    }
}

pub const BASES: [u8; 4] = *b"ACGT";

#[inline]
pub fn complement(b: u8) -> u8 {
    match b {
        b'A' => b'T',
        b'T' => b'A',
        b'C' => b'G',
        b'G' => b'C',
        other => other,
    }
}

/// A DNA sequence over `{A,C,G,T,N}` with an optional identifier and free-form
/// metadata tags (taxonomic group, feature type, strand, ...).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NucleotideSequence {
    pub id: Option<String>,
    bases: Vec<u8>,
    pub meta: BTreeMap<String, String>,
}

impl NucleotideSequence {
    /// Uppercases and strips whitespace; rejects anything outside `ACGTN`.
    /// Positions in errors refer to the whitespace-stripped input.
    pub fn validate(raw: &str) -> Result<Self, SeqError> {
        Self::from_bytes(raw.as_bytes())
    }

    pub fn from_bytes(raw: &[u8]) -> Result<Self, SeqError> {
        let mut bases = Vec::with_capacity(raw.len());
        for &b in raw.iter().filter(|b| !b.is_ascii_whitespace()) {
            let up = b.to_ascii_uppercase();
            match up {
                b'A' | b'C' | b'G' | b'T' | b'N' => bases.push(up),
                _ => {
                    return Err(SeqError::InvalidSymbol {
                        position: bases.len(),
                        byte: b,
                    })
                }
            }
        }
        Ok(Self {
            id: None,
            bases,
            meta: BTreeMap::new(),
        })
    }

    /// Builds a sequence from bytes that are already known to be uppercase `ACGTN`.
    pub(crate) fn from_valid(bases: Vec<u8>) -> Self {
        debug_assert!(bases.iter().all(|b| b"ACGTN".contains(b)));
        Self {
            id: None,
            bases,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bases
    }

    pub fn as_str(&self) -> &str {
        // only ASCII ACGTN is ever stored
        std::str::from_utf8(&self.bases).expect("nucleotides are ASCII")
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn has_ambiguous(&self) -> bool {
        self.bases.contains(&b'N')
    }

    /// Sub-sequence over a 0-based half-open range; metadata is not carried over.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self::from_valid(self.bases[start..end].to_vec())
    }

    pub fn reverse_complement(&self) -> Self {
        let bases = self.bases.iter().rev().map(|&b| complement(b)).collect();
        Self {
            id: self.id.clone(),
            bases,
            meta: self.meta.clone(),
        }
    }

    /// Maximal runs free of `N`, as 0-based half-open ranges.
    pub fn unambiguous_runs(&self) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut start = None;
        for (i, &b) in self.bases.iter().enumerate() {
            match (b == b'N', start) {
                (false, None) => start = Some(i),
                (true, Some(s)) => {
                    runs.push((s, i));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push((s, self.bases.len()));
        }
        runs
    }

    /// Fraction of G and C among the unambiguous bases.
    pub fn gc_fraction(&self) -> f64 {
        let (mut gc, mut total) = (0usize, 0usize);
        for &b in &self.bases {
            match b {
                b'G' | b'C' => {
                    gc += 1;
                    total += 1
                }
                b'A' | b'T' => total += 1,
                _ => {}
            }
        }
        if total == 0 {
            0.0
        } else {
            gc as f64 / total as f64
        }
    }
}

impl fmt::Display for NucleotideSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NucleotideSequence {
    type Err = SeqError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::validate(s)
    }
}

pub fn reverse_complement(seq: &NucleotideSequence) -> NucleotideSequence {
    seq.reverse_complement()
}
