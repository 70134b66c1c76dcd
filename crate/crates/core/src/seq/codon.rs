use std::fmt;

use super::{NucleotideSequence, SeqError};

const AMINO_ACIDS: &[u8] = b"ACDEFGHIKLMNPQRSTVWY*";

/// Protein sequence over the 20 standard amino acids plus the stop marker `*`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProteinSequence {
    residues: Vec<u8>,
}

impl ProteinSequence {
    pub fn new(raw: &str) -> Result<Self, SeqError> {
        let residues = raw.as_bytes().to_vec();
        if let Some(position) = residues.iter().position(|b| !AMINO_ACIDS.contains(b)) {
            return Err(SeqError::InvalidResidue {
                position,
                byte: residues[position],
            });
        }
        Ok(Self { residues })
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.residues).expect("residues are ASCII")
    }

    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }
}

impl fmt::Display for ProteinSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationReport {
    pub protein: ProteinSequence,
    /// Translated span length is a multiple of three.
    pub complete: bool,
    /// A stop codon occurs before the final codon.
    pub premature_stop: bool,
    pub starts_with_met: bool,
}

/// Codon table in NCBI `transl_table` layout: 64 amino-acid letters for codons
/// enumerated with T<C<A<G in each position.
#[derive(Debug, Clone)]
pub struct GeneticCode {
    pub name: &'static str,
    table: [u8; 64],
}

impl GeneticCode {
    pub fn standard() -> Self {
        Self::from_ncbi(
            "standard",
            b"FFLLSSSSYY**CC*WLLLLPPPPHHQQRRRRIIIMTTTTNNKKSSRRVVVVAAAADDEEGGGG",
        )
    }

    pub fn from_ncbi(name: &'static str, letters: &[u8; 64]) -> Self {
        Self {
            name,
            table: *letters,
        }
    }

    fn ncbi_rank(b: u8) -> Option<usize> {
        match b {
            b'T' => Some(0),
            b'C' => Some(1),
            b'A' => Some(2),
            b'G' => Some(3),
            _ => None,
        }
    }

    /// Amino acid for a codon, or `None` if any base is ambiguous.
    pub fn codon(&self, codon: &[u8]) -> Option<u8> {
        let mut idx = 0;
        for &b in codon {
            idx = idx * 4 + Self::ncbi_rank(b)?;
        }
        Some(self.table[idx])
    }

    pub fn translate(&self, seq: &NucleotideSequence, frame: usize) -> Result<TranslationReport, SeqError> {
        if frame > 2 {
            return Err(SeqError::BadFrame(frame));
        }
        let bases = seq.as_bytes();
        let span = bases.len().saturating_sub(frame);
        let mut residues = Vec::with_capacity(span / 3);
        for (c, codon) in bases.get(frame..).unwrap_or(&[]).chunks_exact(3).enumerate() {
            match self.codon(codon) {
                Some(aa) => residues.push(aa),
                None => {
                    let offset = codon.iter().position(|&b| b == b'N').unwrap_or(0);
                    return Err(SeqError::AmbiguousBase(frame + 3 * c + offset));
                }
            }
        }
        let premature_stop = residues
            .iter()
            .take(residues.len().saturating_sub(1))
            .any(|&r| r == b'*');
        Ok(TranslationReport {
            starts_with_met: residues.first() == Some(&b'M'),
            complete: span.is_multiple_of(3),
            premature_stop,
            protein: ProteinSequence { residues },
        })
    }
}

impl Default for GeneticCode {
    fn default() -> Self {
        Self::standard()
    }
}

/// Translates with the standard genetic code (NCBI table 1).
pub fn translate(seq: &NucleotideSequence, frame: usize) -> Result<TranslationReport, SeqError> {
    GeneticCode::standard().translate(seq, frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tr(s: &str, frame: usize) -> TranslationReport {
        translate(&NucleotideSequence::validate(s).unwrap(), frame).unwrap()
    }

    #[test]
    fn start_and_stop() {
        let r = tr("ATGTAA", 0);
        assert_eq!(r.protein.as_str(), "M*");
        assert!(!r.premature_stop);
        assert!(r.complete);
        assert!(r.starts_with_met);
    }

    #[test]
    fn internal_stop_is_premature() {
        let r = tr("ATGTAAAAA", 0);
        assert_eq!(r.protein.as_str(), "M*K");
        assert!(r.premature_stop);
    }

    #[test]
    fn frame_one_drops_partial_codon() {
        let r = tr("ATGGCC", 1);
        assert_eq!(r.protein.as_str(), "W");
        assert!(!r.complete);
        assert!(!r.starts_with_met);
    }

    #[test]
    fn spot_check_codon_table() {
        // a handful of hand-looked-up codons from the standard table
        let code = GeneticCode::standard();
        for (codon, aa) in [
            ("TTT", b'F'),
            ("CTG", b'L'),
            ("ATA", b'I'),
            ("GGG", b'G'),
            ("TGA", b'*'),
            ("TAG", b'*'),
            ("AGA", b'R'),
            ("CAT", b'H'),
            ("GAC", b'D'),
            ("TGG", b'W'),
        ] {
            assert_eq!(code.codon(codon.as_bytes()), Some(aa), "{codon}");
        }
    }

    #[test]
    fn n_inside_codon_is_rejected() {
        let s = NucleotideSequence::validate("ATGANC").unwrap();
        assert_eq!(translate(&s, 0), Err(SeqError::AmbiguousBase(4)));
        // N outside the translated span is fine
        let s = NucleotideSequence::validate("NATG").unwrap();
        assert_eq!(translate(&s, 1).unwrap().protein.as_str(), "M");
    }

    #[test]
    fn bad_frame() {
        let s = NucleotideSequence::validate("ATG").unwrap();
        assert_eq!(translate(&s, 3), Err(SeqError::BadFrame(3)));
    }

    #[test]
    fn protein_alphabet() {
        assert!(ProteinSequence::new("MKV*").is_ok());
        assert!(ProteinSequence::new("MKB").is_err());
    }

    proptest! {
        #[test]
        fn residue_count(s in "[ACGT]{0,300}", frame in 0usize..3) {
            let seq = NucleotideSequence::validate(&s).unwrap();
            let r = translate(&seq, frame).unwrap();
            prop_assert_eq!(r.protein.len(), s.len().saturating_sub(frame) / 3);
            let stops: Vec<usize> = r.protein.as_str().match_indices('*').map(|(i, _)| i).collect();
            let premature = stops.iter().any(|&i| i + 1 != r.protein.len());
            prop_assert_eq!(r.premature_stop, premature);
        }
    }
}
