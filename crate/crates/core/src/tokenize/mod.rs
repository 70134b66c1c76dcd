//! k-mer and BPE tokenizers sharing one vocabulary abstraction.

mod bpe;
mod kmer;
mod vocab;

pub use bpe::{bpe_train, BpeModel, BpeTrainer};
pub use kmer::{kmer_decode, kmer_encode, KmerEncoding, KmerSpec, KmerTokenizer, OffsetPolicy};
pub use vocab::{
    is_special_name, kmer_string, token_char, VocabKind, Vocabulary, BOS, EOS, HIGH, LOW, MASK, MID, PAD,
    SPECIAL_SLOTS, UNK,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seq::NucleotideSequence;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenizeError {
    #[error("sequence contains an ambiguous base at position {position}")]
    ContainsAmbiguousBase { position: usize },
    #[error("special token id {0} in a nucleotide token stream")]
    SpecialTokenInStream(u32),
    #[error("unknown token id {0}")]
    UnknownTokenId(u32),
    #[error("offset {offset} out of range for a token of length {len}")]
    OffsetOutOfRange { offset: usize, len: usize },
    #[error("k must be in 1..=8, got {0}")]
    BadK(usize),
    #[error("phase offset {offset} must be below k={k}")]
    BadOffset { offset: usize, k: usize },
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("target vocabulary {target} is below the minimum {minimum}")]
    TargetTooSmall { target: usize, minimum: usize },
    #[error("malformed vocabulary: {0}")]
    Malformed(String),
}

/// Either tokenization scheme behind one interface.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TokenizerFile", into = "TokenizerFile")]
pub enum Tokenizer {
    Kmer(KmerTokenizer),
    Bpe(BpeModel),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TokenizerFile {
    Kmer { k: usize },
    Bpe(BpeModel),
}

impl TryFrom<TokenizerFile> for Tokenizer {
    type Error = TokenizeError;

    fn try_from(f: TokenizerFile) -> Result<Self, Self::Error> {
        match f {
            TokenizerFile::Kmer { k } => Self::kmer(k),
            TokenizerFile::Bpe(m) => Ok(Self::Bpe(m)),
        }
    }
}

impl From<Tokenizer> for TokenizerFile {
    fn from(t: Tokenizer) -> Self {
        match t {
            Tokenizer::Kmer(kt) => TokenizerFile::Kmer { k: kt.k() },
            Tokenizer::Bpe(m) => TokenizerFile::Bpe(m),
        }
    }
}

impl Tokenizer {
    pub fn kmer(k: usize) -> Result<Self, TokenizeError> {
        Ok(Self::Kmer(KmerTokenizer::new(k)?))
    }

    pub fn vocab(&self) -> &Vocabulary {
        match self {
            Self::Kmer(t) => t.vocab(),
            Self::Bpe(m) => m.vocab(),
        }
    }

    /// Token length in nucleotides when fixed (k-mer); `None` for BPE.
    pub fn fixed_width(&self) -> Option<usize> {
        match self {
            Self::Kmer(t) => Some(t.k()),
            Self::Bpe(_) => None,
        }
    }

    /// Encodes from the first nucleotide. k-mer tails shorter than k are dropped;
    /// use [`Tokenizer::align_right`] first when the sequence must end on a token boundary.
    pub fn encode(&self, seq: &NucleotideSequence) -> Result<Vec<u32>, TokenizeError> {
        match self {
            Self::Kmer(t) => Ok(t.encode_at(seq, 0)?.ids),
            Self::Bpe(m) => m.encode(seq),
        }
    }

    pub fn decode(&self, ids: &[u32]) -> Result<NucleotideSequence, TokenizeError> {
        match self {
            Self::Kmer(t) => t.decode(ids),
            Self::Bpe(m) => m.decode(ids),
        }
    }

    /// Left-trims `seq` so its length is a multiple of the token width.
    pub fn align_right(&self, seq: &NucleotideSequence) -> NucleotideSequence {
        match self.fixed_width() {
            Some(k) => seq.slice(seq.len() % k, seq.len()),
            None => seq.clone(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Kmer(t) => format!("kmer(k={})", t.k()),
            Self::Bpe(m) => format!("bpe(vocab={})", m.vocab().len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn align_right_trims_leading_partial_token() {
        let t = Tokenizer::kmer(3).unwrap();
        let s = NucleotideSequence::validate("ACGTACGT").unwrap();
        assert_eq!(t.align_right(&s).as_str(), "GTACGT");
        let ids = t.encode(&t.align_right(&s)).unwrap();
        assert_eq!(t.decode(&ids).unwrap().as_str(), "GTACGT");
    }

    #[test]
    fn tokenizer_json_roundtrip() {
        let t = Tokenizer::kmer(4).unwrap();
        let back: Tokenizer = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
        let b = Tokenizer::Bpe(BpeModel::from_merges(vec![("A".into(), "C".into())]).unwrap());
        let back: Tokenizer = serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
        assert_eq!(back, b);
    }
}
