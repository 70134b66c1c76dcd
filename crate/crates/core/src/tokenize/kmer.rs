use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{kmer_char, Vocabulary};
use super::TokenizeError;
use crate::rng::job_rng;
use crate::seq::{base_rank, NucleotideSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetPolicy {
    Fixed(usize),
    /// Offset drawn uniformly from `0..k` per sequence, from the job stream
    /// `(seed, sequence index)`.
    UniformRandom { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KmerSpec {
    pub k: usize,
    pub offset_policy: OffsetPolicy,
}

impl KmerSpec {
    pub fn new(k: usize, offset_policy: OffsetPolicy) -> Result<Self, TokenizeError> {
        if !(1..=8).contains(&k) {
            return Err(TokenizeError::BadK(k));
        }
        if let OffsetPolicy::Fixed(o) = offset_policy {
            if o >= k {
                return Err(TokenizeError::BadOffset { offset: o, k });
            }
        }
        Ok(Self { k, offset_policy })
    }

    pub fn fixed(k: usize, offset: usize) -> Result<Self, TokenizeError> {
        Self::new(k, OffsetPolicy::Fixed(offset))
    }

    /// Phase offset for the `job`-th sequence of a corpus.
    pub fn offset_for(&self, job: u64) -> usize {
        match self.offset_policy {
            OffsetPolicy::Fixed(o) => o,
            OffsetPolicy::UniformRandom { seed } => job_rng(seed, job).gen_range(0..self.k),
        }
    }
}

/// Result of k-mer encoding. `lead` holds the nucleotides skipped by the
/// phase offset and `tail` the trailing remainder shorter than k.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KmerEncoding {
    pub offset_used: usize,
    pub ids: Vec<u32>,
    pub lead: String,
    pub tail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KmerTokenizer {
    k: usize,
    vocab: Vocabulary,
}

impl KmerTokenizer {
    pub fn new(k: usize) -> Result<Self, TokenizeError> {
        Ok(Self {
            k,
            vocab: Vocabulary::kmer(k)?,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Rank of a fully unambiguous k-mer.
    #[inline]
    pub fn kmer_id(&self, kmer: &[u8]) -> Option<u32> {
        kmer.iter()
            .try_fold(0u32, |acc, &b| base_rank(b).map(|r| (acc << 2) | r as u32))
    }

    pub fn encode_at(&self, seq: &NucleotideSequence, offset: usize) -> Result<KmerEncoding, TokenizeError> {
        if offset >= self.k {
            return Err(TokenizeError::BadOffset { offset, k: self.k });
        }
        let bases = seq.as_bytes();
        if let Some(position) = bases.iter().position(|&b| b == b'N') {
            return Err(TokenizeError::ContainsAmbiguousBase { position });
        }
        let offset_used = offset.min(bases.len());
        let body = &bases[offset_used..];
        let m = body.len() / self.k;
        let ids = body
            .chunks_exact(self.k)
            .map(|c| self.kmer_id(c).expect("N-free"))
            .collect();
        let ascii = |b: &[u8]| String::from_utf8(b.to_vec()).expect("ASCII");
        Ok(KmerEncoding {
            offset_used,
            ids,
            lead: ascii(&bases[..offset_used]),
            tail: ascii(&body[m * self.k..]),
        })
    }

    pub fn decode(&self, ids: &[u32]) -> Result<NucleotideSequence, TokenizeError> {
        let n_seq = 1u32 << (2 * self.k);
        let mut out = Vec::with_capacity(ids.len() * self.k);
        for &id in ids {
            if id >= n_seq {
                return Err(if self.vocab.is_special(id) {
                    TokenizeError::SpecialTokenInStream(id)
                } else {
                    TokenizeError::UnknownTokenId(id)
                });
            }
            out.extend((0..self.k).map(|j| kmer_char(id, self.k, j)));
        }
        Ok(NucleotideSequence::from_valid(out))
    }
}

/// Encodes with the offset chosen by `spec` for the first sequence of a corpus.
pub fn kmer_encode(seq: &NucleotideSequence, spec: &KmerSpec) -> Result<KmerEncoding, TokenizeError> {
    KmerTokenizer::new(spec.k)?.encode_at(seq, spec.offset_for(0))
}

pub fn kmer_decode(ids: &[u32], spec: &KmerSpec) -> Result<NucleotideSequence, TokenizeError> {
    KmerTokenizer::new(spec.k)?.decode(ids)
}
