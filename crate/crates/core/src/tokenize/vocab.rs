use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TokenizeError;
use crate::seq::base_rank;

/// Number of id slots reserved for special tokens at the top of every
/// vocabulary built by this crate.
pub const SPECIAL_SLOTS: usize = 32;

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const MASK: &str = "<mask>";
pub const UNK: &str = "<unk>";
pub const PAD: &str = "<pad>";
pub const HIGH: &str = "<high>";
pub const MID: &str = "<mid>";
pub const LOW: &str = "<low>";

const NAMED_SPECIALS: [&str; 8] = [BOS, EOS, MASK, UNK, PAD, HIGH, MID, LOW];

fn special_names() -> Vec<String> {
    let mut names: Vec<String> = NAMED_SPECIALS.iter().map(|s| s.to_string()).collect();
    names.extend((names.len()..SPECIAL_SLOTS).map(|i| format!("<extra_{i}>")));
    names
}

pub fn is_special_name(tok: &str) -> bool {
    tok.len() > 2 && tok.starts_with('<') && tok.ends_with('>')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabKind {
    /// All 4^k strings over ACGT in lexicographic order occupy ids `0..4^k`.
    Kmer { k: usize },
    Bpe,
    /// Token list supplied by an external model.
    External,
}

/// Dense token <-> id map. Sequence tokens come first, specials occupy the
/// top of the id range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    kind: VocabKind,
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    special: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    kind: VocabKind,
    tokens: Vec<String>,
}

impl TryFrom<VocabularyFile> for Vocabulary {
    type Error = TokenizeError;

    fn try_from(f: VocabularyFile) -> Result<Self, Self::Error> {
        Vocabulary::build(f.kind, f.tokens)
    }
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        VocabularyFile {
            kind: v.kind,
            tokens: v.tokens,
        }
    }
}

impl Vocabulary {
    fn build(kind: VocabKind, tokens: Vec<String>) -> Result<Self, TokenizeError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(TokenizeError::Malformed(format!("duplicate token {t:?}")));
            }
        }
        let special: Vec<bool> = tokens.iter().map(|t| is_special_name(t)).collect();
        for (t, &s) in tokens.iter().zip(&special) {
            if !s && (t.is_empty() || t.bytes().any(|b| base_rank(b).is_none())) {
                return Err(TokenizeError::Malformed(format!("token {t:?} is neither special nor ACGT")));
            }
        }
        if let VocabKind::Kmer { k } = kind {
            let expected = 1usize << (2 * k);
            let ok = special.iter().take(expected).all(|s| !s)
                && special.iter().skip(expected).all(|&s| s)
                && tokens.len() >= expected
                && tokens[..expected].iter().enumerate().all(|(i, t)| kmer_string(i, k) == *t);
            if !ok {
                return Err(TokenizeError::Malformed(format!("token list is not a {k}-mer vocabulary")));
            }
        }
        Ok(Self {
            kind,
            tokens,
            index,
            special,
        })
    }

    /// The 4^k k-mers in A<C<G<T order followed by the 32 special slots.
    pub fn kmer(k: usize) -> Result<Self, TokenizeError> {
        if !(1..=8).contains(&k) {
            return Err(TokenizeError::BadK(k));
        }
        let n = 1usize << (2 * k);
        let mut tokens: Vec<String> = (0..n).map(|i| kmer_string(i, k)).collect();
        tokens.extend(special_names());
        Self::build(VocabKind::Kmer { k }, tokens)
    }

    pub(crate) fn bpe(sequence_tokens: Vec<String>) -> Result<Self, TokenizeError> {
        let mut tokens = sequence_tokens;
        tokens.extend(special_names());
        Self::build(VocabKind::Bpe, tokens)
    }

    /// Vocabulary announced by an external model. Tokens of the form `<...>`
    /// are treated as specials; a complete lexicographic k-mer block is
    /// recognised as such.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, TokenizeError> {
        let seq_count = tokens.iter().take_while(|t| !is_special_name(t)).count();
        if let Some(k) = (1..=8).find(|&k| 1usize << (2 * k) == seq_count) {
            if let Ok(v) = Self::build(VocabKind::Kmer { k }, tokens.clone()) {
                return Ok(v);
            }
        }
        Self::build(VocabKind::External, tokens)
    }

    pub fn kind(&self) -> VocabKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn is_special(&self, id: u32) -> bool {
        self.special.get(id as usize).copied().unwrap_or(false)
    }

    pub fn special_mask(&self) -> &[bool] {
        &self.special
    }

    pub fn sequence_token_count(&self) -> usize {
        self.special.iter().filter(|s| !**s).count()
    }

    pub fn bos(&self) -> Option<u32> {
        self.id(BOS)
    }

    pub fn eos(&self) -> Option<u32> {
        self.id(EOS)
    }

    pub fn mask(&self) -> Option<u32> {
        self.id(MASK)
    }

    /// Stable content hash used to check that a tokenizer and a model agree.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `j`-th nucleotide of a sequence token.
    pub fn token_char(&self, id: u32, j: usize) -> Result<u8, TokenizeError> {
        if self.is_special(id) {
            return Err(TokenizeError::SpecialTokenInStream(id));
        }
        match self.kind {
            VocabKind::Kmer { k } => {
                if (id as usize) >= 1 << (2 * k) {
                    return Err(TokenizeError::UnknownTokenId(id));
                }
                if j >= k {
                    return Err(TokenizeError::OffsetOutOfRange { offset: j, len: k });
                }
                Ok(kmer_char(id, k, j))
            }
            _ => {
                let tok = self.token(id).ok_or(TokenizeError::UnknownTokenId(id))?;
                tok.as_bytes()
                    .get(j)
                    .copied()
                    .ok_or(TokenizeError::OffsetOutOfRange { offset: j, len: tok.len() })
            }
        }
    }
}

/// Lexicographic rank `i` rendered as a k-mer.
pub fn kmer_string(mut i: usize, k: usize) -> String {
    let mut buf = vec![b'A'; k];
    for slot in buf.iter_mut().rev() {
        *slot = crate::seq::BASES[i & 3];
        i >>= 2;
    }
    String::from_utf8(buf).expect("ASCII")
}

#[inline]
pub(crate) fn kmer_char(id: u32, k: usize, j: usize) -> u8 {
    crate::seq::BASES[((id as usize) >> (2 * (k - 1 - j))) & 3]
}

/// `j`-th character of token `t`. Shorthand for [`Vocabulary::token_char`].
pub fn token_char(vocab: &Vocabulary, token_id: u32, j: usize) -> Result<u8, TokenizeError> {
    vocab.token_char(token_id, j)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kmer_vocab_shape() {
        for k in 1..=8 {
            let v = Vocabulary::kmer(k).unwrap();
            assert_eq!(v.sequence_token_count(), 1 << (2 * k));
            assert_eq!(v.len(), (1 << (2 * k)) + SPECIAL_SLOTS);
        }
        let v6 = Vocabulary::kmer(6).unwrap();
        assert_eq!(v6.len(), 4128);
        assert_eq!(v6.id("AAAAAA"), Some(0));
        assert_eq!(v6.id("TTTTTT"), Some(4095));
        assert_eq!(v6.bos(), Some(4096));
        assert!(v6.is_special(4096));
        assert!(!v6.is_special(4095));
        assert!(Vocabulary::kmer(0).is_err());
        assert!(Vocabulary::kmer(9).is_err());
    }

    #[test]
    fn lexicographic_ranks() {
        // A=0 C=1 G=2 T=3, most significant first
        let v = Vocabulary::kmer(6).unwrap();
        assert_eq!(v.id("ACGTAC"), Some(0b00_01_10_11_00_01));
        assert_eq!(kmer_string(0b00_01_10_11_00_01, 6), "ACGTAC");
        let sorted: Vec<&String> = {
            let mut s: Vec<&String> = v.tokens()[..4096].iter().collect();
            s.sort();
            s
        };
        assert!(sorted.iter().zip(&v.tokens()[..4096]).all(|(a, b)| *a == b));
    }

    #[test]
    fn token_char_examples() {
        let v6 = Vocabulary::kmer(6).unwrap();
        let id = v6.id("ACGTAC").unwrap();
        assert_eq!(token_char(&v6, id, 2).unwrap(), b'G');
        assert!(matches!(
            token_char(&v6, id, 6),
            Err(TokenizeError::OffsetOutOfRange { offset: 6, len: 6 })
        ));
        assert!(matches!(token_char(&v6, 4096, 0), Err(TokenizeError::SpecialTokenInStream(4096))));
        let v1 = Vocabulary::kmer(1).unwrap();
        assert_eq!(token_char(&v1, v1.id("T").unwrap(), 0).unwrap(), b'T');
    }

    #[test]
    fn json_roundtrip_and_fingerprint() {
        let v = Vocabulary::kmer(2).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), v.fingerprint());
        assert_ne!(v.fingerprint(), Vocabulary::kmer(3).unwrap().fingerprint());
    }

    #[test]
    fn from_tokens_detects_kmer_layout() {
        let v = Vocabulary::kmer(2).unwrap();
        let again = Vocabulary::from_tokens(v.tokens().to_vec()).unwrap();
        assert_eq!(again.kind(), VocabKind::Kmer { k: 2 });
        let ext = Vocabulary::from_tokens(vec!["A".into(), "AC".into(), "<eos>".into()]).unwrap();
        assert_eq!(ext.kind(), VocabKind::External);
        assert_eq!(ext.token_char(1, 1).unwrap(), b'C');
        assert!(Vocabulary::from_tokens(vec!["A".into(), "A".into()]).is_err());
        assert!(Vocabulary::from_tokens(vec!["AXG".into()]).is_err());
    }
}
