//! Byte-pair encoding over the nucleotide alphabet.
//!
//! Training greedily merges the most frequent adjacent pair. Ties are broken
//! by the lexicographic order of the merged string (then of the left part), so
//! a corpus always yields the same merge list.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::vocab::Vocabulary;
use super::{TokenizeError, SPECIAL_SLOTS};
use crate::rng::seeded;
use crate::seq::{base_rank, NucleotideSequence};

const BASE_TOKENS: [&str; 4] = ["A", "C", "G", "T"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BpeFile", into = "BpeFile")]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    vocab: Vocabulary,
    /// `(left id, right id, merged id)` per merge, in training order.
    compiled: Vec<(u32, u32, u32)>,
}

#[derive(Serialize, Deserialize)]
struct BpeFile {
    merges: Vec<(String, String)>,
    vocab: Vocabulary,
}

impl TryFrom<BpeFile> for BpeModel {
    type Error = TokenizeError;

    fn try_from(f: BpeFile) -> Result<Self, Self::Error> {
        let rebuilt = BpeModel::from_merges(f.merges)?;
        if rebuilt.vocab != f.vocab {
            return Err(TokenizeError::Malformed(
                "merge list does not reproduce the stored vocabulary".into(),
            ));
        }
        Ok(rebuilt)
    }
}

impl From<BpeModel> for BpeFile {
    fn from(m: BpeModel) -> Self {
        BpeFile {
            merges: m.merges,
            vocab: m.vocab,
        }
    }
}

impl BpeModel {
    /// Rebuilds the vocabulary by replaying merges over `{A,C,G,T}`.
    pub fn from_merges(merges: Vec<(String, String)>) -> Result<Self, TokenizeError> {
        let mut tokens: Vec<String> = BASE_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let mut compiled = Vec::with_capacity(merges.len());
        for (l, r) in &merges {
            let (Some(&li), Some(&ri)) = (index.get(l), index.get(r)) else {
                return Err(TokenizeError::Malformed(format!("merge ({l},{r}) uses an unknown token")));
            };
            let merged = format!("{l}{r}");
            let id = *index.entry(merged.clone()).or_insert_with(|| {
                tokens.push(merged);
                (tokens.len() - 1) as u32
            });
            compiled.push((li, ri, id));
        }
        Ok(Self {
            merges,
            vocab: Vocabulary::bpe(tokens)?,
            compiled,
        })
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn encode(&self, seq: &NucleotideSequence) -> Result<Vec<u32>, TokenizeError> {
        let mut symbols = base_symbols(seq.as_bytes())?;
        for &(l, r, m) in &self.compiled {
            apply_merge(&mut symbols, l, r, m);
        }
        Ok(symbols)
    }

    pub fn decode(&self, ids: &[u32]) -> Result<NucleotideSequence, TokenizeError> {
        let mut out = Vec::new();
        for &id in ids {
            if self.vocab.is_special(id) {
                return Err(TokenizeError::SpecialTokenInStream(id));
            }
            let tok = self.vocab.token(id).ok_or(TokenizeError::UnknownTokenId(id))?;
            out.extend_from_slice(tok.as_bytes());
        }
        Ok(NucleotideSequence::from_valid(out))
    }
}

fn base_symbols(bases: &[u8]) -> Result<Vec<u32>, TokenizeError> {
    bases
        .iter()
        .enumerate()
        .map(|(position, &b)| {
            base_rank(b)
                .map(|r| r as u32)
                .ok_or(TokenizeError::ContainsAmbiguousBase { position })
        })
        .collect()
}

/// Left-to-right, non-overlapping replacement of `(l, r)` by `m`.
fn apply_merge(symbols: &mut Vec<u32>, l: u32, r: u32, m: u32) -> bool {
    if symbols.len() < 2 {
        return false;
    }
    let mut write = 0;
    let mut read = 0;
    let mut changed = false;
    while read < symbols.len() {
        if read + 1 < symbols.len() && symbols[read] == l && symbols[read + 1] == r {
            symbols[write] = m;
            read += 2;
            changed = true;
        } else {
            symbols[write] = symbols[read];
            read += 1;
        }
        write += 1;
    }
    symbols.truncate(write);
    changed
}

#[derive(Debug, Clone)]
pub struct BpeTrainer {
    /// Final vocabulary size including the special slots.
    pub target_vocab: usize,
    /// Corpora larger than this are subsampled (whole sequences, seeded).
    pub max_training_nt: usize,
    pub seed: u64,
}

impl BpeTrainer {
    pub fn new(target_vocab: usize, seed: u64) -> Self {
        Self {
            target_vocab,
            max_training_nt: 50_000_000,
            seed,
        }
    }

    pub fn train(&self, corpus: &[NucleotideSequence]) -> Result<BpeModel, TokenizeError> {
        let minimum = BASE_TOKENS.len() + SPECIAL_SLOTS;
        if self.target_vocab < minimum {
            return Err(TokenizeError::TargetTooSmall {
                target: self.target_vocab,
                minimum,
            });
        }
        if corpus.iter().all(|s| s.is_empty()) {
            return Err(TokenizeError::EmptyCorpus);
        }
        let selected = self.select(corpus);

        // identical sequences collapse into one weighted word
        let mut word_ids: HashMap<&[u8], usize> = HashMap::new();
        let mut words: Vec<Vec<u32>> = Vec::new();
        let mut weights: Vec<i64> = Vec::new();
        for seq in selected {
            let symbols = base_symbols(seq.as_bytes())?;
            match word_ids.get(seq.as_bytes()) {
                Some(&w) => weights[w] += 1,
                None => {
                    word_ids.insert(seq.as_bytes(), words.len());
                    words.push(symbols);
                    weights.push(1);
                }
            }
        }

        let mut pair_counts: HashMap<(u32, u32), i64> = HashMap::new();
        let mut occurs_in: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
        for (w, symbols) in words.iter().enumerate() {
            for p in symbols.windows(2) {
                *pair_counts.entry((p[0], p[1])).or_default() += weights[w];
                occurs_in.entry((p[0], p[1])).or_default().insert(w);
            }
        }

        let mut tokens: Vec<String> = BASE_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let mut merges: Vec<(String, String)> = Vec::new();
        let target_sequence_tokens = self.target_vocab - SPECIAL_SLOTS;

        while tokens.len() < target_sequence_tokens {
            let best = pair_counts
                .iter()
                .filter(|(_, &c)| c >= 2)
                .map(|(&(l, r), &c)| (c, l, r))
                .min_by(|a, b| {
                    b.0.cmp(&a.0).then_with(|| {
                        let ka = (format!("{}{}", tokens[a.1 as usize], tokens[a.2 as usize]), &tokens[a.1 as usize]);
                        let kb = (format!("{}{}", tokens[b.1 as usize], tokens[b.2 as usize]), &tokens[b.1 as usize]);
                        ka.cmp(&kb)
                    })
                });
            let Some((_, l, r)) = best else { break };

            let merged = format!("{}{}", tokens[l as usize], tokens[r as usize]);
            let m = *index.entry(merged.clone()).or_insert_with(|| {
                tokens.push(merged);
                (tokens.len() - 1) as u32
            });
            merges.push((tokens[l as usize].clone(), tokens[r as usize].clone()));

            let affected: Vec<usize> = occurs_in.remove(&(l, r)).into_iter().flatten().collect();
            for w in affected {
                let weight = weights[w];
                for p in words[w].windows(2) {
                    let e = pair_counts.get_mut(&(p[0], p[1])).expect("counted");
                    *e -= weight;
                }
                apply_merge(&mut words[w], l, r, m);
                for p in words[w].windows(2) {
                    *pair_counts.entry((p[0], p[1])).or_default() += weight;
                    occurs_in.entry((p[0], p[1])).or_default().insert(w);
                }
            }
            pair_counts.retain(|_, c| *c > 0);
        }

        BpeModel::from_merges(merges)
    }

    fn select<'a>(&self, corpus: &'a [NucleotideSequence]) -> Vec<&'a NucleotideSequence> {
        let total: usize = corpus.iter().map(NucleotideSequence::len).sum();
        if total <= self.max_training_nt {
            return corpus.iter().collect();
        }
        let mut order: Vec<&NucleotideSequence> = corpus.iter().collect();
        order.shuffle(&mut seeded(self.seed));
        let mut budget = 0;
        order
            .into_iter()
            .take_while(|s| {
                budget += s.len();
                budget <= self.max_training_nt
            })
            .collect()
    }
}

pub fn bpe_train(corpus: &[NucleotideSequence], target_vocab: usize, seed: u64) -> Result<BpeModel, TokenizeError> {
    BpeTrainer::new(target_vocab, seed).train(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seqs(xs: &[&str]) -> Vec<NucleotideSequence> {
        xs.iter().map(|s| NucleotideSequence::validate(s).unwrap()).collect()
    }

    #[test]
    fn first_merge_by_frequency() {
        // pairs in ACAC: AC x2, CA x1 per sequence -> AC wins
        let m = bpe_train(&seqs(&["ACAC", "ACAC"]), 5 + SPECIAL_SLOTS, 0).unwrap();
        assert_eq!(m.merges()[0], ("A".to_string(), "C".to_string()));
        assert_eq!(m.vocab().len(), 5 + SPECIAL_SLOTS);
    }

    #[test]
    fn only_pair_is_merged() {
        let m = bpe_train(&seqs(&["AAAA"]), 5 + SPECIAL_SLOTS, 0).unwrap();
        assert_eq!(m.merges(), &[("A".to_string(), "A".to_string())]);
    }

    #[test]
    fn tie_breaks_lexicographically() {
        // AC and GT both occur twice; "AC" < "GT"
        let m = bpe_train(&seqs(&["ACGT", "ACGT"]), 5 + SPECIAL_SLOTS, 0).unwrap();
        assert_eq!(m.merges()[0], ("A".to_string(), "C".to_string()));
    }

    #[test]
    fn stops_when_no_pair_repeats() {
        let m = bpe_train(&seqs(&["ACGT"]), 100, 0).unwrap();
        assert!(m.merges().is_empty());
        assert_eq!(m.vocab().len(), 4 + SPECIAL_SLOTS);
    }

    #[test]
    fn errors() {
        assert!(matches!(bpe_train(&seqs(&["ACGT"]), 4, 0), Err(TokenizeError::TargetTooSmall { .. })));
        assert!(matches!(bpe_train(&[], 40, 0), Err(TokenizeError::EmptyCorpus)));
        assert!(matches!(
            bpe_train(&seqs(&["ACNT"]), 40, 0),
            Err(TokenizeError::ContainsAmbiguousBase { .. })
        ));
    }

    #[test]
    fn single_merge_encoding() {
        let m = BpeModel::from_merges(vec![("A".into(), "C".into())]).unwrap();
        let ac = m.vocab().id("AC").unwrap();
        assert_eq!(m.encode(&seqs(&["ACAC"])[0]).unwrap(), vec![ac, ac]);
        assert_eq!(m.encode(&seqs(&["G"])[0]).unwrap(), vec![m.vocab().id("G").unwrap()]);
    }

    #[test]
    fn json_roundtrip_validates_merges() {
        let m = bpe_train(&seqs(&["ACACGTGTACAC", "GGGTTTACAC"]), 45, 1).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: BpeModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);

        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["merges"].as_array_mut().unwrap().pop();
        assert!(serde_json::from_value::<BpeModel>(v).is_err());
    }

    proptest! {
        #[test]
        fn training_is_deterministic(corpus in proptest::collection::vec("[ACGT]{1,60}", 1..8), target in 36usize..60) {
            let c = seqs(&corpus.iter().map(String::as_str).collect::<Vec<_>>());
            prop_assert_eq!(bpe_train(&c, target, 3).unwrap(), bpe_train(&c, target, 3).unwrap());
        }

        #[test]
        fn roundtrip_exact(corpus in proptest::collection::vec("[ACGT]{1,80}", 1..6), s in "[ACGT]{0,200}") {
            let c = seqs(&corpus.iter().map(String::as_str).collect::<Vec<_>>());
            let m = bpe_train(&c, 60, 0).unwrap();
            let ids = m.encode(&seqs(&[&s])[0]).unwrap();
            prop_assert!(ids.iter().all(|&i| !m.vocab().is_special(i)));
            prop_assert_eq!(m.decode(&ids).unwrap().to_string(), s);
        }
    }
}
