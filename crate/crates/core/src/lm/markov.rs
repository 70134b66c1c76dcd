use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_ids, CausalLm, LmError, TokenDistribution, NORMALIZATION_TOL};
use crate::tokenize::{Tokenizer, Vocabulary};

const MAGIC: &[u8; 8] = b"GENOLMMK";
const FORMAT_VERSION: u32 = 1;

/// Training parameters. `alphas` holds one value per order `0..=order`, or a
/// single value used for all orders; `lambdas` defaults to equal weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovConfig {
    pub order: usize,
    pub alphas: Vec<f64>,
    pub lambdas: Option<Vec<f64>>,
}

impl MarkovConfig {
    pub fn new(order: usize, alpha: f64) -> Self {
        Self {
            order,
            alphas: vec![alpha],
            lambdas: None,
        }
    }

    pub fn with_lambdas(mut self, lambdas: Vec<f64>) -> Self {
        self.lambdas = Some(lambdas);
        self
    }

    fn resolve(&self) -> Result<(Vec<f64>, Vec<f64>), LmError> {
        let n = self.order + 1;
        let alphas = match self.alphas.len() {
            1 => vec![self.alphas[0]; n],
            l if l == n => self.alphas.clone(),
            l => return Err(LmError::BadSmoothing(format!("{l} alpha values for {n} orders"))),
        };
        if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(LmError::BadSmoothing(format!("alpha must be positive, got {a}")));
        }
        let lambdas = self.lambdas.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);
        if lambdas.len() != n {
            return Err(LmError::BadSmoothing(format!("{} lambda values for {n} orders", lambdas.len())));
        }
        if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(LmError::BadSmoothing(format!("lambda must be non-negative, got {l}")));
        }
        let total: f64 = lambdas.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(LmError::BadSmoothing(format!("lambdas sum to {total}")));
        }
        Ok((alphas, lambdas))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct History {
    total: u64,
    /// Sorted by token id.
    next: Vec<(u32, u64)>,
}

type Table = HashMap<Box<[u32]>, History>;
type RawTable = HashMap<Box<[u32]>, HashMap<u32, u64>>;

/// Interpolated add-α Markov model over token ids.
///
/// Order `m` conditions on the last `m` tokens. When the context is shorter
/// than `m`, or the history was never observed in training, that order's
/// weight passes down to the next lower order.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovLm {
    tokenizer: Tokenizer,
    order: usize,
    alphas: Vec<f64>,
    lambdas: Vec<f64>,
    /// `tables[m]` holds order-`m` counts.
    tables: Vec<Table>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    vocab_fingerprint: String,
    vocab_size: usize,
    order: usize,
    alphas: Vec<f64>,
    lambdas: Vec<f64>,
    tokenizer: Tokenizer,
}

impl MarkovLm {
    /// A model with no counts; every distribution is uniform.
    pub fn untrained(tokenizer: Tokenizer, config: &MarkovConfig) -> Result<Self, LmError> {
        let (alphas, lambdas) = config.resolve()?;
        Ok(Self {
            tokenizer,
            order: config.order,
            alphas,
            lambdas,
            tables: vec![Table::new(); config.order + 1],
        })
    }

    pub fn train(tokenizer: Tokenizer, corpus: &[Vec<u32>], config: &MarkovConfig) -> Result<Self, LmError> {
        let mut model = Self::untrained(tokenizer, config)?;
        if corpus.iter().all(|s| s.is_empty()) {
            return Err(LmError::EmptyCorpus);
        }
        for s in corpus {
            check_ids(model.vocabulary(), s)?;
        }
        let n = model.order + 1;
        let raw: Vec<RawTable> = corpus
            .par_iter()
            .fold(
                || vec![RawTable::new(); n],
                |mut acc, s| {
                    for (m, table) in acc.iter_mut().enumerate() {
                        for i in m..s.len() {
                            *table
                                .entry(s[i - m..i].into())
                                .or_default()
                                .entry(s[i])
                                .or_default() += 1;
                        }
                    }
                    acc
                },
            )
            .reduce(
                || vec![RawTable::new(); n],
                |mut a, b| {
                    for (ta, tb) in a.iter_mut().zip(b) {
                        for (h, counts) in tb {
                            let e = ta.entry(h).or_default();
                            for (t, c) in counts {
                                *e.entry(t).or_default() += c;
                            }
                        }
                    }
                    a
                },
            );
        model.tables = raw
            .into_iter()
            .map(|t| {
                t.into_iter()
                    .map(|(h, counts)| {
                        let mut next: Vec<(u32, u64)> = counts.into_iter().collect();
                        next.sort_unstable();
                        let total = next.iter().map(|&(_, c)| c).sum();
                        (h, History { total, next })
                    })
                    .collect()
            })
            .collect();
        Ok(model)
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Training count of `token` after `history` (order = history length).
    pub fn count(&self, history: &[u32], token: u32) -> u64 {
        self.tables
            .get(history.len())
            .and_then(|t| t.get(history))
            .and_then(|h| h.next.binary_search_by_key(&token, |&(id, _)| id).ok().map(|i| h.next[i].1))
            .unwrap_or(0)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), LmError> {
        let header = Header {
            format_version: FORMAT_VERSION,
            vocab_fingerprint: self.vocabulary().fingerprint(),
            vocab_size: self.vocabulary().len(),
            order: self.order,
            alphas: self.alphas.clone(),
            lambdas: self.lambdas.clone(),
            tokenizer: self.tokenizer.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| LmError::BadModelFile(e.to_string()))?;
        let io = |e: io::Error| LmError::BadModelFile(e.to_string());
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&json).map_err(io)?;
        for table in &self.tables {
            let mut keys: Vec<&Box<[u32]>> = table.keys().collect();
            keys.sort_unstable();
            w.write_all(&(keys.len() as u64).to_le_bytes()).map_err(io)?;
            for key in keys {
                for &id in key.iter() {
                    w.write_all(&id.to_le_bytes()).map_err(io)?;
                }
                let h = &table[key];
                w.write_all(&(h.next.len() as u32).to_le_bytes()).map_err(io)?;
                for &(id, c) in &h.next {
                    w.write_all(&id.to_le_bytes()).map_err(io)?;
                    w.write_all(&c.to_le_bytes()).map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, LmError> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(LmError::BadModelFile("not a Markov model file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(LmError::BadModelFile(format!("unsupported format version {version}")));
        }
        let len = read_u64(&mut r)? as usize;
        let mut json = vec![0u8; len];
        read_exact(&mut r, &mut json)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| LmError::BadModelFile(e.to_string()))?;
        let vocab = header.tokenizer.vocab();
        if vocab.fingerprint() != header.vocab_fingerprint || vocab.len() != header.vocab_size {
            return Err(LmError::BadModelFile("vocabulary fingerprint mismatch".into()));
        }
        let config = MarkovConfig {
            order: header.order,
            alphas: header.alphas,
            lambdas: Some(header.lambdas),
        };
        let mut model = Self::untrained(header.tokenizer, &config)?;
        let v = model.vocabulary().len() as u32;
        let bad_id = |id: u32| LmError::BadModelFile(format!("token id {id} outside vocabulary"));
        for m in 0..=model.order {
            let n_hist = read_u64(&mut r)?;
            let mut table = Table::new();
            for _ in 0..n_hist {
                let mut key = Vec::with_capacity(m);
                for _ in 0..m {
                    let id = read_u32(&mut r)?;
                    if id >= v {
                        return Err(bad_id(id));
                    }
                    key.push(id);
                }
                let n_next = read_u32(&mut r)?;
                let mut next = Vec::with_capacity(n_next as usize);
                for _ in 0..n_next {
                    let id = read_u32(&mut r)?;
                    if id >= v {
                        return Err(bad_id(id));
                    }
                    next.push((id, read_u64(&mut r)?));
                }
                next.sort_unstable();
                let total = next.iter().map(|&(_, c)| c).sum();
                table.insert(key.into(), History { total, next });
            }
            model.tables[m] = table;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LmError> {
        let f = File::create(path).map_err(|e| LmError::BadModelFile(e.to_string()))?;
        self.write_to(BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LmError> {
        let f = File::open(path).map_err(|e| LmError::BadModelFile(e.to_string()))?;
        Self::read_from(BufReader::new(f))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), LmError> {
    r.read_exact(buf)
        .map_err(|e| LmError::BadModelFile(format!("truncated model file: {e}")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, LmError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, LmError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

impl CausalLm for MarkovLm {
    fn vocabulary(&self) -> &Vocabulary {
        self.tokenizer.vocab()
    }

    fn next_distribution(&self, context: &[u32]) -> Result<TokenDistribution, LmError> {
        let vocab = self.vocabulary();
        check_ids(vocab, context)?;
        let v = vocab.len();
        let mut probs = vec![0.0; v];
        let mut carry = 0.0;
        for m in (0..=self.order).rev() {
            let weight = self.lambdas[m] + carry;
            let seen = (context.len() >= m)
                .then(|| self.tables[m].get(&context[context.len() - m..]))
                .flatten();
            let alpha = self.alphas[m];
            match seen {
                Some(h) => {
                    let denom = h.total as f64 + alpha * v as f64;
                    let base = weight * alpha / denom;
                    probs.iter_mut().for_each(|p| *p += base);
                    for &(id, c) in &h.next {
                        probs[id as usize] += weight * c as f64 / denom;
                    }
                    carry = 0.0;
                }
                // order 0 with no counts: add-α alone is uniform
                None if m == 0 => {
                    let base = weight / v as f64;
                    probs.iter_mut().for_each(|p| *p += base);
                }
                None => carry = weight,
            }
        }
        TokenDistribution::new(probs)
    }
}
