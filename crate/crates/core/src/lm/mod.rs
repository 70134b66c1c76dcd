//! The causal language-model contract and its implementations: a uniform
//! baseline, the interpolated Markov reference model and a JSON-lines bridge
//! to external models.

mod bridge;
mod markov;

pub use bridge::{BridgeLm, DEFAULT_TIMEOUT};
pub use markov::{MarkovConfig, MarkovLm};

use thiserror::Error;

use crate::tokenize::{TokenizeError, Vocabulary};

/// Tolerance on the total mass of a distribution.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("unknown token id {0}")]
    UnknownTokenId(u32),
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("bad smoothing parameters: {0}")]
    BadSmoothing(String),
    #[error("invalid token distribution: {0}")]
    InvalidDistribution(String),
    #[error("sequence must contain at least one token")]
    EmptySequence,
    #[error("context of {len} tokens exceeds the model budget of {max}")]
    ContextOverflow { len: usize, max: usize },
    #[error("model does not support {0}")]
    Unsupported(&'static str),
    #[error("bridge peer unavailable: {0}")]
    PeerUnavailable(String),
    #[error("bridge protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("bridge peer timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("model file: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
}

/// Probability vector over a vocabulary: non-negative, summing to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, LmError> {
        if let Some(i) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(LmError::InvalidDistribution(format!("entry {i} is {}", probs[i])));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(LmError::InvalidDistribution(format!("mass sums to {total}")));
        }
        Ok(Self { probs })
    }

    /// Rescales non-negative weights to unit mass.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self, LmError> {
        if let Some(i) = weights.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(LmError::InvalidDistribution(format!("entry {i} is {}", weights[i])));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(LmError::InvalidDistribution("zero total mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { probs: weights })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, id: u32) -> Self {
        let mut probs = vec![0.0; n];
        probs[id as usize] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, id: u32) -> f64 {
        self.probs.get(id as usize).copied().unwrap_or(0.0)
    }
}

/// A causal (left-to-right) language model.
///
/// `next_distribution` must be a pure function of the context.
/// Implementations that talk to a non-reentrant peer serialize calls internally.
pub trait CausalLm: Send + Sync {
    fn vocabulary(&self) -> &Vocabulary;

    fn next_distribution(&self, context: &[u32]) -> Result<TokenDistribution, LmError>;

    fn embed(&self, _context: &[u32]) -> Result<Vec<f64>, LmError> {
        Err(LmError::Unsupported("embeddings"))
    }

    /// Maximum context length in tokens, if bounded.
    fn max_context(&self) -> Option<usize> {
        None
    }
}

impl<T: CausalLm + ?Sized> CausalLm for &T {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }
    fn next_distribution(&self, context: &[u32]) -> Result<TokenDistribution, LmError> {
        (**self).next_distribution(context)
    }
    fn embed(&self, context: &[u32]) -> Result<Vec<f64>, LmError> {
        (**self).embed(context)
    }
    fn max_context(&self) -> Option<usize> {
        (**self).max_context()
    }
}

impl<T: CausalLm + ?Sized> CausalLm for Box<T> {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }
    fn next_distribution(&self, context: &[u32]) -> Result<TokenDistribution, LmError> {
        (**self).next_distribution(context)
    }
    fn embed(&self, context: &[u32]) -> Result<Vec<f64>, LmError> {
        (**self).embed(context)
    }
    fn max_context(&self) -> Option<usize> {
        (**self).max_context()
    }
}

pub(crate) fn check_ids(vocab: &Vocabulary, ids: &[u32]) -> Result<(), LmError> {
    match ids.iter().find(|&&id| id as usize >= vocab.len()) {
        Some(&id) => Err(LmError::UnknownTokenId(id)),
        None => Ok(()),
    }
}

/// Uniform next-token model, over the whole vocabulary or over sequence
/// tokens only (specials get zero mass).
#[derive(Debug, Clone)]
pub struct UniformLm {
    vocab: Vocabulary,
    sequence_tokens_only: bool,
}

impl UniformLm {
    pub fn new(vocab: Vocabulary) -> Self {
        Self {
            vocab,
            sequence_tokens_only: false,
        }
    }

    pub fn over_sequence_tokens(vocab: Vocabulary) -> Self {
        Self {
            vocab,
            sequence_tokens_only: true,
        }
    }
}

impl CausalLm for UniformLm {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, context: &[u32]) -> Result<TokenDistribution, LmError> {
        check_ids(&self.vocab, context)?;
        if !self.sequence_tokens_only {
            return Ok(TokenDistribution::uniform(self.vocab.len()));
        }
        let weights = self
            .vocab
            .special_mask()
            .iter()
            .map(|&s| if s { 0.0 } else { 1.0 })
            .collect();
        TokenDistribution::normalized(weights)
    }
}

/// Natural-log probability of `ids` under `lm`, each token conditioned on
/// everything before it (the first on the empty context).
pub fn sequence_logprob(lm: &dyn CausalLm, ids: &[u32]) -> Result<f64, LmError> {
    if ids.is_empty() {
        return Err(LmError::EmptySequence);
    }
    check_ids(lm.vocabulary(), ids)?;
    let mut total = 0.0;
    for i in 0..ids.len() {
        total += lm.next_distribution(&ids[..i])?.prob(ids[i]).ln();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_invariants() {
        assert!(TokenDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(TokenDistribution::new(vec![0.5, 0.3]).is_err());
        assert!(TokenDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(TokenDistribution::new(vec![f64::NAN, 1.0]).is_err());
        let d = TokenDistribution::normalized(vec![1.0, 3.0]).unwrap();
        assert_eq!(d.probs(), &[0.25, 0.75]);
        assert!(TokenDistribution::normalized(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn uniform_single_token_logprob() {
        let v = Vocabulary::kmer(2).unwrap();
        let n = v.len() as f64;
        let lm = UniformLm::new(v);
        assert!((sequence_logprob(&lm, &[3]).unwrap() + n.ln()).abs() < 1e-12);
        assert_eq!(sequence_logprob(&lm, &[]), Err(LmError::EmptySequence));
        assert_eq!(sequence_logprob(&lm, &[9999]), Err(LmError::UnknownTokenId(9999)));
    }

    #[test]
    fn uniform_over_sequence_tokens_skips_specials() {
        let v = Vocabulary::kmer(1).unwrap();
        let lm = UniformLm::over_sequence_tokens(v);
        let d = lm.next_distribution(&[]).unwrap();
        assert_eq!(&d.probs()[..4], &[0.25; 4]);
        assert!(d.probs()[4..].iter().all(|&p| p == 0.0));
    }
}
