//! Next-token scoring: the scorer interface, tokenization, and an
//! interpolated n-gram language model.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type TokenId = u32;

pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
/// Closes the premise in generator training text and prompts.
pub const SEP: &str = "<sep>";
const BOS_TEXT: &str = "<s>";
const BOS: TokenId = TokenId::MAX;
const MARKERS: [&str; 4] = ["<re>", "<er>", "<el>", "<le>"];

#[derive(Debug, Error)]
pub enum LmError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("order must be at least 1")]
    InvalidOrder,
    #[error("discount must lie in (0, 1), got {0}")]
    InvalidDiscount(f64),
    #[error("token id {0} outside the vocabulary")]
    UnknownToken(TokenId),
    #[error("bridge: {0}")]
    Bridge(String),
    #[error("model file: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercased whitespace/punctuation tokenization. Marker tags stay whole.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    let mut word = String::new();
    let mut rest = lower.as_str();
    while let Some(c) = rest.chars().next() {
        if let Some(tag) = MARKERS.iter().find(|t| rest.starts_with(**t)) {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(tag.to_string());
            rest = &rest[tag.len()..];
            continue;
        }
        if c.is_alphanumeric() || c == '_' {
            word.push(c);
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
        rest = &rest[c.len_utf8()..];
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(|t| t.as_ref())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps tokens to ids, sending unknown tokens to `unk` when given and dropping them otherwise.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], unk: Option<TokenId>) -> Vec<TokenId> {
        tokens
            .iter()
            .filter_map(|t| self.id(t.as_ref()).or(unk))
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .map(|i| self.token(*i).unwrap_or(UNK).to_string())
            .collect()
    }
}

/// Next-token log-probabilities over a fixed vocabulary.
pub trait SequenceScorer: Send + Sync {
    fn vocab(&self) -> &Vocab;

    fn eos(&self) -> TokenId;

    /// Token that decoding must never emit, if any.
    fn unk(&self) -> Option<TokenId> {
        None
    }

    /// One log-probability per vocabulary entry; `exp` of the vector sums to one.
    fn logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, LmError>;
}

impl<T: SequenceScorer + ?Sized> SequenceScorer for &T {
    fn vocab(&self) -> &Vocab {
        (**self).vocab()
    }
    fn eos(&self) -> TokenId {
        (**self).eos()
    }
    fn unk(&self) -> Option<TokenId> {
        (**self).unk()
    }
    fn logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, LmError> {
        (**self).logprobs(prefix)
    }
}

/// Log-probability of `tokens` followed by end-of-sequence.
pub fn score_sequence(m: &dyn SequenceScorer, tokens: &[TokenId]) -> Result<f64, LmError> {
    let mut total = 0.0;
    for t in 0..=tokens.len() {
        let lp = m.logprobs(&tokens[..t])?;
        let next = if t == tokens.len() { m.eos() } else { tokens[t] };
        total += *lp.get(next as usize).ok_or(LmError::UnknownToken(next))?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<TokenId, u64>,
}

/// Interpolated absolute-discount n-gram model.
///
/// Each order mixes its discounted counts with the next lower order; the
/// unigram level mixes with a uniform distribution, so every vocabulary
/// entry keeps positive probability.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramLM {
    order: usize,
    discount: f64,
    vocab: Vocab,
    /// `counts[n - 1]` holds contexts of length `n - 1`.
    counts: Vec<BTreeMap<Vec<TokenId>, ContextCounts>>,
}

pub const DEFAULT_DISCOUNT: f64 = 0.4;

impl NGramLM {
    pub fn train<I, S>(sequences: I, order: usize, discount: f64) -> Result<Self, LmError>
    where
        I: IntoIterator<Item = Vec<S>>,
        S: AsRef<str>,
    {
        if order == 0 {
            return Err(LmError::InvalidOrder);
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(LmError::InvalidDiscount(discount));
        }
        let sequences: Vec<Vec<String>> = sequences
            .into_iter()
            .map(|s| s.iter().map(|t| t.as_ref().to_string()).collect())
            .collect();
        if sequences.iter().all(|s| s.is_empty()) {
            return Err(LmError::EmptyCorpus);
        }
        let mut observed: Vec<String> = sequences
            .iter()
            .flatten()
            .filter(|t| t.as_str() != EOS && t.as_str() != UNK)
            .cloned()
            .collect();
        observed.sort();
        observed.dedup();
        let mut tokens = vec![EOS.to_string(), UNK.to_string()];
        tokens.extend(observed);
        let vocab = Vocab::new(tokens);
        let mut lm = NGramLM {
            order,
            discount,
            counts: vec![BTreeMap::new(); order],
            vocab,
        };
        for seq in &sequences {
            let ids = lm.vocab.encode(seq, Some(1));
            lm.add_sequence(&ids);
        }
        Ok(lm)
    }

    fn add_sequence(&mut self, ids: &[TokenId]) {
        let mut history: Vec<TokenId> = vec![BOS; self.order - 1];
        for target in ids.iter().copied().chain(std::iter::once(self.eos())) {
            for n in 1..=self.order {
                let ctx = history[history.len() - (n - 1)..].to_vec();
                let cc = self.counts[n - 1].entry(ctx).or_default();
                cc.total += 1;
                *cc.next.entry(target).or_default() += 1;
            }
            history.push(target);
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    fn probabilities(&self, prefix: &[TokenId]) -> Vec<f64> {
        let v = self.vocab.len();
        let mut p = vec![1.0 / v as f64; v];
        let mut history: Vec<TokenId> = vec![BOS; self.order - 1];
        history.extend(prefix.iter().map(|&t| if (t as usize) < v { t } else { 1 }));
        for n in 1..=self.order {
            let ctx = &history[history.len() - (n - 1)..];
            let Some(cc) = self.counts[n - 1].get(ctx) else {
                continue;
            };
            let total = cc.total as f64;
            let backoff = self.discount * cc.next.len() as f64 / total;
            let mut next = p.iter().map(|q| backoff * q).collect::<Vec<_>>();
            for (&tok, &c) in &cc.next {
                next[tok as usize] += (c as f64 - self.discount).max(0.0) / total;
            }
            p = next;
        }
        p
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LmError> {
        std::fs::write(path, serde_json::to_string(&self.to_file())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LmError> {
        let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_file(file)
    }

    fn to_file(&self) -> ModelFile {
        let name = |t: TokenId| {
            if t == BOS {
                BOS_TEXT.to_string()
            } else {
                self.vocab.token(t).unwrap_or(UNK).to_string()
            }
        };
        let mut ngrams = Vec::new();
        for (ctx, cc) in &self.counts[self.order - 1] {
            for (&tok, &count) in &cc.next {
                let mut gram: Vec<String> = ctx.iter().map(|&t| name(t)).collect();
                gram.push(name(tok));
                ngrams.push((gram, count));
            }
        }
        ModelFile {
            order: self.order,
            discount: self.discount,
            vocab: self.vocab.tokens().to_vec(),
            ngrams,
        }
    }

    fn from_file(file: ModelFile) -> Result<Self, LmError> {
        if file.order == 0 {
            return Err(LmError::InvalidOrder);
        }
        let vocab = Vocab::new(file.vocab);
        let mut lm = NGramLM {
            order: file.order,
            discount: file.discount,
            counts: vec![BTreeMap::new(); file.order],
            vocab,
        };
        // Highest-order grams determine every lower-order count.
        for (gram, count) in file.ngrams {
            let ids: Vec<TokenId> = gram
                .iter()
                .map(|t| {
                    if t == BOS_TEXT {
                        BOS
                    } else {
                        lm.vocab.id(t).unwrap_or(1)
                    }
                })
                .collect();
            let (&target, ctx) = ids.split_last().ok_or(LmError::EmptyCorpus)?;
            for n in 1..=lm.order {
                let sub = ctx[ctx.len() - (n - 1)..].to_vec();
                let cc = lm.counts[n - 1].entry(sub).or_default();
                cc.total += count;
                *cc.next.entry(target).or_default() += count;
            }
        }
        Ok(lm)
    }
}

/// On-disk form: highest-order n-gram counts, with `<s>` padding.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    order: usize,
    discount: f64,
    vocab: Vec<String>,
    ngrams: Vec<(Vec<String>, u64)>,
}

impl SequenceScorer for NGramLM {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn eos(&self) -> TokenId {
        0
    }

    fn unk(&self) -> Option<TokenId> {
        Some(1)
    }

    fn logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, LmError> {
        Ok(self.probabilities(prefix).into_iter().map(f64::ln).collect())
    }
}

/// A scorer backed by a fixed function of the prefix; useful for toy models.
pub struct FnScorer<F> {
    vocab: Vocab,
    eos: TokenId,
    f: F,
}

impl<F> FnScorer<F>
where
    F: Fn(&[TokenId]) -> Vec<f64> + Send + Sync,
{
    /// `f` returns unnormalized non-negative weights; they are normalized here.
    pub fn new(vocab: Vocab, eos: TokenId, f: F) -> Self {
        FnScorer { vocab, eos, f }
    }
}

impl<F> SequenceScorer for FnScorer<F>
where
    F: Fn(&[TokenId]) -> Vec<f64> + Send + Sync,
{
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn eos(&self) -> TokenId {
        self.eos
    }

    fn logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, LmError> {
        let w = (self.f)(prefix);
        let z: f64 = w.iter().sum();
        Ok(w.into_iter().map(|x| (x / z).ln()).collect())
    }
}
