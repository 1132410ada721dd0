//! Beam search under CNF lexical constraints.
//!
//! A constraint set is a conjunction of clauses; each clause is a disjunction
//! of literals. A `MustAppear` literal is satisfied when its phrase occurs as
//! a contiguous token run, a `MustNotAppear` literal when it does not. Negative
//! literals are enforced as hard constraints during search: an extension that
//! completes a forbidden phrase is dropped on the spot.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{MarkedConclusion, Role, REGULATED_CLOSE, REGULATED_OPEN, REGULATOR_CLOSE, REGULATOR_OPEN};
use crate::lm::{self, LmError, SequenceScorer, TokenId};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("no hypothesis survived decoding")]
    NoHypothesis,
    #[error("invalid decoder config: {0}")]
    InvalidConfig(String),
    #[error("replacement {0:?} equals a main entity")]
    DegenerateReplacement(String),
    #[error("empty phrase in constraint")]
    EmptyPhrase,
    #[error(transparent)]
    Scorer(#[from] LmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    MustAppear,
    MustNotAppear,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "LiteralRecord", into = "LiteralRecord")]
pub struct Literal {
    phrase: Vec<String>,
    polarity: Polarity,
}

#[derive(Serialize, Deserialize)]
struct LiteralRecord {
    phrase: String,
    polarity: Polarity,
}

impl TryFrom<LiteralRecord> for Literal {
    type Error = DecodeError;

    fn try_from(r: LiteralRecord) -> Result<Self, Self::Error> {
        Literal::new(&r.phrase, r.polarity)
    }
}

impl From<Literal> for LiteralRecord {
    fn from(l: Literal) -> Self {
        LiteralRecord {
            phrase: l.phrase.join(" "),
            polarity: l.polarity,
        }
    }
}

impl Literal {
    /// The phrase is tokenized with [`lm::tokenize`].
    pub fn new(phrase: &str, polarity: Polarity) -> Result<Self, DecodeError> {
        let phrase = lm::tokenize(phrase);
        if phrase.is_empty() {
            return Err(DecodeError::EmptyPhrase);
        }
        Ok(Literal { phrase, polarity })
    }

    pub fn must_appear(phrase: &str) -> Result<Self, DecodeError> {
        Self::new(phrase, Polarity::MustAppear)
    }

    pub fn must_not_appear(phrase: &str) -> Result<Self, DecodeError> {
        Self::new(phrase, Polarity::MustNotAppear)
    }

    pub fn phrase(&self) -> &[String] {
        &self.phrase
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }
}

fn contains_run<T: PartialEq>(haystack: &[T], needle: &[T]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Clause(pub Vec<Literal>);

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConstraintSet(pub Vec<Clause>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Satisfaction {
    pub satisfied_clauses: usize,
    pub total_clauses: usize,
    /// A forbidden phrase occurs somewhere.
    pub violated: bool,
}

impl Satisfaction {
    pub fn fully_satisfied(&self) -> bool {
        !self.violated && self.satisfied_clauses == self.total_clauses
    }
}

impl ConstraintSet {
    pub fn new(clauses: Vec<Clause>) -> Self {
        ConstraintSet(clauses)
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn literals(&self) -> impl Iterator<Item = &Literal> {
        self.0.iter().flat_map(|c| c.0.iter())
    }

    pub fn has_positive(&self) -> bool {
        self.literals().any(|l| l.polarity == Polarity::MustAppear)
    }

    pub fn has_negative(&self) -> bool {
        self.literals().any(|l| l.polarity == Polarity::MustNotAppear)
    }

    /// Evaluates the set on an already-tokenized text.
    pub fn evaluate<S: AsRef<str>>(&self, tokens: &[S]) -> Satisfaction {
        let toks: Vec<&str> = tokens.iter().map(|t| t.as_ref()).collect();
        let present = |l: &Literal| {
            let phrase: Vec<&str> = l.phrase.iter().map(String::as_str).collect();
            contains_run(&toks, &phrase)
        };
        let violated = self
            .literals()
            .any(|l| l.polarity == Polarity::MustNotAppear && present(l));
        let satisfied_clauses = self
            .0
            .iter()
            .filter(|c| {
                c.0.iter().any(|l| match l.polarity {
                    Polarity::MustAppear => present(l),
                    Polarity::MustNotAppear => !present(l),
                })
            })
            .count();
        Satisfaction {
            satisfied_clauses,
            total_clauses: self.0.len(),
            violated,
        }
    }

    pub fn evaluate_text(&self, text: &str) -> Satisfaction {
        self.evaluate(&lm::tokenize(text))
    }
}

fn marked(role: Role, surface: &str) -> String {
    let (open, close) = match role {
        Role::Regulator => (REGULATOR_OPEN, REGULATOR_CLOSE),
        _ => (REGULATED_OPEN, REGULATED_CLOSE),
    };
    format!("{open} {surface} {close}")
}

fn singleton(phrase: String, polarity: Polarity) -> Clause {
    Clause(vec![Literal::new(&phrase, polarity).expect("marker phrases are never empty")])
}

/// Both entities must appear, each wearing the other's role.
pub fn build_sen_constraints(c: &MarkedConclusion) -> ConstraintSet {
    ConstraintSet(vec![
        singleton(marked(Role::Regulator, &c.regulated().surface), Polarity::MustAppear),
        singleton(marked(Role::Regulator.other(), &c.regulator().surface), Polarity::MustAppear),
    ])
}

/// The original roles, with one entity replaced by `replacement`.
pub fn build_sre_constraints(
    c: &MarkedConclusion,
    replacement: &str,
    which: Role,
) -> Result<ConstraintSet, DecodeError> {
    let r = replacement.trim();
    let lower = r.to_lowercase();
    if r.is_empty()
        || lower == c.regulator().surface.to_lowercase()
        || lower == c.regulated().surface.to_lowercase()
    {
        return Err(DecodeError::DegenerateReplacement(replacement.to_string()));
    }
    let (reg, regd) = match which {
        Role::Regulator => (r, c.regulated().surface.as_str()),
        Role::Regulated => (c.regulator().surface.as_str(), r),
        Role::None => return Err(DecodeError::DegenerateReplacement(replacement.to_string())),
    };
    Ok(ConstraintSet(vec![
        singleton(marked(Role::Regulator, reg), Polarity::MustAppear),
        singleton(marked(Role::Regulated, regd), Polarity::MustAppear),
    ]))
}

/// Neither entity may appear in its original role.
pub fn build_ng_constraints(c: &MarkedConclusion) -> ConstraintSet {
    ConstraintSet(vec![
        singleton(marked(Role::Regulator, &c.regulator().surface), Polarity::MustNotAppear),
        singleton(marked(Role::Regulated, &c.regulated().surface), Polarity::MustNotAppear),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub beam_size: usize,
    /// Candidates kept after ranking, per step.
    pub prune_factor: usize,
    /// Candidates more than this many satisfied clauses behind the leader are dropped.
    pub sat_tolerance: usize,
    /// Ranking reward per satisfied clause.
    pub beta: f64,
    pub length_penalty: f64,
    /// No n-gram of this length may occur twice in a hypothesis.
    pub ngram_block: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl DecoderConfig {
    /// The published hyperparameters.
    pub fn paper() -> Self {
        DecoderConfig {
            beam_size: 50,
            prune_factor: 50,
            sat_tolerance: 2,
            beta: 2.0,
            length_penalty: 0.1,
            ngram_block: 10,
            min_len: 15,
            max_len: 256,
        }
    }

    /// Narrow search for desk-scale runs.
    pub fn desk() -> Self {
        DecoderConfig {
            beam_size: 8,
            prune_factor: 8,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        let bad = |m: &str| Err(DecodeError::InvalidConfig(m.to_string()));
        if self.beam_size == 0 || self.prune_factor == 0 || self.ngram_block == 0 || self.max_len == 0 {
            return bad("beam_size, prune_factor, ngram_block and max_len must be positive");
        }
        if !(self.beta >= 0.0) || !(self.length_penalty >= 0.0) {
            return bad("beta and length_penalty must be non-negative");
        }
        if self.min_len > self.max_len {
            return bad("min_len exceeds max_len");
        }
        Ok(())
    }
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub tokens: Vec<TokenId>,
    pub text: String,
    pub model_score: f64,
    pub satisfied_clauses: usize,
    pub fully_satisfied: bool,
}

/// Constraint literals resolved against a vocabulary.
struct Compiled {
    /// Per clause: positive phrases (None when a token is out of vocabulary),
    /// and whether the clause has a negative literal.
    clauses: Vec<(Vec<Option<Vec<TokenId>>>, bool)>,
    forbidden: Vec<Vec<TokenId>>,
}

impl Compiled {
    fn new(cs: &ConstraintSet, scorer: &dyn SequenceScorer) -> Self {
        let vocab = scorer.vocab();
        let ids = |l: &Literal| -> Option<Vec<TokenId>> {
            l.phrase.iter().map(|t| vocab.id(t)).collect()
        };
        let mut forbidden = Vec::new();
        let clauses = cs
            .0
            .iter()
            .map(|c| {
                let mut positives = Vec::new();
                let mut has_negative = false;
                for l in &c.0 {
                    match l.polarity {
                        Polarity::MustAppear => positives.push(ids(l)),
                        Polarity::MustNotAppear => {
                            has_negative = true;
                            // A phrase with an unknown token can never be produced.
                            if let Some(p) = ids(l) {
                                forbidden.push(p);
                            }
                        }
                    }
                }
                (positives, has_negative)
            })
            .collect();
        Compiled { clauses, forbidden }
    }

    fn initial(&self) -> Vec<bool> {
        self.clauses.iter().map(|(_, neg)| *neg).collect()
    }

    /// Updates clause state after `tokens` grew by one; false when a forbidden phrase completed.
    fn advance(&self, tokens: &[TokenId], sat: &mut [bool]) -> bool {
        if self.forbidden.iter().any(|f| tokens.ends_with(f)) {
            return false;
        }
        for (i, (positives, _)) in self.clauses.iter().enumerate() {
            if !sat[i] && positives.iter().flatten().any(|p| tokens.ends_with(p)) {
                sat[i] = true;
            }
        }
        true
    }

    /// Longest matched prefix of a pending positive phrase, per clause, and the summed fractions.
    fn progress(&self, tokens: &[TokenId], sat: &[bool]) -> (Vec<usize>, f64) {
        let mut ks = vec![0; self.clauses.len()];
        let mut total = 0.0;
        for (i, (positives, _)) in self.clauses.iter().enumerate() {
            if sat[i] {
                continue;
            }
            let mut best = (0, 0.0);
            for p in positives.iter().flatten() {
                if let Some(k) = (1..p.len()).rev().find(|k| tokens.ends_with(&p[..*k])) {
                    let frac = k as f64 / p.len() as f64;
                    if frac > best.1 {
                        best = (k, frac);
                    }
                }
            }
            ks[i] = best.0;
            total += best.1;
        }
        (ks, total)
    }
}

#[derive(Debug, Clone)]
struct Hyp {
    tokens: Vec<TokenId>,
    score: f64,
    sat: Vec<bool>,
    partial: Vec<usize>,
    partial_credit: f64,
}

impl Hyp {
    fn sat_count(&self) -> usize {
        self.sat.iter().filter(|s| **s).count()
    }

    fn signature(&self) -> (Vec<bool>, Vec<usize>) {
        (self.sat.clone(), self.partial.clone())
    }
}

fn repeats_last_ngram(tokens: &[TokenId], n: usize) -> bool {
    if tokens.len() <= n {
        return false;
    }
    let tail = &tokens[tokens.len() - n..];
    tokens[..tokens.len() - 1].windows(n).any(|w| w == tail)
}

/// Constrained beam search. Results are sorted fully-satisfied first, then by model score.
pub fn decode(
    scorer: &dyn SequenceScorer,
    constraints: &ConstraintSet,
    cfg: &DecoderConfig,
    prompt: &[TokenId],
) -> Result<Vec<DecodeResult>, DecodeError> {
    cfg.validate()?;
    let compiled = Compiled::new(constraints, scorer);
    let eos = scorer.eos();
    let unk = scorer.unk();
    let vocab_len = scorer.vocab().len();

    let mut beam = vec![Hyp {
        tokens: Vec::new(),
        score: 0.0,
        sat: compiled.initial(),
        partial: vec![0; constraints.0.len()],
        partial_credit: 0.0,
    }];
    let mut finished: Vec<Hyp> = Vec::new();
    let mut context = prompt.to_vec();
    let total = constraints.0.len();
    let mut full_scores: Vec<f64> = Vec::new();

    // Scores only fall as tokens are added, so a live hypothesis below the
    // k-th best fully satisfied finished one can no longer enter the results.
    while !beam.is_empty() {
        if full_scores.len() >= cfg.beam_size {
            full_scores.sort_by(|a, b| b.total_cmp(a));
            let kth = full_scores[cfg.beam_size - 1];
            if beam.iter().all(|h| h.score < kth) {
                break;
            }
        }
        // (rank, parent, token, hyp, advances a constraint)
        let mut candidates: Vec<(f64, usize, TokenId, Hyp, bool)> = Vec::new();
        for (parent, h) in beam.iter().enumerate() {
            context.truncate(prompt.len());
            context.extend_from_slice(&h.tokens);
            let lp = scorer.logprobs(&context)?;
            let len = h.tokens.len();
            for tok in 0..vocab_len as TokenId {
                let step = lp[tok as usize];
                if !step.is_finite() || Some(tok) == unk {
                    continue;
                }
                if tok == eos {
                    if len >= cfg.min_len {
                        if h.sat_count() == total {
                            full_scores.push(h.score + step);
                        }
                        finished.push(Hyp {
                            score: h.score + step,
                            ..h.clone()
                        });
                    }
                    continue;
                }
                if len >= cfg.max_len {
                    continue;
                }
                let mut tokens = h.tokens.clone();
                tokens.push(tok);
                let mut sat = h.sat.clone();
                if !compiled.advance(&tokens, &mut sat) || repeats_last_ngram(&tokens, cfg.ngram_block) {
                    continue;
                }
                let (partial, partial_credit) = compiled.progress(&tokens, &sat);
                let next = Hyp {
                    score: h.score + step,
                    tokens,
                    sat,
                    partial,
                    partial_credit,
                };
                let advances = next.sat_count() > h.sat_count() || next.partial_credit > h.partial_credit;
                let penalized = next.score / (next.tokens.len() as f64).powf(cfg.length_penalty);
                let rank = penalized + cfg.beta * (next.sat_count() as f64 + next.partial_credit);
                candidates.push((rank, parent, tok, next, advances));
            }
        }
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        // Pruning keeps the best candidate of every satisfaction state and
        // every candidate that advances a constraint.
        let mut rank_pos = 0;
        let mut seen = HashSet::new();
        candidates.retain(|c| {
            rank_pos += 1;
            let first_of_state = seen.insert(c.3.signature());
            rank_pos <= cfg.prune_factor || c.4 || first_of_state
        });

        if let Some(best) = candidates.iter().map(|c| c.3.sat_count()).max() {
            let floor = best.saturating_sub(cfg.sat_tolerance);
            candidates.retain(|c| c.3.sat_count() >= floor);
        }

        // Best candidate of each satisfaction state first, then by rank.
        let mut taken = vec![false; candidates.len()];
        let mut signatures = HashSet::new();
        let mut picked = 0;
        let mut heads: Vec<usize> = (0..candidates.len())
            .filter(|&i| signatures.insert(candidates[i].3.signature()))
            .collect();
        heads.sort_by_key(|&i| std::cmp::Reverse(candidates[i].3.sat_count()));
        for i in heads.into_iter().take(cfg.beam_size) {
            taken[i] = true;
            picked += 1;
        }
        for t in taken.iter_mut() {
            if picked == cfg.beam_size {
                break;
            }
            if !*t {
                *t = true;
                picked += 1;
            }
        }
        beam = candidates
            .into_iter()
            .zip(taken)
            .filter_map(|(c, t)| t.then_some(c.3))
            .collect();
    }

    if finished.is_empty() {
        return Err(DecodeError::NoHypothesis);
    }
    let vocab = scorer.vocab();
    let mut results: Vec<DecodeResult> = finished
        .into_iter()
        .map(|h| {
            let satisfied = h.sat_count();
            DecodeResult {
                text: lm::detokenize(&vocab.decode(&h.tokens)),
                tokens: h.tokens,
                model_score: h.score,
                satisfied_clauses: satisfied,
                fully_satisfied: satisfied == total,
            }
        })
        .collect();
    results.sort_by(|a, b| {
        b.fully_satisfied
            .cmp(&a.fully_satisfied)
            .then(b.model_score.total_cmp(&a.model_score))
            .then(a.tokens.cmp(&b.tokens))
    });
    results.truncate(cfg.beam_size);
    Ok(results)
}
