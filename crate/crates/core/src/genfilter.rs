//! Acceptance filters for generated hypotheses.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::MarkedConclusion;
use crate::lm;
use crate::neurologic::{build_ng_constraints, build_sen_constraints, ConstraintSet, Polarity};

const BUNDLED_RELATIONS: &str = include_str!("../resources/relation_keywords.tsv");
const MARKERS: [&str; 4] = ["<re>", "<er>", "<el>", "<le>"];
const NEGATION_CUES: [&str; 4] = ["not", "no", "cannot", "without"];

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("candidate lacks a main entity surface: {0:?}")]
    MissingEntities(String),
    #[error("constraint set does not match scheme {0}")]
    SchemeMismatch(GndScheme),
    #[error("threshold {name} = {value} outside [0, 1]")]
    InvalidThreshold { name: &'static str, value: f64 },
    #[error("line {0}: expected `stem<TAB>label`")]
    BadLine(usize),
    #[error("scorer backend: {0}")]
    Backend(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub trait SimilarityScorer: Send + Sync {
    /// Symmetric score in `[0, 1]`.
    fn score(&self, a: &str, b: &str) -> Result<f64, FilterError>;
}

pub trait RelationPredictor: Send + Sync {
    fn labels(&self) -> Vec<String>;

    /// Relation expressed in `text` between the two entities.
    fn predict(&self, text: &str, regulator: &str, regulated: &str) -> Result<String, FilterError>;
}

impl<T: SimilarityScorer + ?Sized> SimilarityScorer for &T {
    fn score(&self, a: &str, b: &str) -> Result<f64, FilterError> {
        (**self).score(a, b)
    }
}

impl<T: RelationPredictor + ?Sized> RelationPredictor for &T {
    fn labels(&self) -> Vec<String> {
        (**self).labels()
    }
    fn predict(&self, text: &str, regulator: &str, regulated: &str) -> Result<String, FilterError> {
        (**self).predict(text, regulator, regulated)
    }
}

/// Cosine similarity of term-frequency vectors; marker tags are ignored.
#[derive(Debug, Clone, Copy, Default)]
pub struct TfCosine;

fn term_counts(text: &str) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    for t in lm::tokenize(text) {
        if !MARKERS.contains(&t.as_str()) {
            *m.entry(t).or_insert(0.0) += 1.0;
        }
    }
    m
}

impl SimilarityScorer for TfCosine {
    fn score(&self, a: &str, b: &str) -> Result<f64, FilterError> {
        let (ca, cb) = (term_counts(a), term_counts(b));
        if ca.is_empty() && cb.is_empty() {
            return Ok(1.0);
        }
        let dot: f64 = ca.iter().filter_map(|(t, x)| cb.get(t).map(|y| x * y)).sum();
        let norm = |c: &BTreeMap<String, f64>| c.values().map(|x| x * x).sum::<f64>().sqrt();
        let denom = norm(&ca) * norm(&cb);
        if denom == 0.0 {
            return Ok(0.0);
        }
        Ok((dot / denom).clamp(0.0, 1.0))
    }
}

/// Keyword-stem relation predictor. A negation cue flips the two polar labels.
#[derive(Debug, Clone)]
pub struct KeywordRelationPredictor {
    stems: Vec<(String, String)>,
    fallback: String,
}

pub const ACTIVATES: &str = "activates";
pub const INHIBITS: &str = "inhibits";
pub const OTHER: &str = "other";

impl KeywordRelationPredictor {
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_RELATIONS).expect("bundled relation keywords are well formed")
    }

    pub fn from_tsv(text: &str) -> Result<Self, FilterError> {
        let mut stems = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(s), Some(l), None) if !s.trim().is_empty() && !l.trim().is_empty() => {
                    stems.push((s.trim().to_lowercase(), l.trim().to_string()));
                }
                _ => return Err(FilterError::BadLine(i + 1)),
            }
        }
        // Longest stem wins when several match one token.
        stems.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
        Ok(KeywordRelationPredictor {
            stems,
            fallback: OTHER.to_string(),
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, FilterError> {
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }

    fn label_of(&self, token: &str) -> Option<&str> {
        self.stems
            .iter()
            .find(|(s, _)| token.starts_with(s.as_str()))
            .map(|(_, l)| l.as_str())
    }
}

impl RelationPredictor for KeywordRelationPredictor {
    fn labels(&self) -> Vec<String> {
        let mut set: BTreeSet<String> = self.stems.iter().map(|(_, l)| l.clone()).collect();
        set.insert(self.fallback.clone());
        set.into_iter().collect()
    }

    fn predict(&self, text: &str, regulator: &str, regulated: &str) -> Result<String, FilterError> {
        let entity_tokens: BTreeSet<String> = lm::tokenize(regulator)
            .into_iter()
            .chain(lm::tokenize(regulated))
            .collect();
        let tokens = lm::tokenize(text);
        let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
        let mut negated = false;
        for t in &tokens {
            if NEGATION_CUES.contains(&t.as_str()) {
                negated = true;
            }
            if entity_tokens.contains(t) {
                continue;
            }
            if let Some(l) = self.label_of(t) {
                *votes.entry(l).or_default() += 1;
            }
        }
        let best = votes.iter().map(|(_, n)| *n).max().unwrap_or(0);
        let winners: Vec<&str> = votes.iter().filter(|(_, n)| **n == best).map(|(l, _)| *l).collect();
        let label = match winners.as_slice() {
            [one] if best > 0 => *one,
            _ => return Ok(self.fallback.clone()),
        };
        Ok(match (negated, label) {
            (true, ACTIVATES) => INHIBITS.to_string(),
            (true, INHIBITS) => ACTIVATES.to_string(),
            _ => label.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub lambda: f64,
    pub delta: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            lambda: 0.45,
            delta: 0.9,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        for (name, value) in [("lambda", self.lambda), ("delta", self.delta)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(FilterError::InvalidThreshold { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GndScheme {
    #[serde(rename = "SEN")]
    Sen,
    #[serde(rename = "SRE")]
    Sre,
    #[serde(rename = "NG")]
    Ng,
}

impl GndScheme {
    pub const ALL: [GndScheme; 3] = [GndScheme::Sen, GndScheme::Sre, GndScheme::Ng];

    pub fn as_str(self) -> &'static str {
        match self {
            GndScheme::Sen => "SEN",
            GndScheme::Sre => "SRE",
            GndScheme::Ng => "NG",
        }
    }
}

impl fmt::Display for GndScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GndScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GndScheme::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown scheme {s:?}"))
    }
}

fn mentions(candidate: &str, surface: &str) -> bool {
    let (c, s) = (lm::tokenize(candidate), lm::tokenize(surface));
    !s.is_empty() && c.windows(s.len()).any(|w| w == s.as_slice())
}

/// True when `candidate` qualifies as a GEN negative.
pub fn filter_gen(
    candidate: &str,
    gold: &MarkedConclusion,
    quality: &dyn SimilarityScorer,
    rel: &dyn RelationPredictor,
    cfg: &FilterConfig,
) -> Result<bool, FilterError> {
    cfg.validate()?;
    let (reg, regd) = (&gold.regulator().surface, &gold.regulated().surface);
    for s in [reg, regd] {
        if !mentions(candidate, s) {
            return Err(FilterError::MissingEntities(s.clone()));
        }
    }
    if quality.score(candidate, &gold.render())? >= cfg.lambda {
        return Ok(false);
    }
    let gold_rel = rel.predict(gold.plain_text(), reg, regd)?;
    Ok(rel.predict(candidate, reg, regd)? != gold_rel)
}

fn all_polarity(cs: &ConstraintSet, p: Polarity) -> bool {
    cs.literals().all(|l| l.polarity() == p)
}

fn check_scheme(gold: &MarkedConclusion, scheme: GndScheme, cs: &ConstraintSet) -> bool {
    match scheme {
        GndScheme::Sen => *cs == build_sen_constraints(gold),
        GndScheme::Ng => *cs == build_ng_constraints(gold),
        GndScheme::Sre => {
            cs.clauses().len() == 2
                && cs.clauses().iter().all(|c| c.0.len() == 1)
                && all_polarity(cs, Polarity::MustAppear)
                && *cs != build_sen_constraints(gold)
        }
    }
}

/// True when `candidate` qualifies as a GEN-ND negative under `scheme`.
pub fn filter_gnd(
    candidate: &str,
    gold: &MarkedConclusion,
    scheme: GndScheme,
    constraints: &ConstraintSet,
    sim: &dyn SimilarityScorer,
    cfg: &FilterConfig,
) -> Result<bool, FilterError> {
    cfg.validate()?;
    if !check_scheme(gold, scheme, constraints) {
        return Err(FilterError::SchemeMismatch(scheme));
    }
    let sat = constraints.evaluate_text(candidate);
    Ok(match scheme {
        GndScheme::Sen => sat.fully_satisfied(),
        GndScheme::Sre => sat.fully_satisfied() && sim.score(candidate, &gold.render())? < cfg.delta,
        GndScheme::Ng => !sat.violated,
    })
}
