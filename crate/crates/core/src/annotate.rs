//! Entity typing and same-type swap candidates.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::Rng as _;
use thiserror::Error;

use crate::corpus::{MarkedConclusion, Role, SupportingSet};
use crate::extract::ExtractionResult;
use crate::seed;

const BUNDLED_LEXICON: &str = include_str!("../resources/entity_lexicon.tsv");

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("entity {0:?} has no type")]
    UntypedEntity(String),
    #[error("line {line}: expected `surface<TAB>type_label`")]
    BadLine { line: usize },
    #[error("surface {surface:?} listed as both {first:?} and {second:?}")]
    ConflictingLabel {
        surface: String,
        first: String,
        second: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Assigns a type label to an entity surface seen in some context.
pub trait EntityTyper: Send + Sync {
    fn type_of(&self, surface: &str, context: &str) -> Option<String>;

    /// The declared label set.
    fn labels(&self) -> Vec<String>;
}

pub(crate) fn parse_tsv(text: &str) -> Result<Vec<(String, String)>, AnnotateError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(2, '\t');
        let (Some(a), Some(b)) = (parts.next(), parts.next()) else {
            return Err(AnnotateError::BadLine { line: i + 1 });
        };
        let (a, b) = (a.trim(), b.trim());
        if a.is_empty() || b.is_empty() {
            return Err(AnnotateError::BadLine { line: i + 1 });
        }
        out.push((a.to_string(), b.to_string()));
    }
    Ok(out)
}

/// Case-insensitive surface lexicon with an optional label for unknown surfaces.
#[derive(Debug, Clone, Default)]
pub struct LexiconTyper {
    entries: HashMap<String, String>,
    default_label: Option<String>,
}

impl LexiconTyper {
    pub fn new() -> Self {
        Self::default()
    }

    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_LEXICON).expect("bundled lexicon is well formed")
    }

    pub fn from_tsv(text: &str) -> Result<Self, AnnotateError> {
        let mut t = Self::new();
        for (surface, label) in parse_tsv(text)? {
            t.insert(&surface, &label);
        }
        Ok(t)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, AnnotateError> {
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }

    pub fn with_default(mut self, label: impl Into<String>) -> Self {
        self.default_label = Some(label.into());
        self
    }

    /// Later insertions override earlier ones.
    pub fn insert(&mut self, surface: &str, label: &str) {
        self.entries.insert(surface.to_lowercase(), label.to_string());
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl EntityTyper for LexiconTyper {
    fn type_of(&self, surface: &str, _context: &str) -> Option<String> {
        self.entries
            .get(&surface.to_lowercase())
            .cloned()
            .or_else(|| self.default_label.clone())
    }

    fn labels(&self) -> Vec<String> {
        let mut set: Vec<String> = self
            .entries
            .values()
            .cloned()
            .chain(self.default_label.clone())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        set.sort();
        set
    }
}

/// Types from one instance's own annotations, falling back to another typer.
pub struct InstanceTyper<'a> {
    local: HashMap<String, String>,
    fallback: &'a dyn EntityTyper,
}

impl<'a> InstanceTyper<'a> {
    pub fn new(result: &ExtractionResult, fallback: &'a dyn EntityTyper) -> Self {
        let mut local = HashMap::new();
        for m in &result.supporting.mentions {
            local
                .entry(m.surface.to_lowercase())
                .or_insert_with(|| m.type_label.clone());
        }
        local.insert(
            result.conclusion.regulator().surface.to_lowercase(),
            result.regulator_type.clone(),
        );
        local.insert(
            result.conclusion.regulated().surface.to_lowercase(),
            result.regulated_type.clone(),
        );
        InstanceTyper { local, fallback }
    }
}

impl EntityTyper for InstanceTyper<'_> {
    fn type_of(&self, surface: &str, context: &str) -> Option<String> {
        self.local
            .get(&surface.to_lowercase())
            .cloned()
            .or_else(|| self.fallback.type_of(surface, context))
    }

    fn labels(&self) -> Vec<String> {
        let mut labels: HashSet<String> = self.local.values().cloned().collect();
        labels.extend(self.fallback.labels());
        let mut v: Vec<_> = labels.into_iter().collect();
        v.sort();
        v
    }
}

/// Corpus-level surfaces grouped by type, used for out-of-context swaps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityPool {
    by_type: BTreeMap<String, Vec<String>>,
    labels: HashMap<String, String>,
}

impl EntityPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `Ok(false)` when the surface is already listed under the same label.
    pub fn insert(&mut self, surface: &str, label: &str) -> Result<bool, AnnotateError> {
        let key = surface.to_lowercase();
        if let Some(existing) = self.labels.get(&key) {
            if existing != label {
                return Err(AnnotateError::ConflictingLabel {
                    surface: surface.to_string(),
                    first: existing.clone(),
                    second: label.to_string(),
                });
            }
            return Ok(false);
        }
        self.labels.insert(key, label.to_string());
        self.by_type
            .entry(label.to_string())
            .or_default()
            .push(surface.to_string());
        Ok(true)
    }

    pub fn from_tsv(text: &str) -> Result<Self, AnnotateError> {
        let mut pool = Self::new();
        for (surface, label) in parse_tsv(text)? {
            pool.insert(&surface, &label)?;
        }
        Ok(pool)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, AnnotateError> {
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }

    /// Pools every typed mention of a corpus. A surface keeps the first label it was seen with.
    pub fn from_results<'a>(results: impl IntoIterator<Item = &'a ExtractionResult>) -> Self {
        let mut pool = Self::new();
        for r in results {
            let main = [
                (&r.conclusion.regulator().surface, &r.regulator_type),
                (&r.conclusion.regulated().surface, &r.regulated_type),
            ];
            let support = r.supporting.mentions.iter().map(|m| (&m.surface, &m.type_label));
            for (surface, label) in support.chain(main) {
                let _ = pool.insert(surface, label);
            }
        }
        pool
    }

    pub fn surfaces(&self, label: &str) -> &[String] {
        self.by_type.get(label).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (label, surfaces) in &self.by_type {
            for s in surfaces {
                out.push_str(s);
                out.push('\t');
                out.push_str(label);
                out.push('\n');
            }
        }
        out
    }
}

fn target_type(
    c: &MarkedConclusion,
    target: Role,
    typer: &dyn EntityTyper,
) -> Result<String, AnnotateError> {
    let entity = c
        .entity(target)
        .ok_or_else(|| AnnotateError::UntypedEntity("<no role>".into()))?;
    typer
        .type_of(&entity.surface, c.plain_text())
        .ok_or_else(|| AnnotateError::UntypedEntity(entity.surface.clone()))
}

fn is_main_surface(c: &MarkedConclusion, surface: &str) -> bool {
    let s = surface.to_lowercase();
    s == c.regulator().surface.to_lowercase() || s == c.regulated().surface.to_lowercase()
}

/// Supporting-set mentions sharing the target's type, in order of first occurrence.
pub fn in_text_candidates(
    c: &MarkedConclusion,
    s: &SupportingSet,
    target: Role,
    typer: &dyn EntityTyper,
) -> Result<Vec<String>, AnnotateError> {
    let label = target_type(c, target, typer)?;
    let mut mentions: Vec<_> = s.mentions.iter().collect();
    mentions.sort_by_key(|m| (m.sentence_index, m.span.start));
    let mut seen = HashSet::new();
    Ok(mentions
        .into_iter()
        .filter(|m| m.type_label == label && !is_main_surface(c, &m.surface))
        .filter(|m| seen.insert(m.surface.to_lowercase()))
        .map(|m| m.surface.clone())
        .collect())
}

/// Pool surfaces of the target's type that appear nowhere in the instance.
pub fn out_of_text_candidates(
    c: &MarkedConclusion,
    s: &SupportingSet,
    pool: &EntityPool,
    target: Role,
    typer: &dyn EntityTyper,
) -> Result<Vec<String>, AnnotateError> {
    let label = target_type(c, target, typer)?;
    let haystacks: Vec<String> = s
        .sentences
        .iter()
        .map(|x| x.text.to_lowercase())
        .chain(std::iter::once(c.plain_text().to_lowercase()))
        .collect();
    Ok(pool
        .surfaces(&label)
        .iter()
        .filter(|p| {
            let lower = p.to_lowercase();
            !haystacks.iter().any(|h| h.contains(&lower))
        })
        .cloned()
        .collect())
}

pub(crate) fn choose<T: Clone>(items: &[T], seed: u64) -> Option<T> {
    if items.is_empty() {
        return None;
    }
    let i = seed::rng(seed).gen_range(0..items.len());
    Some(items[i].clone())
}

pub fn same_type_in_text(
    c: &MarkedConclusion,
    s: &SupportingSet,
    target: Role,
    typer: &dyn EntityTyper,
    seed: u64,
) -> Result<Option<String>, AnnotateError> {
    Ok(choose(&in_text_candidates(c, s, target, typer)?, seed))
}

pub fn same_type_out_of_text(
    c: &MarkedConclusion,
    s: &SupportingSet,
    pool: &EntityPool,
    target: Role,
    typer: &dyn EntityTyper,
    seed: u64,
) -> Result<Option<String>, AnnotateError> {
    Ok(choose(
        &out_of_text_candidates(c, s, pool, target, typer)?,
        seed,
    ))
}
