//! Data model and ingestion for entity-annotated abstracts.
//!
//! Conclusions carry two role-marked entities. The regulator is written as
//! `<re> surface <er>` and the regulated entity as `<el> surface <le>`.
//! All offsets are counted in Unicode scalar values.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const REGULATOR_OPEN: &str = "<re>";
pub const REGULATOR_CLOSE: &str = "<er>";
pub const REGULATED_OPEN: &str = "<el>";
pub const REGULATED_CLOSE: &str = "<le>";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed markers: {0}")]
    MalformedMarkers(String),
    #[error("invalid conclusion: {0}")]
    InvalidConclusion(String),
    #[error("line {line}: schema violation: {reason}")]
    SchemaViolation { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Half-open character interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Regulator,
    Regulated,
    #[default]
    None,
}

impl Role {
    pub fn other(self) -> Role {
        match self {
            Role::Regulator => Role::Regulated,
            Role::Regulated => Role::Regulator,
            Role::None => Role::None,
        }
    }

    pub fn markers(self) -> Option<(&'static str, &'static str)> {
        match self {
            Role::Regulator => Some((REGULATOR_OPEN, REGULATOR_CLOSE)),
            Role::Regulated => Some((REGULATED_OPEN, REGULATED_CLOSE)),
            Role::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub surface: String,
    pub type_label: String,
    pub role: Role,
    pub sentence_index: usize,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Abstract {
    pub id: String,
    pub sentences: Vec<Sentence>,
    pub mentions: Vec<EntityMention>,
}

impl Abstract {
    pub fn final_index(&self) -> usize {
        self.sentences.len().saturating_sub(1)
    }

    pub fn mentions_in(&self, sentence_index: usize) -> impl Iterator<Item = &EntityMention> {
        self.mentions
            .iter()
            .filter(move |m| m.sentence_index == sentence_index)
    }

    /// Checks every structural invariant of an abstract.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.sentences.len() < 2 {
            return Err(format!(
                "abstract needs at least 2 sentences, got {}",
                self.sentences.len()
            ));
        }
        for (i, s) in self.sentences.iter().enumerate() {
            if s.index != i {
                return Err(format!("sentence index {} at position {}", s.index, i));
            }
            if s.text.trim().is_empty() {
                return Err(format!("sentence {i} is empty"));
            }
        }
        let last = self.final_index();
        for m in &self.mentions {
            let Some(sentence) = self.sentences.get(m.sentence_index) else {
                return Err(format!("mention sentence index {} out of range", m.sentence_index));
            };
            let len = sentence.text.chars().count();
            if m.span.is_empty() || m.span.end > len {
                return Err(format!(
                    "span {}..{} out of bounds in sentence {} (length {len})",
                    m.span.start, m.span.end, m.sentence_index
                ));
            }
            let actual = char_slice(&sentence.text, m.span);
            if actual != m.surface {
                return Err(format!("surface {:?} does not match text {:?}", m.surface, actual));
            }
            if m.role != Role::None && m.sentence_index != last {
                return Err(format!(
                    "role-marked mention {:?} outside the final sentence",
                    m.surface
                ));
            }
        }
        Ok(())
    }
}

/// One line of the input corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbstractRecord {
    pub id: String,
    pub sentences: Vec<String>,
    #[serde(default)]
    pub entities: Vec<EntityRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub type_label: String,
    #[serde(default)]
    pub role: Role,
}

impl TryFrom<AbstractRecord> for Abstract {
    type Error = String;

    fn try_from(rec: AbstractRecord) -> Result<Self, Self::Error> {
        let sentences: Vec<Sentence> = rec
            .sentences
            .into_iter()
            .enumerate()
            .map(|(index, text)| Sentence { index, text })
            .collect();
        let mut mentions = Vec::with_capacity(rec.entities.len());
        for e in rec.entities {
            let Some(sentence) = sentences.get(e.sentence) else {
                return Err(format!("entity sentence index {} out of range", e.sentence));
            };
            let len = sentence.text.chars().count();
            if e.start >= e.end || e.end > len {
                return Err(format!(
                    "entity span {}..{} invalid for sentence {} (length {len})",
                    e.start, e.end, e.sentence
                ));
            }
            let span = Span::new(e.start, e.end);
            mentions.push(EntityMention {
                surface: char_slice(&sentence.text, span),
                type_label: e.type_label,
                role: e.role,
                sentence_index: e.sentence,
                span,
            });
        }
        let a = Abstract {
            id: rec.id,
            sentences,
            mentions,
        };
        a.validate()?;
        Ok(a)
    }
}

impl From<&Abstract> for AbstractRecord {
    fn from(a: &Abstract) -> Self {
        AbstractRecord {
            id: a.id.clone(),
            sentences: a.sentences.iter().map(|s| s.text.clone()).collect(),
            entities: a
                .mentions
                .iter()
                .map(|m| EntityRecord {
                    sentence: m.sentence_index,
                    start: m.span.start,
                    end: m.span.end,
                    type_label: m.type_label.clone(),
                    role: m.role,
                })
                .collect(),
        }
    }
}

/// Parses one corpus line.
pub fn parse_record(line: &str, line_no: usize) -> Result<Abstract, CorpusError> {
    let rec: AbstractRecord =
        serde_json::from_str(line).map_err(|e| CorpusError::SchemaViolation {
            line: line_no,
            reason: e.to_string(),
        })?;
    Abstract::try_from(rec).map_err(|reason| CorpusError::SchemaViolation {
        line: line_no,
        reason,
    })
}

/// Streams abstracts from a reader, one JSON record per line. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R) -> impl Iterator<Item = Result<Abstract, CorpusError>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Err(e) => Some(Err(CorpusError::Io(e))),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(parse_record(&l, i + 1)),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Abort on the first invalid record.
    #[default]
    Strict,
    /// Skip invalid records and report them.
    Lenient,
}

#[derive(Debug, Default)]
pub struct LoadedCorpus {
    pub abstracts: Vec<Abstract>,
    /// `(line, reason)` for every skipped record.
    pub rejected: Vec<(usize, String)>,
}

pub fn load_corpus(path: impl AsRef<Path>, mode: LoadMode) -> Result<LoadedCorpus, CorpusError> {
    let file = File::open(path)?;
    load_from_reader(BufReader::new(file), mode)
}

pub fn load_from_reader<R: BufRead>(reader: R, mode: LoadMode) -> Result<LoadedCorpus, CorpusError> {
    let mut out = LoadedCorpus::default();
    for item in read_corpus(reader) {
        match item {
            Ok(a) => out.abstracts.push(a),
            Err(CorpusError::SchemaViolation { line, reason }) if mode == LoadMode::Lenient => {
                out.rejected.push((line, reason));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// An entity occurrence inside a conclusion's plain text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedEntity {
    pub surface: String,
    pub span: Span,
}

/// A conclusion sentence with exactly one regulator and one regulated span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MarkedConclusion {
    plain_text: String,
    regulator: MarkedEntity,
    regulated: MarkedEntity,
}

impl MarkedConclusion {
    pub fn new(
        plain_text: impl Into<String>,
        regulator: Span,
        regulated: Span,
    ) -> Result<Self, CorpusError> {
        let plain_text = plain_text.into();
        let len = plain_text.chars().count();
        for (name, span) in [("regulator", regulator), ("regulated", regulated)] {
            if span.is_empty() || span.end > len {
                return Err(CorpusError::InvalidConclusion(format!(
                    "{name} span {}..{} out of bounds (length {len})",
                    span.start, span.end
                )));
            }
        }
        if regulator.overlaps(&regulated) {
            return Err(CorpusError::InvalidConclusion("entity spans overlap".into()));
        }
        for tag in [REGULATOR_OPEN, REGULATOR_CLOSE, REGULATED_OPEN, REGULATED_CLOSE] {
            if plain_text.contains(tag) {
                return Err(CorpusError::InvalidConclusion(format!(
                    "plain text contains marker {tag}"
                )));
            }
        }
        let regulator = MarkedEntity {
            surface: char_slice(&plain_text, regulator),
            span: regulator,
        };
        let regulated = MarkedEntity {
            surface: char_slice(&plain_text, regulated),
            span: regulated,
        };
        for e in [&regulator, &regulated] {
            if e.surface.trim().is_empty() || e.surface.trim() != e.surface {
                return Err(CorpusError::InvalidConclusion(format!(
                    "entity surface {:?} is blank or padded",
                    e.surface
                )));
            }
        }
        if regulator.surface.to_lowercase() == regulated.surface.to_lowercase() {
            return Err(CorpusError::InvalidConclusion(format!(
                "regulator and regulated share the surface {:?}",
                regulator.surface
            )));
        }
        Ok(MarkedConclusion {
            plain_text,
            regulator,
            regulated,
        })
    }

    pub fn plain_text(&self) -> &str {
        &self.plain_text
    }

    pub fn regulator(&self) -> &MarkedEntity {
        &self.regulator
    }

    pub fn regulated(&self) -> &MarkedEntity {
        &self.regulated
    }

    pub fn entity(&self, role: Role) -> Option<&MarkedEntity> {
        match role {
            Role::Regulator => Some(&self.regulator),
            Role::Regulated => Some(&self.regulated),
            Role::None => None,
        }
    }

    /// The role occupying the earlier position in the text.
    pub fn leading_role(&self) -> Role {
        if self.regulator.span.start < self.regulated.span.start {
            Role::Regulator
        } else {
            Role::Regulated
        }
    }

    /// Writes new surfaces into the existing spans. Markers keep their positions.
    pub fn with_surfaces(&self, regulator: &str, regulated: &str) -> Result<Self, CorpusError> {
        self.rebuild(
            (self.regulator.span, regulator, Role::Regulator),
            (self.regulated.span, regulated, Role::Regulated),
        )
    }

    /// Moves each entity, together with its markers, to the other entity's position.
    pub fn with_positions_swapped(&self) -> Result<Self, CorpusError> {
        self.rebuild(
            (self.regulator.span, &self.regulated.surface, Role::Regulated),
            (self.regulated.span, &self.regulator.surface, Role::Regulator),
        )
    }

    /// Replaces a stretch of non-entity text, shifting the entity spans as needed.
    pub fn splice(&self, span: Span, replacement: &str) -> Result<Self, CorpusError> {
        let len = self.plain_text.chars().count();
        if span.start > span.end || span.end > len {
            return Err(CorpusError::InvalidConclusion("splice span out of bounds".into()));
        }
        for e in [&self.regulator, &self.regulated] {
            if span.overlaps(&e.span) || (span.is_empty() && e.span.start < span.start && span.start < e.span.end) {
                return Err(CorpusError::InvalidConclusion(format!(
                    "splice overlaps entity {:?}",
                    e.surface
                )));
            }
        }
        let chars: Vec<char> = self.plain_text.chars().collect();
        let mut text: String = chars[..span.start].iter().collect();
        text.push_str(replacement);
        text.extend(&chars[span.end..]);
        let delta = replacement.chars().count() as isize - span.len() as isize;
        let shift = |s: Span| {
            if s.start >= span.end {
                Span::new(
                    (s.start as isize + delta) as usize,
                    (s.end as isize + delta) as usize,
                )
            } else {
                s
            }
        };
        MarkedConclusion::new(text, shift(self.regulator.span), shift(self.regulated.span))
    }

    /// Replaces the text of the two spans. Each slot is `(old span, new surface, role)`.
    fn rebuild(&self, a: (Span, &str, Role), b: (Span, &str, Role)) -> Result<Self, CorpusError> {
        let (first, second) = if a.0.start < b.0.start { (a, b) } else { (b, a) };
        let chars: Vec<char> = self.plain_text.chars().collect();
        let mut text: String = chars[..first.0.start].iter().collect();
        let s1 = text.chars().count();
        text.push_str(first.1);
        let e1 = s1 + first.1.chars().count();
        text.extend(&chars[first.0.end..second.0.start]);
        let s2 = text.chars().count();
        text.push_str(second.1);
        let e2 = s2 + second.1.chars().count();
        text.extend(&chars[second.0.end..]);
        let (first_span, second_span) = (Span::new(s1, e1), Span::new(s2, e2));
        let (reg, regd) = if first.2 == Role::Regulator {
            (first_span, second_span)
        } else {
            (second_span, first_span)
        };
        MarkedConclusion::new(text, reg, regd)
    }

    /// Canonical tagged form, e.g. `<re> pH <er> rises with <el> ABA <le>`.
    pub fn render(&self) -> String {
        let mut slots = [
            (self.regulator.span, Role::Regulator),
            (self.regulated.span, Role::Regulated),
        ];
        slots.sort_by_key(|(s, _)| s.start);
        let chars: Vec<char> = self.plain_text.chars().collect();
        let mut out = String::with_capacity(self.plain_text.len() + 20);
        let mut pos = 0;
        for (span, role) in slots {
            let (open, close) = role.markers().expect("main roles carry markers");
            out.extend(&chars[pos..span.start]);
            out.push_str(open);
            out.push(' ');
            out.extend(&chars[span.start..span.end]);
            out.push(' ');
            out.push_str(close);
            pos = span.end;
        }
        out.extend(&chars[pos..]);
        out
    }
}

impl fmt::Display for MarkedConclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl From<MarkedConclusion> for String {
    fn from(c: MarkedConclusion) -> String {
        c.render()
    }
}

impl TryFrom<String> for MarkedConclusion {
    type Error = CorpusError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        parse_marked(&s)
    }
}

pub fn render_marked(c: &MarkedConclusion) -> String {
    c.render()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Tag {
    ReOpen,
    ReClose,
    ElOpen,
    ElClose,
}

fn tag_at(s: &str) -> Option<Tag> {
    if s.starts_with(REGULATOR_OPEN) {
        Some(Tag::ReOpen)
    } else if s.starts_with(REGULATOR_CLOSE) {
        Some(Tag::ReClose)
    } else if s.starts_with(REGULATED_OPEN) {
        Some(Tag::ElOpen)
    } else if s.starts_with(REGULATED_CLOSE) {
        Some(Tag::ElClose)
    } else {
        None
    }
}

/// Parses a marker-tagged conclusion.
///
/// Whitespace just inside a marker pair is not part of the entity surface.
/// `<re> x <re>` is accepted as an alternative spelling of `<re> x <er>`.
pub fn parse_marked(text: &str) -> Result<MarkedConclusion, CorpusError> {
    let malformed = |m: &str| CorpusError::MalformedMarkers(m.to_string());
    let mut plain = String::with_capacity(text.len());
    let mut plain_len = 0usize;
    let mut open: Option<(Role, usize)> = None;
    let mut regulator: Option<Span> = None;
    let mut regulated: Option<Span> = None;

    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        let Some(tag) = tag_at(rest) else {
            plain.push(c);
            plain_len += 1;
            rest = &rest[c.len_utf8()..];
            continue;
        };
        rest = &rest[4..];
        let closing_role = match (tag, open) {
            (Tag::ReOpen, None) => {
                if regulator.is_some() {
                    return Err(malformed("duplicate regulator marker"));
                }
                open = Some((Role::Regulator, plain_len));
                rest = rest.trim_start();
                continue;
            }
            (Tag::ElOpen, None) => {
                if regulated.is_some() {
                    return Err(malformed("duplicate regulated marker"));
                }
                open = Some((Role::Regulated, plain_len));
                rest = rest.trim_start();
                continue;
            }
            (Tag::ReOpen | Tag::ReClose, Some((Role::Regulator, _))) => Role::Regulator,
            (Tag::ElClose, Some((Role::Regulated, _))) => Role::Regulated,
            (Tag::ReClose, None) | (Tag::ElClose, None) => {
                return Err(malformed("closing marker without opening marker"))
            }
            _ => return Err(malformed("interleaved or nested markers")),
        };
        let (_, start) = open.take().expect("checked above");
        while plain.ends_with(char::is_whitespace) && plain_len > start {
            plain.pop();
            plain_len -= 1;
        }
        if plain_len == start {
            return Err(malformed("empty entity between markers"));
        }
        let span = Span::new(start, plain_len);
        match closing_role {
            Role::Regulator => regulator = Some(span),
            _ => regulated = Some(span),
        }
    }
    if open.is_some() {
        return Err(malformed("unterminated marker"));
    }
    match (regulator, regulated) {
        (Some(r), Some(d)) => MarkedConclusion::new(plain, r, d),
        (None, _) => Err(malformed("missing regulator marker")),
        (_, None) => Err(malformed("missing regulated marker")),
    }
}

/// Sentences before the conclusion together with their typed mentions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportingSet {
    pub sentences: Vec<Sentence>,
    pub mentions: Vec<EntityMention>,
}

impl SupportingSet {
    pub fn text(&self) -> String {
        self.sentences
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Substring by character interval.
pub fn char_slice(s: &str, span: Span) -> String {
    s.chars().skip(span.start).take(span.len()).collect()
}
