//! Conclusion detection and abstract splitting.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Abstract, EntityMention, MarkedConclusion, Role, SupportingSet};

/// Conclusion phrases, in match-priority order.
pub const DEFAULT_PHRASES: [&str; 13] = [
    "we conclude that",
    "it is concluded that",
    "it was concluded that",
    "we concluded that",
    "we have concluded that",
    "it has been concluded that",
    "it may be concluded that",
    "it was therefore concluded that",
    "we therefore conclude that",
    "we conclude",
    "we thus conclude that",
    "it is therefore concluded that",
    "we further conclude that",
];

#[derive(Debug, Error)]
pub enum PhraseTableError {
    #[error("phrase table is empty")]
    Empty,
    #[error("duplicate phrase {0:?}")]
    Duplicate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseTable {
    phrases: Vec<String>,
}

impl Default for PhraseTable {
    fn default() -> Self {
        PhraseTable {
            phrases: DEFAULT_PHRASES.iter().map(|p| p.to_string()).collect(),
        }
    }
}

impl PhraseTable {
    /// Phrases are trimmed and lowercased. Blank lines are ignored.
    pub fn new<I, S>(phrases: I) -> Result<Self, PhraseTableError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for p in phrases {
            let p = p.as_ref().trim().to_lowercase();
            if p.is_empty() {
                continue;
            }
            if !seen.insert(p.clone()) {
                return Err(PhraseTableError::Duplicate(p));
            }
            out.push(p);
        }
        if out.is_empty() {
            return Err(PhraseTableError::Empty);
        }
        Ok(PhraseTable { phrases: out })
    }

    /// One phrase per line.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PhraseTableError> {
        let text = std::fs::read_to_string(path)?;
        Self::new(text.lines())
    }

    pub fn phrases(&self) -> &[String] {
        &self.phrases
    }

    /// First phrase, in table order, contained in `sentence` (case-insensitive).
    pub fn first_match(&self, sentence: &str) -> Option<&str> {
        let lower = sentence.to_lowercase();
        self.phrases
            .iter()
            .find(|p| lower.contains(p.as_str()))
            .map(String::as_str)
    }
}

/// Premise length bounds, in sentences, both inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PremiseBounds {
    pub min: usize,
    pub max: usize,
}

impl Default for PremiseBounds {
    fn default() -> Self {
        PremiseBounds { min: 3, max: 15 }
    }
}

impl PremiseBounds {
    pub fn contains(&self, n: usize) -> bool {
        self.min <= n && n <= self.max
    }
}

/// A positive (premise, conclusion) pair drawn from one abstract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub abstract_id: String,
    pub supporting: SupportingSet,
    pub conclusion: MarkedConclusion,
    pub matched_phrase: String,
    /// Corpus-provided entity types of the two main entities.
    pub regulator_type: String,
    pub regulated_type: String,
}

impl ExtractionResult {
    pub fn premise(&self) -> String {
        self.supporting.text()
    }

    pub fn entity_type(&self, role: Role) -> Option<&str> {
        match role {
            Role::Regulator => Some(&self.regulator_type),
            Role::Regulated => Some(&self.regulated_type),
            Role::None => None,
        }
    }
}

/// Only the final sentence is tested.
pub fn find_conclusion<'t>(a: &Abstract, table: &'t PhraseTable) -> Option<(usize, &'t str)> {
    let last = a.sentences.last()?;
    table.first_match(&last.text).map(|p| (last.index, p))
}

pub fn split_abstract(
    a: &Abstract,
    table: &PhraseTable,
    bounds: PremiseBounds,
) -> Option<ExtractionResult> {
    let (idx, phrase) = find_conclusion(a, table)?;
    if !bounds.contains(idx) {
        return None;
    }
    let mut regulator: Option<&EntityMention> = None;
    let mut regulated: Option<&EntityMention> = None;
    for m in a.mentions_in(idx) {
        let slot = match m.role {
            Role::Regulator => &mut regulator,
            Role::Regulated => &mut regulated,
            Role::None => continue,
        };
        if slot.is_some() {
            return None;
        }
        *slot = Some(m);
    }
    let (regulator, regulated) = (regulator?, regulated?);
    if regulator.surface == regulated.surface {
        return None;
    }
    let conclusion =
        MarkedConclusion::new(a.sentences[idx].text.clone(), regulator.span, regulated.span).ok()?;
    let supporting = SupportingSet {
        sentences: a.sentences[..idx].to_vec(),
        mentions: a
            .mentions
            .iter()
            .filter(|m| m.sentence_index < idx)
            .cloned()
            .collect(),
    };
    Some(ExtractionResult {
        abstract_id: a.id.clone(),
        supporting,
        conclusion,
        matched_phrase: phrase.to_string(),
        regulator_type: regulator.type_label.clone(),
        regulated_type: regulated.type_label.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Sentence, Span};

    fn abstract_with(sentences: &[&str], mentions: Vec<EntityMention>) -> Abstract {
        Abstract {
            id: "t".into(),
            sentences: sentences
                .iter()
                .enumerate()
                .map(|(index, t)| Sentence {
                    index,
                    text: t.to_string(),
                })
                .collect(),
            mentions,
        }
    }

    fn mention(text: &str, sentence_index: usize, surface: &str, role: Role) -> EntityMention {
        let byte = text.find(surface).unwrap();
        let start = text[..byte].chars().count();
        EntityMention {
            surface: surface.into(),
            type_label: "chem".into(),
            role,
            sentence_index,
            span: Span::new(start, start + surface.chars().count()),
        }
    }

    #[test]
    fn default_table_is_valid() {
        let t = PhraseTable::default();
        assert_eq!(t.phrases().len(), 13);
        assert!(PhraseTable::new(DEFAULT_PHRASES).is_ok());
    }

    #[test]
    fn duplicate_phrases_rejected() {
        assert!(matches!(
            PhraseTable::new(["we conclude", "We Conclude "]),
            Err(PhraseTableError::Duplicate(_))
        ));
        assert!(matches!(PhraseTable::new(["", "  "]), Err(PhraseTableError::Empty)));
    }

    #[test]
    fn finds_phrase_in_final_sentence() {
        let t = PhraseTable::default();
        let a = abstract_with(
            &["A.", "It was concluded that uracil exit is active."],
            vec![],
        );
        assert_eq!(find_conclusion(&a, &t), Some((1, "it was concluded that")));
        let a = abstract_with(&["A.", "We measured pH."], vec![]);
        assert_eq!(find_conclusion(&a, &t), None);
    }

    #[test]
    fn matching_is_case_insensitive_and_in_table_order() {
        let t = PhraseTable::default();
        let a = abstract_with(&["A.", "WE CONCLUDE: X binds Y."], vec![]);
        assert_eq!(find_conclusion(&a, &t), Some((1, "we conclude")));
        // "we conclude that" precedes "we conclude" in the table.
        let a = abstract_with(&["A.", "WE CONCLUDE that X."], vec![]);
        assert_eq!(find_conclusion(&a, &t), Some((1, "we conclude that")));
    }

    #[test]
    fn only_final_sentence_is_tested() {
        let t = PhraseTable::default();
        let a = abstract_with(&["We conclude that A.", "B happened."], vec![]);
        assert_eq!(find_conclusion(&a, &t), None);
    }

    #[test]
    fn too_short_premise_is_dropped() {
        let t = PhraseTable::default();
        let last = "We conclude that X inhibits Y.";
        let a = abstract_with(
            &["One.", last],
            vec![
                mention(last, 1, "X", Role::Regulator),
                mention(last, 1, "Y", Role::Regulated),
            ],
        );
        assert!(split_abstract(&a, &t, PremiseBounds::default()).is_none());
        let r = split_abstract(&a, &t, PremiseBounds { min: 1, max: 15 }).unwrap();
        assert_eq!(r.supporting.len(), 1);
        assert_eq!(r.conclusion.render(), "We conclude that <re> X <er> inhibits <el> Y <le>.");
    }

    #[test]
    fn needs_both_roles_exactly_once() {
        let t = PhraseTable::default();
        let last = "We conclude that X inhibits Y and Z.";
        let base = ["a.", "b.", "c.", last];
        let only_one = abstract_with(&base, vec![mention(last, 3, "X", Role::Regulator)]);
        assert!(split_abstract(&only_one, &t, PremiseBounds::default()).is_none());
        let twice = abstract_with(
            &base,
            vec![
                mention(last, 3, "X", Role::Regulator),
                mention(last, 3, "Y", Role::Regulated),
                mention(last, 3, "Z", Role::Regulated),
            ],
        );
        assert!(split_abstract(&twice, &t, PremiseBounds::default()).is_none());
    }

    #[test]
    fn identical_entity_names_are_skipped() {
        let last = "We conclude that ATP drives ATP release.";
        let mut regd = mention(last, 3, "ATP", Role::Regulated);
        regd.span = Span::new(28, 31);
        let a = abstract_with(&["A.", "B.", "C.", last], vec![mention(last, 3, "ATP", Role::Regulator), regd]);
        assert_eq!(a.validate(), Ok(()));
        assert!(split_abstract(&a, &PhraseTable::default(), PremiseBounds::default()).is_none());
    }
}
