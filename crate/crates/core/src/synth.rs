//! Synthetic corpora with controllable structure, for fixtures and load tests.
//!
//! Every abstract has three to five supporting sentences and a final sentence
//! holding one regulator and one regulated mention. [`Features`] decides which
//! perturbations beyond entity swapping the abstract admits.

use crate::corpus::{Abstract, AbstractRecord, EntityMention, Role, Sentence, Span};
use crate::extract::DEFAULT_PHRASES;

/// Phrases that contain no auxiliary the negation rules could flip.
const PLAIN_PHRASES: [&str; 6] = [
    "we conclude that",
    "we concluded that",
    "we therefore conclude that",
    "we conclude",
    "we thus conclude that",
    "we further conclude that",
];

pub const SHARED_TYPE: &str = "SYNTH_SHARED";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Features {
    /// A same-type entity in the supporting set.
    pub sre: bool,
    /// Main entities share a type with other abstracts.
    pub sreo: bool,
    pub vneg: bool,
    pub sn: bool,
    pub lpr: bool,
    pub gen: bool,
    pub gen_nd: bool,
}

impl Features {
    pub const COUNT: usize = 7;

    pub fn from_bits(bits: u8) -> Self {
        let b = |i: u8| bits & (1 << i) != 0;
        Features {
            sre: b(0),
            sreo: b(1),
            vneg: b(2),
            sn: b(3),
            lpr: b(4),
            gen: b(5),
            gen_nd: b(6),
        }
    }

    pub fn count(&self) -> usize {
        [self.sre, self.sreo, self.vneg, self.sn, self.lpr, self.gen, self.gen_nd]
            .iter()
            .filter(|x| **x)
            .count()
    }

    /// The `j`-th (cyclically) feature set with exactly `k` features on.
    pub fn nth_with(k: usize, j: usize) -> Self {
        let sets: Vec<u8> = (0u8..128).filter(|b| b.count_ones() as usize == k).collect();
        assert!(!sets.is_empty(), "no feature set has {k} members");
        Self::from_bits(sets[j % sets.len()])
    }
}

struct Builder {
    text: String,
    chars: usize,
    mentions: Vec<(String, String, Role, Span)>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            text: String::new(),
            chars: 0,
            mentions: Vec::new(),
        }
    }

    fn push(&mut self, s: &str) -> &mut Self {
        self.text.push_str(s);
        self.chars += s.chars().count();
        self
    }

    fn entity(&mut self, surface: &str, label: &str, role: Role) -> &mut Self {
        let start = self.chars;
        self.push(surface);
        self.mentions
            .push((surface.to_string(), label.to_string(), role, Span::new(start, self.chars)));
        self
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

pub fn entity_names(i: usize) -> [String; 3] {
    [format!("Syn{i:05}a"), format!("Syn{i:05}b"), format!("Syn{i:05}c")]
}

/// Abstract number `i`. Without a phrase the final sentence is not a conclusion.
pub fn abstract_with(i: usize, phrase: Option<&str>, f: &Features) -> Abstract {
    let [reg, regd, other] = entity_names(i);
    let label = if f.sreo {
        SHARED_TYPE.to_string()
    } else {
        format!("SYNTH_{i:05}")
    };
    let mut sentences: Vec<Builder> = Vec::new();

    let mut s = Builder::new();
    s.entity(&reg, &label, Role::None).push(" was measured in liver cells.");
    sentences.push(s);

    let mut s = Builder::new();
    if f.sre {
        s.entity(&other, &label, Role::None).push(" was also detected in the same preparation.");
    } else {
        s.push("Expression of ").entity(&regd, &label, Role::None).push(" was examined.");
    }
    sentences.push(s);

    let mut s = Builder::new();
    s.push(if f.sn {
        "Levels reached 12 mM after treatment."
    } else {
        "Levels rose after treatment."
    });
    sentences.push(s);

    for k in 0..i % 3 {
        let mut s = Builder::new();
        s.push(["Controls were unchanged.", "Replicates agreed closely."][k]);
        sentences.push(s);
    }

    let mut s = Builder::new();
    match phrase {
        Some(p) => {
            s.push(&capitalize(p)).push(" ");
        }
        None => {
            s.push("These data suggest that ");
        }
    }
    s.entity(&reg, &label, Role::Regulator)
        .push(if f.vneg { " is required for the " } else { " drives the " })
        .push(if f.lpr { "increase of " } else { "level of " })
        .entity(&regd, &label, Role::Regulated)
        .push(if f.sn { " at 37 mM" } else { "" })
        .push(" in liver cells.");
    sentences.push(s);

    let mut mentions = Vec::new();
    let sentences = sentences
        .into_iter()
        .enumerate()
        .map(|(index, b)| {
            mentions.extend(b.mentions.into_iter().map(|(surface, type_label, role, span)| EntityMention {
                surface,
                type_label,
                role,
                sentence_index: index,
                span,
            }));
            Sentence { index, text: b.text }
        })
        .collect();
    let a = Abstract {
        id: format!("syn{i:05}"),
        sentences,
        mentions,
    };
    debug_assert_eq!(a.validate(), Ok(()));
    a
}

/// A phrase that leaves the negation rules nothing to act on unless `vneg`.
pub fn phrase_for(i: usize, vneg: bool) -> &'static str {
    if vneg {
        DEFAULT_PHRASES[i % DEFAULT_PHRASES.len()]
    } else {
        PLAIN_PHRASES[i % PLAIN_PHRASES.len()]
    }
}

/// `n` abstracts of which the first `with_phrase` end in a conclusion.
///
/// Conclusion phrases rotate through the default table with varied casing.
/// One abstract without a final conclusion carries a phrase in an earlier sentence.
pub fn extraction_corpus(n: usize, with_phrase: usize) -> Vec<Abstract> {
    (0..n)
        .map(|i| {
            if i < with_phrase {
                let p = DEFAULT_PHRASES[i % DEFAULT_PHRASES.len()];
                let p = if i % 7 == 3 { p.to_uppercase() } else { p.to_string() };
                abstract_with(i, Some(&p), &Features::default())
            } else {
                let mut a = abstract_with(i, None, &Features::default());
                if i == with_phrase {
                    a.sentences[1].text = "We conclude that earlier work was incomplete.".into();
                    a.mentions.retain(|m| m.sentence_index != 1);
                }
                a
            }
        })
        .collect()
}

/// Abstracts whose applicable-kind counts follow `buckets` of (kind count, abstracts).
pub fn applicability_corpus(buckets: &[(usize, usize)]) -> Vec<(Abstract, Features)> {
    let mut out = Vec::new();
    for &(kinds, n) in buckets {
        let extra = kinds.saturating_sub(2);
        for j in 0..n {
            let i = out.len();
            let f = Features::nth_with(extra, j);
            out.push((abstract_with(i, Some(phrase_for(i, f.vneg)), &f), f));
        }
    }
    out
}

/// Applicable-kind counts per thousand groups used by the load fixtures.
pub const APPLICABILITY_PER_MILLE: [(usize, usize); 7] =
    [(2, 57), (3, 351), (4, 390), (5, 140), (6, 50), (7, 11), (8, 1)];

pub fn to_jsonl(abstracts: &[Abstract]) -> String {
    let mut out = String::new();
    for a in abstracts {
        out.push_str(&serde_json::to_string(&AbstractRecord::from(a)).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Nine malformed corpus lines, one per schema failure.
pub fn corrupt_lines() -> [&'static str; 9] {
    [
        "this is not json",
        r#"{"id":"bad01"}"#,
        r#"{"id":"bad02","sentences":["A b.","C d."],"entities":[],"extra":1}"#,
        r#"{"id":"bad03","sentences":["A b.","C d."],"entities":[{"sentence":1,"start":0,"end":40,"type":"X","role":"regulator"}]}"#,
        r#"{"id":"bad04","sentences":["A b.","C d."],"entities":[{"sentence":0,"start":0,"end":1,"type":"X","role":"regulator"}]}"#,
        r#"{"id":"bad05","sentences":["Only one sentence."],"entities":[]}"#,
        r#"{"id":"","sentences":["A b.","C d."],"entities":[]}"#,
        r#"{"id":"bad07","sentences":["A b.","C d."],"entities":[{"sentence":5,"start":0,"end":1,"type":"X","role":"none"}]}"#,
        r#"{"id":"bad08","sentences":["A b.","C d."],"entities":[{"sentence":1,"start":2,"end":2,"type":"X","role":"none"}]}"#,
    ]
}

/// The extraction corpus with the corrupt lines spliced in at every eleventh line.
pub fn lenient_fixture(n: usize, with_phrase: usize) -> String {
    let good = to_jsonl(&extraction_corpus(n, with_phrase));
    let mut bad = corrupt_lines().into_iter();
    let mut out = String::new();
    for (i, line) in good.lines().enumerate() {
        if i % 11 == 5 {
            if let Some(b) = bad.next() {
                out.push_str(b);
                out.push('\n');
            }
        }
        out.push_str(line);
        out.push('\n');
    }
    for b in bad {
        out.push_str(b);
        out.push('\n');
    }
    out
}
