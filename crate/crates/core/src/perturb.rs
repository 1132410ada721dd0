//! Rule-based counterfactual generators.
//!
//! Every generator takes a marked conclusion and returns a new one that is no
//! longer supported by the premise, or `None` when the rule has nothing to act on.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{
    self, parse_tsv, AnnotateError, EntityPool, EntityTyper, InstanceTyper, LexiconTyper,
};
use crate::corpus::{MarkedConclusion, Role, Span, SupportingSet};
use crate::extract::ExtractionResult;
use crate::seed;

const BUNDLED_ANTONYMS: &str = include_str!("../resources/antonyms.tsv");
const BUNDLED_NEGATION: &str = include_str!("../resources/negation_rules.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PerturbationKind {
    #[serde(rename = "SEN")]
    Sen,
    #[serde(rename = "SEP")]
    Sep,
    #[serde(rename = "SRE")]
    Sre,
    #[serde(rename = "SREO")]
    Sreo,
    #[serde(rename = "VNeg")]
    VNeg,
    #[serde(rename = "SN")]
    Sn,
    #[serde(rename = "LPR")]
    Lpr,
    #[serde(rename = "GEN")]
    Gen,
    #[serde(rename = "GEN-ND")]
    GenNd,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 9] = [
        Self::Sen,
        Self::Sep,
        Self::Sre,
        Self::Sreo,
        Self::VNeg,
        Self::Sn,
        Self::Lpr,
        Self::GenNd,
        Self::Gen,
    ];

    pub const RULE_BASED: [PerturbationKind; 7] = [
        Self::Sen,
        Self::Sep,
        Self::Sre,
        Self::Sreo,
        Self::VNeg,
        Self::Sn,
        Self::Lpr,
    ];

    pub const GENERATED: [PerturbationKind; 2] = [Self::GenNd, Self::Gen];

    pub fn is_rule_based(self) -> bool {
        !matches!(self, Self::Gen | Self::GenNd)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sen => "SEN",
            Self::Sep => "SEP",
            Self::Sre => "SRE",
            Self::Sreo => "SREO",
            Self::VNeg => "VNeg",
            Self::Sn => "SN",
            Self::Lpr => "LPR",
            Self::Gen => "GEN",
            Self::GenNd => "GEN-ND",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown perturbation kind {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("rule {0:?} maps to {1:?} but its inverse maps elsewhere")]
    NotInvertible(String, String),
    #[error(transparent)]
    Parse(#[from] AnnotateError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Word-anchored, case-insensitive phrase rewrite rules.
#[derive(Debug, Clone)]
struct PhraseRules {
    /// Sorted by pattern length, longest first.
    rules: Vec<(Vec<char>, String)>,
}

/// A rule hit in a text.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Site {
    span: Span,
    replacement: String,
}

impl PhraseRules {
    /// Closes the rule set under inversion.
    fn symmetric(pairs: Vec<(String, String)>) -> Result<Self, RuleError> {
        let mut map: HashMap<String, String> = HashMap::new();
        let mut order: Vec<String> = Vec::new();
        for (a, b) in pairs {
            let (a, b) = (a.to_lowercase(), b.to_lowercase());
            for (from, to) in [(&a, &b), (&b, &a)] {
                match map.get(from) {
                    Some(existing) if existing != to => {
                        return Err(RuleError::NotInvertible(from.clone(), to.clone()))
                    }
                    Some(_) => {}
                    None => {
                        map.insert(from.clone(), to.clone());
                        order.push(from.clone());
                    }
                }
            }
        }
        let mut rules: Vec<(Vec<char>, String)> = order
            .into_iter()
            .map(|k| {
                let v = map[&k].clone();
                (k.chars().collect(), v)
            })
            .collect();
        rules.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
        Ok(PhraseRules { rules })
    }

    fn len(&self) -> usize {
        self.rules.len()
    }

    fn get(&self, term: &str) -> Option<&str> {
        let key: Vec<char> = term.to_lowercase().chars().collect();
        self.rules
            .iter()
            .find(|(p, _)| *p == key)
            .map(|(_, r)| r.as_str())
    }

    /// Non-overlapping hits, scanning left to right and taking the longest rule at each word start.
    fn sites(&self, text: &str, exclude: &[Span]) -> Vec<Site> {
        let chars: Vec<char> = text.chars().collect();
        let lower: Vec<char> = chars.iter().map(|c| lower_char(*c)).collect();
        let n = chars.len();
        let mut out = Vec::new();
        let mut i = 0;
        while i < n {
            let word_start = chars[i].is_alphanumeric() && (i == 0 || !chars[i - 1].is_alphanumeric());
            if !word_start {
                i += 1;
                continue;
            }
            let hit = self.rules.iter().find(|(p, _)| {
                let end = i + p.len();
                end <= n && lower[i..end] == p[..] && (end == n || !chars[end].is_alphanumeric())
            });
            match hit {
                Some((p, repl)) => {
                    let span = Span::new(i, i + p.len());
                    if !exclude.iter().any(|e| e.overlaps(&span)) {
                        out.push(Site {
                            span,
                            replacement: match_case(chars[i], repl),
                        });
                    }
                    i += p.len();
                }
                None => i += 1,
            }
        }
        out
    }
}

fn lower_char(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

fn match_case(original_first: char, replacement: &str) -> String {
    if !original_first.is_uppercase() {
        return replacement.to_string();
    }
    let mut it = replacement.chars();
    match it.next() {
        Some(f) => f.to_uppercase().chain(it).collect(),
        None => String::new(),
    }
}

/// Symmetric map between interaction terms and their antonyms.
#[derive(Debug, Clone)]
pub struct AntonymLexicon {
    rules: PhraseRules,
}

impl AntonymLexicon {
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_ANTONYMS).expect("bundled antonym lexicon is well formed")
    }

    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self, RuleError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let pairs = pairs.into_iter().map(|(a, b)| (a.into(), b.into())).collect();
        Ok(AntonymLexicon {
            rules: PhraseRules::symmetric(pairs)?,
        })
    }

    pub fn from_tsv(text: &str) -> Result<Self, RuleError> {
        Self::from_pairs(parse_tsv(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, RuleError> {
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }

    pub fn antonym(&self, term: &str) -> Option<&str> {
        self.rules.get(term)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.len() == 0
    }
}

/// Polarity flips for predicates (`is` / `is not`, `inhibits` / `does not inhibit`, ...).
#[derive(Debug, Clone)]
pub struct NegationRules {
    rules: PhraseRules,
}

impl NegationRules {
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_NEGATION).expect("bundled negation rules are well formed")
    }

    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self, RuleError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let pairs = pairs.into_iter().map(|(a, b)| (a.into(), b.into())).collect();
        Ok(NegationRules {
            rules: PhraseRules::symmetric(pairs)?,
        })
    }

    pub fn from_tsv(text: &str) -> Result<Self, RuleError> {
        Self::from_pairs(parse_tsv(text)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, RuleError> {
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }

    pub fn flip(&self, phrase: &str) -> Option<&str> {
        self.rules.get(phrase)
    }
}

fn entity_spans(c: &MarkedConclusion) -> [Span; 2] {
    [c.regulator().span, c.regulated().span]
}

fn differs(out: MarkedConclusion, input: &MarkedConclusion) -> Option<MarkedConclusion> {
    (out.render() != input.render()).then_some(out)
}

/// Exchanges the entity names; each marker stays where it was.
pub fn apply_sen(c: &MarkedConclusion) -> MarkedConclusion {
    c.with_surfaces(&c.regulated().surface, &c.regulator().surface)
        .expect("swapping two valid surfaces keeps the conclusion valid")
}

/// Moves each entity, with its markers, to the other entity's position.
pub fn apply_sep(c: &MarkedConclusion) -> MarkedConclusion {
    c.with_positions_swapped()
        .expect("swapping positions keeps the conclusion valid")
}

fn replace_role(c: &MarkedConclusion, role: Role, surface: &str) -> Option<MarkedConclusion> {
    let (reg, regd) = match role {
        Role::Regulator => (surface, c.regulated().surface.as_str()),
        Role::Regulated => (c.regulator().surface.as_str(), surface),
        Role::None => return None,
    };
    c.with_surfaces(reg, regd).ok()
}

/// Picks a role with candidates, then a candidate, from one seeded stream.
///
/// Fails only when neither main entity can be typed.
fn swap_with<F>(
    c: &MarkedConclusion,
    seed: u64,
    candidates: F,
) -> Result<Option<MarkedConclusion>, AnnotateError>
where
    F: Fn(Role) -> Result<Vec<String>, AnnotateError>,
{
    let mut options: Vec<(Role, Vec<String>)> = Vec::new();
    let mut errors = Vec::new();
    for role in [Role::Regulator, Role::Regulated] {
        match candidates(role) {
            Ok(v) if !v.is_empty() => options.push((role, v)),
            Ok(_) => {}
            Err(e) => errors.push(e),
        }
    }
    if errors.len() == 2 {
        return Err(errors.remove(0));
    }
    if options.is_empty() {
        return Ok(None);
    }
    let mut rng = seed::rng(seed);
    let (role, cands) = &options[rng.gen_range(0..options.len())];
    let pick = &cands[rng.gen_range(0..cands.len())];
    Ok(replace_role(c, *role, pick).and_then(|out| differs(out, c)))
}

/// Swaps a main entity for a same-type entity from the supporting set.
pub fn apply_sre(
    c: &MarkedConclusion,
    s: &SupportingSet,
    typer: &dyn EntityTyper,
    seed: u64,
) -> Result<Option<MarkedConclusion>, AnnotateError> {
    swap_with(c, seed, |role| annotate::in_text_candidates(c, s, role, typer))
}

/// Swaps a main entity for a same-type pool entity absent from the instance.
pub fn apply_sreo(
    c: &MarkedConclusion,
    s: &SupportingSet,
    pool: &EntityPool,
    typer: &dyn EntityTyper,
    seed: u64,
) -> Result<Option<MarkedConclusion>, AnnotateError> {
    swap_with(c, seed, |role| {
        annotate::out_of_text_candidates(c, s, pool, role, typer)
    })
}

/// Flips the polarity of one uniformly chosen predicate.
pub fn apply_vneg(c: &MarkedConclusion, rules: &NegationRules, seed: u64) -> Option<MarkedConclusion> {
    let sites = rules.rules.sites(c.plain_text(), &entity_spans(c));
    let site = annotate::choose(&sites, seed)?;
    differs(c.splice(site.span, &site.replacement).ok()?, c)
}

/// Replaces one interaction term with its antonym.
pub fn apply_lpr(c: &MarkedConclusion, lex: &AntonymLexicon, seed: u64) -> Option<MarkedConclusion> {
    let sites = lex.rules.sites(c.plain_text(), &entity_spans(c));
    let site = annotate::choose(&sites, seed)?;
    differs(c.splice(site.span, &site.replacement).ok()?, c)
}

/// A numeral found in text.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberToken {
    pub span: Span,
    pub text: String,
    pub value: f64,
}

const NUMBER_BOUNDARY: &str = "([{/=~<>≈±,;:";

fn is_sign(c: char) -> bool {
    matches!(c, '-' | '+' | '−')
}

/// Integers, decimals and signed values that stand on their own.
///
/// A numeral must follow whitespace or an opening bracket/operator, and the
/// rest of its whitespace-delimited token may carry a unit but no further
/// digits and no hyphenated continuation, so `RAB-16`, `3T3`, and `2,4-` are
/// not numbers while `-80 mV`, `7.30` and `5mM` are.
pub fn find_numbers(text: &str, exclude: &[Span]) -> Vec<NumberToken> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let boundary_ok = |i: usize| i == 0 || chars[i - 1].is_whitespace() || NUMBER_BOUNDARY.contains(chars[i - 1]);
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let signed = is_sign(chars[i]) && i + 1 < n && chars[i + 1].is_ascii_digit();
        if !(signed || chars[i].is_ascii_digit()) || !boundary_ok(i) {
            i += 1;
            continue;
        }
        let start = i;
        let mut j = if signed { i + 1 } else { i };
        while j < n && chars[j].is_ascii_digit() {
            j += 1;
        }
        if j + 1 < n && chars[j] == '.' && chars[j + 1].is_ascii_digit() {
            j += 1;
            while j < n && chars[j].is_ascii_digit() {
                j += 1;
            }
        }
        let mut k = j;
        while k < n && !chars[k].is_whitespace() {
            k += 1;
        }
        let suffix = &chars[j..k];
        let trailing_punct = |c: &char| matches!(c, '.' | ',' | ';' | ':' | ')' | ']' | '%');
        let suffix_ok = !suffix.iter().any(|c| c.is_ascii_digit())
            && suffix.first().map_or(true, |c| !is_sign(*c))
            && !(suffix.len() >= 2 && suffix[0] == ',' && !suffix.iter().all(trailing_punct));
        let span = Span::new(start, j);
        if suffix_ok && !exclude.iter().any(|e| e.overlaps(&span)) {
            let raw: String = chars[start..j].iter().collect();
            if let Ok(value) = raw.replace('−', "-").parse::<f64>() {
                out.push(NumberToken { span, text: raw, value });
            }
        }
        i = k.max(i + 1);
    }
    out
}

/// Replaces one numeral of the conclusion with a different one from the supporting set.
pub fn apply_sn(c: &MarkedConclusion, s: &SupportingSet, seed: u64) -> Option<MarkedConclusion> {
    let mut pool: Vec<NumberToken> = Vec::new();
    for sentence in &s.sentences {
        for t in find_numbers(&sentence.text, &[]) {
            if !pool.iter().any(|p| p.value == t.value) {
                pool.push(t);
            }
        }
    }
    let sites: Vec<(NumberToken, Vec<&NumberToken>)> = find_numbers(c.plain_text(), &entity_spans(c))
        .into_iter()
        .map(|t| {
            let cands = pool.iter().filter(|p| p.value != t.value).collect::<Vec<_>>();
            (t, cands)
        })
        .filter(|(_, cands)| !cands.is_empty())
        .collect();
    if sites.is_empty() {
        return None;
    }
    let mut rng = seed::rng(seed);
    let (site, cands) = &sites[rng.gen_range(0..sites.len())];
    let pick = cands[rng.gen_range(0..cands.len())];
    differs(c.splice(site.span, &pick.text).ok()?, c)
}

/// Everything the rule-based generators read.
pub struct PerturbResources {
    pub typer: Box<dyn EntityTyper>,
    pub pool: EntityPool,
    pub negation: NegationRules,
    pub antonyms: AntonymLexicon,
}

impl PerturbResources {
    pub fn bundled(pool: EntityPool) -> Self {
        PerturbResources {
            typer: Box::new(LexiconTyper::bundled()),
            pool,
            negation: NegationRules::bundled(),
            antonyms: AntonymLexicon::bundled(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub hypothesis: MarkedConclusion,
}

/// Seed for one kind within one instance.
pub fn kind_seed(base: u64, instance_id: &str, kind: PerturbationKind) -> u64 {
    seed::derive_seed(base, &[instance_id, kind.as_str()])
}

/// Runs one rule-based generator on an extracted instance.
pub fn apply_kind(
    r: &ExtractionResult,
    kind: PerturbationKind,
    res: &PerturbResources,
    seed: u64,
) -> Option<MarkedConclusion> {
    let c = &r.conclusion;
    let s = &r.supporting;
    let typer = InstanceTyper::new(r, res.typer.as_ref());
    match kind {
        PerturbationKind::Sen => Some(apply_sen(c)),
        PerturbationKind::Sep => Some(apply_sep(c)),
        PerturbationKind::Sre => apply_sre(c, s, &typer, seed).ok().flatten(),
        PerturbationKind::Sreo => apply_sreo(c, s, &res.pool, &typer, seed).ok().flatten(),
        PerturbationKind::VNeg => apply_vneg(c, &res.negation, seed),
        PerturbationKind::Sn => apply_sn(c, s, seed),
        PerturbationKind::Lpr => apply_lpr(c, &res.antonyms, seed),
        PerturbationKind::Gen | PerturbationKind::GenNd => None,
    }
}

/// All applicable rule-based perturbations of one instance, in kind order.
pub fn perturb_instance(
    r: &ExtractionResult,
    res: &PerturbResources,
    kinds: &[PerturbationKind],
    base_seed: u64,
) -> Vec<Perturbation> {
    let positive = r.conclusion.render();
    PerturbationKind::RULE_BASED
        .into_iter()
        .filter(|k| kinds.contains(k))
        .filter_map(|kind| {
            let out = apply_kind(r, kind, res, kind_seed(base_seed, &r.abstract_id, kind))?;
            (out.render() != positive).then_some(Perturbation {
                kind,
                hypothesis: out,
            })
        })
        .collect()
}

/// Kinds that yield an output for this instance. `generated` lists the
/// generation kinds whose candidates passed their filters.
pub fn applicability(
    r: &ExtractionResult,
    res: &PerturbResources,
    base_seed: u64,
    generated: &[PerturbationKind],
) -> BTreeSet<PerturbationKind> {
    let mut set: BTreeSet<_> = perturb_instance(r, res, &PerturbationKind::RULE_BASED, base_seed)
        .into_iter()
        .map(|p| p.kind)
        .collect();
    set.insert(PerturbationKind::Sen);
    set.insert(PerturbationKind::Sep);
    set.extend(generated.iter().copied().filter(|k| !k.is_rule_based()));
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_marked, Sentence};

    fn supporting(sentences: &[&str]) -> SupportingSet {
        SupportingSet {
            sentences: sentences
                .iter()
                .enumerate()
                .map(|(index, t)| Sentence {
                    index,
                    text: t.to_string(),
                })
                .collect(),
            mentions: vec![],
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in PerturbationKind::ALL {
            assert_eq!(k.as_str().parse::<PerturbationKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.as_str()));
        }
    }

    #[test]
    fn sen_and_sep_are_involutions() {
        let c = parse_marked("the <el> ABA <le>-induced the <re> pH <er>(i) increase").unwrap();
        assert_eq!(
            apply_sen(&c).render(),
            "the <el> pH <le>-induced the <re> ABA <er>(i) increase"
        );
        assert_eq!(
            apply_sep(&c).render(),
            "the <re> pH <er>-induced the <el> ABA <le>(i) increase"
        );
        assert_eq!(apply_sen(&apply_sen(&c)), c);
        assert_eq!(apply_sep(&apply_sep(&c)), c);
    }

    #[test]
    fn sep_on_adjacent_entities_keeps_whitespace() {
        let c = parse_marked("x <re> Ab <er>  <el> Cde <le> y").unwrap();
        assert_eq!(c.plain_text(), "x Ab  Cde y");
        assert_eq!(apply_sep(&c).render(), "x <el> Cde <le>  <re> Ab <er> y");
    }

    #[test]
    fn vneg_flips_both_directions() {
        let rules = NegationRules::bundled();
        let c = parse_marked("<re> A <er> is correlated with <el> B <le>").unwrap();
        assert_eq!(
            apply_vneg(&c, &rules, 0).unwrap().render(),
            "<re> A <er> is not correlated with <el> B <le>"
        );
        let c = parse_marked("<re> A <er> and <el> B <le> exist, it is not sufficient").unwrap();
        assert_eq!(
            apply_vneg(&c, &rules, 0).unwrap().render(),
            "<re> A <er> and <el> B <le> exist, it is sufficient"
        );
        let c = parse_marked("<re> A <er> inhibits <el> B <le>").unwrap();
        let out = apply_vneg(&c, &rules, 0).unwrap();
        assert_eq!(out.render(), "<re> A <er> does not inhibit <el> B <le>");
        assert_eq!(apply_vneg(&out, &rules, 0).unwrap(), c);
        let c = parse_marked("<re> A <er> and <el> B <le> together").unwrap();
        assert_eq!(apply_vneg(&c, &rules, 0), None);
    }

    #[test]
    fn vneg_preserves_capitalisation() {
        let rules = NegationRules::bundled();
        let c = parse_marked("Is <re> A <er> near <el> B <le>?").unwrap();
        assert_eq!(
            apply_vneg(&c, &rules, 0).unwrap().render(),
            "Is not <re> A <er> near <el> B <le>?"
        );
    }

    #[test]
    fn rules_must_be_invertible() {
        assert!(matches!(
            NegationRules::from_pairs([("is", "is not"), ("is not", "isn't")]),
            Err(RuleError::NotInvertible(..))
        ));
    }

    #[test]
    fn lpr_replaces_terms() {
        let lex = AntonymLexicon::bundled();
        assert_eq!(lex.antonym("promotion"), Some("inhibition"));
        assert_eq!(lex.antonym("Inhibition"), Some("promotion"));
        let c = parse_marked("Inhibition of <re> A <er> by <el> B <le>").unwrap();
        assert_eq!(
            apply_lpr(&c, &lex, 5).unwrap().render(),
            "Promotion of <re> A <er> by <el> B <le>"
        );
        let c = parse_marked("<re> A <er> meets <el> B <le>").unwrap();
        assert_eq!(apply_lpr(&c, &lex, 5), None);
    }

    #[test]
    fn lpr_skips_terms_inside_entities() {
        let lex = AntonymLexicon::from_pairs([("increase", "decrease")]).unwrap();
        let c = parse_marked("<re> increase factor <er> binds <el> B <le>").unwrap();
        assert_eq!(apply_lpr(&c, &lex, 0), None);
    }

    #[test]
    fn numbers_are_detected_with_boundaries() {
        let got: Vec<String> = find_numbers(
            "a gradient of -80 mV, from 7.11 to 7.30 within 45 min; RAB-16 and 3T3 and 5,5-dimethyl and 5mM (12)",
            &[],
        )
        .into_iter()
        .map(|t| t.text)
        .collect();
        assert_eq!(got, vec!["-80", "7.11", "7.30", "45", "5", "12"]);
    }

    #[test]
    fn sn_swaps_with_supporting_number() {
        let c = parse_marked("<re> uracil <er> exit creates a gradient of -80 mV against <el> proton <le>")
            .unwrap();
        let s = supporting(&["DNP lowered the gradient to about -30 mV.", "It was -80 mV before."]);
        let out = apply_sn(&c, &s, 11).unwrap();
        assert_eq!(
            out.render(),
            "<re> uracil <er> exit creates a gradient of -30 mV against <el> proton <le>"
        );
    }

    #[test]
    fn sn_needs_numbers_on_both_sides() {
        let c = parse_marked("<re> A <er> binds <el> B <le>").unwrap();
        let s = supporting(&["We used 5 mM."]);
        assert_eq!(apply_sn(&c, &s, 1), None);
        let c = parse_marked("<re> A <er> binds <el> B <le> at 5 mM").unwrap();
        assert_eq!(apply_sn(&c, &s, 1), None);
    }

    #[test]
    fn sn_ignores_numbers_inside_entities() {
        let c = parse_marked("<re> IL-6 <er> binds <el> p53 <le> at 5 mM").unwrap();
        let s = supporting(&["We used 6 and 53 units."]);
        let out = apply_sn(&c, &s, 2).unwrap();
        assert!(out.render().starts_with("<re> IL-6 <er> binds <el> p53 <le> at "));
        assert_ne!(out.render(), c.render());
    }
}
