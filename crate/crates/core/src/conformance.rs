//! Interface checks shared by bundled components and bridge-backed ones.

use thiserror::Error;

use crate::annotate::EntityTyper;
use crate::genfilter::{RelationPredictor, SimilarityScorer};
use crate::lm::{SequenceScorer, TokenId};

pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
#[error("{check}: {detail}")]
pub struct ConformanceError {
    pub check: &'static str,
    pub detail: String,
}

fn fail<T>(check: &'static str, detail: impl Into<String>) -> Result<T, ConformanceError> {
    Err(ConformanceError {
        check,
        detail: detail.into(),
    })
}

pub const TEXTS: [&str; 6] = [
    "<re> insulin <er> increases <el> GLUT4 <le> translocation",
    "insulin increases glucose uptake in adipocytes",
    "ATP depletion inhibits uracil transport",
    "the proton gradient drives uracil exit",
    "",
    "ABA induces RAB-16 mRNA expression",
];

/// (text, regulator, regulated, expected label)
pub const RELATION_CASES: [(&str, &str, &str, Option<&str>); 4] = [
    ("A inhibits B", "A", "B", Some("inhibits")),
    ("A activates B", "A", "B", Some("activates")),
    ("A binds B", "A", "B", None),
    ("ABA induces RAB-16 expression", "ABA", "RAB-16", None),
];

/// (surface, context, expected label)
pub const TYPER_CASES: [(&str, &str, Option<&str>); 3] = [
    ("ATP", "cellular ATP content", Some("SIMPLE_CHEMICAL")),
    ("insulin", "insulin signalling", None),
    ("zz-unknown-entity", "", None),
];

/// Prefixes of length 0 to 3 over the first few ordinary tokens.
pub fn default_probes(m: &dyn SequenceScorer) -> Vec<Vec<TokenId>> {
    let special = |t: TokenId| t == m.eos() || Some(t) == m.unk();
    let ordinary: Vec<TokenId> = (0..m.vocab().len() as TokenId).filter(|t| !special(*t)).take(4).collect();
    let mut probes = vec![Vec::new()];
    for (i, t) in ordinary.iter().enumerate() {
        probes.push(vec![*t]);
        probes.push(ordinary.iter().cycle().skip(i).take(3).copied().collect());
    }
    probes
}

pub fn check_scorer(m: &dyn SequenceScorer, probes: &[Vec<TokenId>]) -> Result<(), ConformanceError> {
    let n = m.vocab().len();
    if n == 0 || m.eos() as usize >= n {
        return fail("vocabulary", "eos outside a non-empty vocabulary");
    }
    for p in probes {
        let a = m.logprobs(p).or_else(|e| fail("logprobs", e.to_string()))?;
        if a.len() != n {
            return fail("length", format!("{} scores for {n} tokens", a.len()));
        }
        if a.iter().any(|x| x.is_nan() || *x > 0.0) {
            return fail("range", format!("prefix {p:?}"));
        }
        let mass: f64 = a.iter().map(|x| x.exp()).sum();
        if (mass - 1.0).abs() > TOLERANCE {
            return fail("normalization", format!("prefix {p:?} sums to {mass}"));
        }
        let b = m.logprobs(p).or_else(|e| fail("logprobs", e.to_string()))?;
        if a != b {
            return fail("determinism", format!("prefix {p:?}"));
        }
    }
    Ok(())
}

pub fn check_similarity(s: &dyn SimilarityScorer, texts: &[&str]) -> Result<(), ConformanceError> {
    let score = |a: &str, b: &str| s.score(a, b).or_else(|e| fail("score", e.to_string()));
    for a in texts {
        let own = score(a, a)?;
        for b in texts {
            let ab = score(a, b)?;
            if !(0.0..=1.0).contains(&ab) {
                return fail("range", format!("{a:?} vs {b:?}: {ab}"));
            }
            if (ab - score(b, a)?).abs() > 1e-9 {
                return fail("symmetry", format!("{a:?} vs {b:?}"));
            }
            if ab != score(a, b)? {
                return fail("determinism", format!("{a:?} vs {b:?}"));
            }
            if ab > own + 1e-9 {
                return fail("self-similarity", format!("{a:?} is closer to {b:?} than to itself"));
            }
        }
    }
    Ok(())
}

pub fn check_relation(
    p: &dyn RelationPredictor,
    cases: &[(&str, &str, &str, Option<&str>)],
) -> Result<(), ConformanceError> {
    let labels = p.labels();
    if labels.is_empty() {
        return fail("labels", "empty label set");
    }
    for (text, e1, e2, expected) in cases {
        let a = p.predict(text, e1, e2).or_else(|e| fail("predict", e.to_string()))?;
        if !labels.contains(&a) {
            return fail("closed set", format!("{a:?} not in {labels:?}"));
        }
        if p.predict(text, e1, e2).or_else(|e| fail("predict", e.to_string()))? != a {
            return fail("determinism", *text);
        }
        if let Some(x) = expected {
            if a != *x {
                return fail("expected", format!("{text:?}: got {a:?}, want {x:?}"));
            }
        }
    }
    Ok(())
}

pub fn check_typer(t: &dyn EntityTyper, cases: &[(&str, &str, Option<&str>)]) -> Result<(), ConformanceError> {
    let labels = t.labels();
    for (surface, context, expected) in cases {
        let a = t.type_of(surface, context);
        if a != t.type_of(surface, context) {
            return fail("determinism", *surface);
        }
        if let Some(l) = &a {
            if !labels.contains(l) {
                return fail("closed set", format!("{l:?} not declared"));
            }
        }
        if let Some(x) = expected {
            if a.as_deref() != Some(*x) {
                return fail("expected", format!("{surface:?}: got {a:?}, want {x:?}"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::LexiconTyper;
    use crate::genfilter::{KeywordRelationPredictor, TfCosine};
    use crate::lm::{tokenize, NGramLM};

    #[test]
    fn bundled_components_conform() {
        let lm = NGramLM::train(TEXTS.iter().map(|t| tokenize(t)), 3, 0.4).unwrap();
        check_scorer(&lm, &default_probes(&lm)).unwrap();
        check_similarity(&TfCosine, &TEXTS).unwrap();
        check_relation(&KeywordRelationPredictor::bundled(), &RELATION_CASES).unwrap();
        check_typer(&LexiconTyper::bundled(), &TYPER_CASES).unwrap();
    }

    struct Unnormalized;

    impl SequenceScorer for Unnormalized {
        fn vocab(&self) -> &crate::lm::Vocab {
            static V: std::sync::OnceLock<crate::lm::Vocab> = std::sync::OnceLock::new();
            V.get_or_init(|| crate::lm::Vocab::new(vec!["</s>".into(), "a".into()]))
        }
        fn eos(&self) -> TokenId {
            0
        }
        fn logprobs(&self, _: &[TokenId]) -> Result<Vec<f64>, crate::lm::LmError> {
            Ok(vec![0.5f64.ln(), 0.49f64.ln()])
        }
    }

    #[test]
    fn detects_unnormalized_scorer() {
        let e = check_scorer(&Unnormalized, &[vec![]]).unwrap_err();
        assert_eq!(e.check, "normalization");
    }
}
