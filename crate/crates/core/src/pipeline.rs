//! Stage functions over whole corpora, parallel over instances.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{self, InstanceTyper};
use crate::corpus::{Abstract, Role};
use crate::dataset::{Group, Negative};
use crate::extract::{split_abstract, ExtractionResult, PhraseTable, PremiseBounds};
use crate::genfilter::{filter_gen, filter_gnd, FilterConfig, FilterError, GndScheme, RelationPredictor, SimilarityScorer};
use crate::lm::{self, SequenceScorer};
use crate::neurologic::{
    build_ng_constraints, build_sen_constraints, build_sre_constraints, decode, ConstraintSet, DecodeError,
    DecoderConfig,
};
use crate::perturb::{perturb_instance, PerturbResources, PerturbationKind};
use crate::seed;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("{id}: {source}")]
    Decode { id: String, source: DecodeError },
    #[error("{id}: {source}")]
    Filter { id: String, source: FilterError },
    #[error("candidate for unknown abstract {0:?}")]
    UnknownAbstract(String),
}

/// Runs `f` on a pool of `jobs` threads; zero means one per core.
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Extraction results in corpus order.
pub fn extract_all(abstracts: &[Abstract], table: &PhraseTable, bounds: PremiseBounds) -> Vec<ExtractionResult> {
    abstracts
        .par_iter()
        .filter_map(|a| split_abstract(a, table, bounds))
        .collect()
}

/// One group per result, carrying every applicable rule-based negative.
pub fn perturb_all(
    results: &[ExtractionResult],
    res: &PerturbResources,
    kinds: &[PerturbationKind],
    base_seed: u64,
) -> Vec<Group> {
    results
        .par_iter()
        .map(|r| {
            let ps = perturb_instance(r, res, kinds, base_seed);
            Group::from_extraction(r, &ps, std::iter::empty())
        })
        .collect()
}

/// Adds generated negatives to the groups of their source abstracts.
pub fn merge_generated(groups: &mut [Group], generated: Vec<GeneratedNegative>) -> Result<(), PipelineError> {
    let index: BTreeMap<String, usize> = groups
        .iter()
        .enumerate()
        .map(|(i, g)| (g.source_abstract_id.clone(), i))
        .collect();
    for n in generated {
        let i = *index
            .get(&n.abstract_id)
            .ok_or_else(|| PipelineError::UnknownAbstract(n.abstract_id.clone()))?;
        let g = &mut groups[i];
        if n.hypothesis != g.positive && !g.negatives.iter().any(|x| x.kind == n.kind && x.hypothesis == n.hypothesis) {
            g.negatives.push(Negative {
                kind: n.kind,
                hypothesis: n.hypothesis,
            });
        }
    }
    for g in groups.iter_mut() {
        g.negatives.sort_by(|a, b| (a.kind, &a.hypothesis).cmp(&(b.kind, &b.hypothesis)));
    }
    Ok(())
}

/// Premise tokens closed by [`lm::SEP`], the prompt the generator continues.
pub fn prompt_tokens(r: &ExtractionResult) -> Vec<String> {
    let mut t = lm::tokenize(&r.premise());
    t.push(lm::SEP.to_string());
    t
}

/// Prompt followed by the marked conclusion, the training text of the generator.
pub fn lm_training_sequences(results: &[ExtractionResult]) -> Vec<Vec<String>> {
    results
        .iter()
        .map(|r| {
            let mut t = prompt_tokens(r);
            t.extend(lm::tokenize(&r.conclusion.render()));
            t
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub abstract_id: String,
    pub kind: PerturbationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<GndScheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintSet>,
    pub text: String,
    pub model_score: f64,
    pub fully_satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedNegative {
    pub abstract_id: String,
    pub kind: PerturbationKind,
    pub hypothesis: String,
}

/// Picks a role and a same-type replacement, in-text entities first.
fn sre_replacement(r: &ExtractionResult, res: &PerturbResources, seed: u64) -> Option<(Role, String)> {
    let typer = InstanceTyper::new(r, res.typer.as_ref());
    let (c, s) = (&r.conclusion, &r.supporting);
    let mut options = Vec::new();
    for role in [Role::Regulator, Role::Regulated] {
        let mut cands = annotate::in_text_candidates(c, s, role, &typer).unwrap_or_default();
        if cands.is_empty() {
            cands = annotate::out_of_text_candidates(c, s, &res.pool, role, &typer).unwrap_or_default();
        }
        options.extend(cands.into_iter().map(|x| (role, x)));
    }
    if options.is_empty() {
        return None;
    }
    use rand::Rng;
    let i = seed::rng(seed).gen_range(0..options.len());
    Some(options.swap_remove(i))
}

/// Generation candidates for one instance: unconstrained, then one run per scheme.
pub fn decode_instance(
    r: &ExtractionResult,
    scorer: &dyn SequenceScorer,
    cfg: &DecoderConfig,
    res: &PerturbResources,
    per_run: usize,
    base_seed: u64,
) -> Result<Vec<Candidate>, PipelineError> {
    let vocab = scorer.vocab();
    let prompt = vocab.encode(&prompt_tokens(r), scorer.unk());
    let mut runs: Vec<(PerturbationKind, Option<GndScheme>, ConstraintSet)> =
        vec![(PerturbationKind::Gen, None, ConstraintSet::default())];
    let c = &r.conclusion;
    runs.push((PerturbationKind::GenNd, Some(GndScheme::Sen), build_sen_constraints(c)));
    let sre_seed = seed::derive_seed(base_seed, &[&r.abstract_id, "GEN-ND-SRE"]);
    if let Some((role, replacement)) = sre_replacement(r, res, sre_seed) {
        let cs = build_sre_constraints(c, &replacement, role).map_err(|source| PipelineError::Decode {
            id: r.abstract_id.clone(),
            source,
        })?;
        runs.push((PerturbationKind::GenNd, Some(GndScheme::Sre), cs));
    }
    runs.push((PerturbationKind::GenNd, Some(GndScheme::Ng), build_ng_constraints(c)));

    let mut out = Vec::new();
    for (kind, scheme, cs) in runs {
        let results = match decode(scorer, &cs, cfg, &prompt) {
            Ok(x) => x,
            Err(DecodeError::NoHypothesis) => continue,
            Err(source) => {
                return Err(PipelineError::Decode {
                    id: r.abstract_id.clone(),
                    source,
                })
            }
        };
        out.extend(results.into_iter().take(per_run).map(|d| Candidate {
            abstract_id: r.abstract_id.clone(),
            kind,
            scheme,
            constraints: scheme.map(|_| cs.clone()),
            text: d.text,
            model_score: d.model_score,
            fully_satisfied: d.fully_satisfied,
        }));
    }
    Ok(out)
}

pub fn decode_all(
    results: &[ExtractionResult],
    scorer: &dyn SequenceScorer,
    cfg: &DecoderConfig,
    res: &PerturbResources,
    per_run: usize,
    base_seed: u64,
) -> Result<Vec<Candidate>, PipelineError> {
    let per: Vec<Vec<Candidate>> = results
        .par_iter()
        .map(|r| decode_instance(r, scorer, cfg, res, per_run, base_seed))
        .collect::<Result<_, _>>()?;
    Ok(per.into_iter().flatten().collect())
}

pub struct Judges<'a> {
    pub quality: &'a dyn SimilarityScorer,
    pub similarity: &'a dyn SimilarityScorer,
    pub relation: &'a dyn RelationPredictor,
    pub config: FilterConfig,
}

/// Accepted candidates; for each abstract, run and scheme the first accepted one wins.
pub fn filter_all(
    results: &[ExtractionResult],
    candidates: &[Candidate],
    judges: &Judges<'_>,
) -> Result<Vec<GeneratedNegative>, PipelineError> {
    let by_id: BTreeMap<&str, &ExtractionResult> = results.iter().map(|r| (r.abstract_id.as_str(), r)).collect();
    let verdicts: Vec<bool> = candidates
        .par_iter()
        .map(|cand| {
            let r = by_id
                .get(cand.abstract_id.as_str())
                .ok_or_else(|| PipelineError::UnknownAbstract(cand.abstract_id.clone()))?;
            let wrap = |source| PipelineError::Filter {
                id: cand.abstract_id.clone(),
                source,
            };
            match (cand.kind, cand.scheme, &cand.constraints) {
                (PerturbationKind::Gen, _, _) => {
                    match filter_gen(&cand.text, &r.conclusion, judges.quality, judges.relation, &judges.config) {
                        Err(FilterError::MissingEntities(_)) => Ok(false),
                        other => other.map_err(wrap),
                    }
                }
                (PerturbationKind::GenNd, Some(scheme), Some(cs)) => {
                    filter_gnd(&cand.text, &r.conclusion, scheme, cs, judges.similarity, &judges.config).map_err(wrap)
                }
                _ => Ok(false),
            }
        })
        .collect::<Result<_, PipelineError>>()?;
    let mut taken = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for (cand, ok) in candidates.iter().zip(verdicts) {
        let key = (cand.abstract_id.clone(), cand.kind, cand.scheme);
        if ok && !taken.contains(&key) {
            taken.insert(key);
            out.push(GeneratedNegative {
                abstract_id: cand.abstract_id.clone(),
                kind: cand.kind,
                hypothesis: cand.text.clone(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::EntityPool;
    use crate::genfilter::{KeywordRelationPredictor, TfCosine};
    use crate::lm::NGramLM;
    use crate::synth::{abstract_with, Features};

    fn results() -> Vec<ExtractionResult> {
        let f = Features {
            sre: true,
            ..Default::default()
        };
        let abstracts: Vec<_> = (0..6).map(|i| abstract_with(i, Some("we conclude that"), &f)).collect();
        extract_all(&abstracts, &PhraseTable::default(), PremiseBounds::default())
    }

    #[test]
    fn parallel_output_is_stable() {
        let rs = results();
        let res = PerturbResources::bundled(EntityPool::from_results(&rs));
        let one = with_jobs(1, || perturb_all(&rs, &res, &PerturbationKind::RULE_BASED, 5)).unwrap();
        let four = with_jobs(4, || perturb_all(&rs, &res, &PerturbationKind::RULE_BASED, 5)).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.len(), 6);
        assert!(one.iter().all(|g| g.applicable().contains(&PerturbationKind::Sre)));
    }

    #[test]
    fn decode_filter_merge() {
        let rs = results();
        let res = PerturbResources::bundled(EntityPool::from_results(&rs));
        let lm = NGramLM::train(lm_training_sequences(&rs), 3, 0.4).unwrap();
        let cfg = DecoderConfig {
            min_len: 5,
            max_len: 30,
            ..DecoderConfig::desk()
        };
        let cands = decode_all(&rs[..2], &lm, &cfg, &res, 2, 1).unwrap();
        assert!(cands.iter().any(|c| c.scheme == Some(GndScheme::Sen) && c.fully_satisfied));
        for c in cands.iter().filter(|c| c.scheme == Some(GndScheme::Ng)) {
            assert!(!c.constraints.as_ref().unwrap().evaluate_text(&c.text).violated);
        }
        let rel = KeywordRelationPredictor::bundled();
        let judges = Judges {
            quality: &TfCosine,
            similarity: &TfCosine,
            relation: &rel,
            config: FilterConfig::default(),
        };
        let accepted = filter_all(&rs, &cands, &judges).unwrap();
        assert!(accepted.iter().all(|a| a.kind == PerturbationKind::GenNd || a.kind == PerturbationKind::Gen));
        let mut groups = perturb_all(&rs, &res, &PerturbationKind::RULE_BASED, 1);
        let before: usize = groups.iter().map(|g| g.negatives.len()).sum();
        merge_generated(&mut groups, accepted.clone()).unwrap();
        let after: usize = groups.iter().map(|g| g.negatives.len()).sum();
        assert_eq!(after, before + accepted.len());
        let stray = GeneratedNegative {
            abstract_id: "nope".into(),
            kind: PerturbationKind::Gen,
            hypothesis: "x".into(),
        };
        assert!(matches!(merge_generated(&mut groups, vec![stray]), Err(PipelineError::UnknownAbstract(_))));
    }
}
