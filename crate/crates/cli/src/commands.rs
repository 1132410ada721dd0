use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use mechnli::annotate::{EntityPool, LexiconTyper};
use mechnli::corpus::{load_from_reader, CorpusError, LoadMode};
use mechnli::dataset::{self, applicability_histogram, DatasetError, DatasetStats, Group, NLIInstance, Split};
use mechnli::evalharness::{self, EvalError};
use mechnli::extract::{ExtractionResult, PhraseTable};
use mechnli::genfilter::{KeywordRelationPredictor, TfCosine};
use mechnli::lm::NGramLM;
use mechnli::perturb::{AntonymLexicon, NegationRules, PerturbResources, PerturbationKind};
use mechnli::pipeline::{self, Candidate, GeneratedNegative, Judges, PipelineError};

use crate::config::Config;
use crate::manifest::Manifest;
use crate::CliError;

fn schema(e: impl std::fmt::Display) -> CliError {
    CliError::Schema(e.to_string())
}

fn invariant(e: impl std::fmt::Display) -> CliError {
    CliError::Invariant(e.to_string())
}

/// Reads an input file; a missing one is a usage error.
fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))
}

fn parse_jsonl<T: DeserializeOwned>(bytes: &[u8], name: &str) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for (i, line) in bytes.lines().enumerate() {
        let line = line.map_err(|e| schema(format!("{name}:{}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| schema(format!("{name}:{}: {e}", i + 1)))?);
    }
    Ok(out)
}

fn to_jsonl<'a, T: Serialize + 'a>(items: impl IntoIterator<Item = &'a T>) -> Vec<u8> {
    let mut out = Vec::new();
    for x in items {
        serde_json::to_writer(&mut out, x).expect("records serialize");
        out.push(b'\n');
    }
    out
}

fn pipeline_error(e: PipelineError) -> CliError {
    match e {
        PipelineError::UnknownAbstract(_) => schema(e),
        _ => invariant(e),
    }
}

fn dataset_error(e: DatasetError) -> CliError {
    match e {
        DatasetError::SplitSizeMismatch { .. } | DatasetError::InvalidRatios => CliError::Usage(e.to_string()),
        DatasetError::Io(_) => invariant(e),
        _ => schema(e),
    }
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::Io(_) => invariant(e),
        _ => schema(e),
    }
}

fn jobs<R: Send>(cfg: &Config, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    pipeline::with_jobs(cfg.jobs()?, f).map_err(pipeline_error)
}

fn load_extracted(path: &Path, m: &mut Manifest) -> Result<Vec<ExtractionResult>, CliError> {
    let bytes = read(path)?;
    m.input("extracted", &bytes);
    let results: Vec<ExtractionResult> = parse_jsonl(&bytes, "extracted")?;
    let mut ids = BTreeSet::new();
    for r in &results {
        if !ids.insert(r.abstract_id.as_str()) {
            return Err(schema(format!("extracted: abstract {:?} occurs twice", r.abstract_id)));
        }
    }
    Ok(results)
}

fn resources(cfg: &Config, results: &[ExtractionResult], m: &mut Manifest) -> Result<PerturbResources, CliError> {
    let pool = match cfg.path("pool") {
        Some(p) => {
            m.input("pool", &read(&p)?);
            EntityPool::from_file(&p).map_err(schema)?
        }
        None => EntityPool::from_results(results),
    };
    let mut res = PerturbResources::bundled(pool);
    if let Some(p) = cfg.path("lexicon") {
        m.input("lexicon", &read(&p)?);
        res.typer = Box::new(LexiconTyper::from_file(&p).map_err(schema)?);
    }
    if let Some(p) = cfg.path("negation") {
        m.input("negation", &read(&p)?);
        res.negation = NegationRules::from_file(&p).map_err(schema)?;
    }
    if let Some(p) = cfg.path("antonyms") {
        m.input("antonyms", &read(&p)?);
        res.antonyms = AntonymLexicon::from_file(&p).map_err(schema)?;
    }
    Ok(res)
}

fn count_kinds(m: &mut Manifest, prefix: &str, kinds: impl IntoIterator<Item = PerturbationKind>) {
    let mut n: BTreeMap<PerturbationKind, usize> = BTreeMap::new();
    for k in kinds {
        *n.entry(k).or_default() += 1;
    }
    for (k, c) in n {
        m.count(format!("{prefix}{k}"), c);
    }
}

pub fn extract(cfg: &Config, corpus: &Path, out: &Path) -> Result<(), CliError> {
    let mut m = Manifest::new("extract", cfg);
    let table = match cfg.path("phrases") {
        Some(p) => {
            m.input("phrases", &read(&p)?);
            PhraseTable::from_file(&p).map_err(schema)?
        }
        None => PhraseTable::default(),
    };
    let bounds = cfg.bounds()?;
    let mode = if cfg.lenient()? { LoadMode::Lenient } else { LoadMode::Strict };
    let bytes = read(corpus)?;
    m.input("corpus", &bytes);
    out_dir(out)?;
    let loaded = load_from_reader(bytes.as_slice(), mode).map_err(|e| match e {
        CorpusError::Io(_) => invariant(e),
        _ => schema(e),
    })?;
    for (line, reason) in &loaded.rejected {
        eprintln!("mechnli: skipped corpus line {line}: {reason}");
    }
    let results = jobs(cfg, || pipeline::extract_all(&loaded.abstracts, &table, bounds))?;
    let pool = EntityPool::from_results(&results);
    m.emit(out, "extracted.jsonl", &to_jsonl(&results))?;
    m.emit(out, "pool.tsv", pool.to_tsv().as_bytes())?;
    m.count("abstracts", loaded.abstracts.len());
    m.count("rejected", loaded.rejected.len());
    m.count("pairs", results.len());
    m.count("pool_entities", pool.len());
    m.write(out)?;
    println!("{} pairs from {} abstracts", results.len(), loaded.abstracts.len());
    Ok(())
}

pub fn perturb(cfg: &Config, extracted: &Path, out: &Path) -> Result<(), CliError> {
    let mut m = Manifest::new("perturb", cfg);
    let results = load_extracted(extracted, &mut m)?;
    let res = resources(cfg, &results, &mut m)?;
    let kinds = cfg.kinds()?;
    let seed = cfg.seed()?;
    out_dir(out)?;
    let groups = jobs(cfg, || pipeline::perturb_all(&results, &res, &kinds, seed))?;
    for g in &groups {
        if g.negatives.iter().any(|n| !kinds.contains(&n.kind) || n.hypothesis == g.positive) {
            return Err(invariant(format!("group {} holds an unrequested or unchanged negative", g.group_id)));
        }
    }
    m.emit(out, "groups.jsonl", &to_jsonl(&groups))?;
    m.count("groups", groups.len());
    m.count("negatives", groups.iter().map(|g| g.negatives.len()).sum());
    count_kinds(&mut m, "negatives_", groups.iter().flat_map(|g| g.negatives.iter().map(|n| n.kind)));
    m.write(out)?;
    println!("{} groups", groups.len());
    Ok(())
}

pub fn train_lm(cfg: &Config, extracted: &Path, out: &Path) -> Result<(), CliError> {
    let mut m = Manifest::new("train-lm", cfg);
    let results = load_extracted(extracted, &mut m)?;
    let (order, discount) = cfg.lm()?;
    let seqs = pipeline::lm_training_sequences(&results);
    let lm = NGramLM::train(seqs.iter().cloned(), order, discount).map_err(|e| CliError::Usage(e.to_string()))?;
    out_dir(out)?;
    let tmp = out.join("lm.json.tmp");
    lm.save(&tmp).map_err(invariant)?;
    let bytes = std::fs::read(&tmp).map_err(invariant)?;
    std::fs::remove_file(&tmp).map_err(invariant)?;
    m.emit(out, "lm.json", &bytes)?;
    m.count("sequences", seqs.len());
    m.count("vocabulary", mechnli::lm::SequenceScorer::vocab(&lm).len());
    m.write(out)?;
    println!("trained order-{order} model on {} sequences", seqs.len());
    Ok(())
}

pub fn decode(cfg: &Config, extracted: &Path, lm_path: &Path, out: &Path) -> Result<(), CliError> {
    let mut m = Manifest::new("decode", cfg);
    let results = load_extracted(extracted, &mut m)?;
    m.input("lm", &read(lm_path)?);
    let lm = NGramLM::load(lm_path).map_err(schema)?;
    let res = resources(cfg, &results, &mut m)?;
    let dc = cfg.decoder()?;
    let (per_run, seed) = (cfg.per_run()?, cfg.seed()?);
    out_dir(out)?;
    let cands = jobs(cfg, || pipeline::decode_all(&results, &lm, &dc, &res, per_run, seed))?.map_err(pipeline_error)?;
    m.emit(out, "candidates.jsonl", &to_jsonl(&cands))?;
    m.count("candidates", cands.len());
    m.count("fully_satisfied", cands.iter().filter(|c| c.fully_satisfied).count());
    count_kinds(&mut m, "candidates_", cands.iter().map(|c| c.kind));
    m.write(out)?;
    println!("{} candidates", cands.len());
    Ok(())
}

pub fn filter(cfg: &Config, extracted: &Path, candidates: &Path, groups: &Path, out: &Path) -> Result<(), CliError> {
    let mut m = Manifest::new("filter", cfg);
    let results = load_extracted(extracted, &mut m)?;
    let cand_bytes = read(candidates)?;
    m.input("candidates", &cand_bytes);
    let cands: Vec<Candidate> = parse_jsonl(&cand_bytes, "candidates")?;
    let group_bytes = read(groups)?;
    m.input("groups", &group_bytes);
    let mut groups = dataset::read_groups(group_bytes.as_slice()).map_err(dataset_error)?;
    let relation = match cfg.path("relations") {
        Some(p) => {
            m.input("relations", &read(&p)?);
            KeywordRelationPredictor::from_file(&p).map_err(schema)?
        }
        None => KeywordRelationPredictor::bundled(),
    };
    let judges = Judges {
        quality: &TfCosine,
        similarity: &TfCosine,
        relation: &relation,
        config: cfg.filter()?,
    };
    out_dir(out)?;
    let accepted: Vec<GeneratedNegative> =
        jobs(cfg, || pipeline::filter_all(&results, &cands, &judges))?.map_err(pipeline_error)?;
    pipeline::merge_generated(&mut groups, accepted.clone()).map_err(pipeline_error)?;
    m.emit(out, "generated.jsonl", &to_jsonl(&accepted))?;
    m.emit(out, "merged_groups.jsonl", &to_jsonl(&groups))?;
    m.count("candidates", cands.len());
    m.count("accepted", accepted.len());
    count_kinds(&mut m, "accepted_", accepted.iter().map(|g| g.kind));
    m.write(out)?;
    println!("{} of {} candidates accepted", accepted.len(), cands.len());
    Ok(())
}

/// Checks the emission policy on an assembled dataset.
fn check_assembly(a: &dataset::Assembly, cap: Option<usize>) -> Result<(), CliError> {
    let mut split_of: BTreeMap<&str, Split> = BTreeMap::new();
    for (s, inst) in &a.instances {
        if inst.category.label() != inst.label {
            return Err(invariant(format!("instance {} has a label contradicting its category", inst.id)));
        }
        if *split_of.entry(&inst.group_id).or_insert(*s) != *s {
            return Err(invariant(format!("group {} straddles splits", inst.group_id)));
        }
    }
    if let Some(cap) = cap {
        for (k, n) in &a.stats.split(Split::Train).negatives {
            if k.is_rule_based() && *n > cap {
                return Err(invariant(format!("{n} train {k} negatives exceed the cap {cap}")));
            }
        }
    }
    Ok(())
}

pub fn assemble(cfg: &Config, groups: &Path, out: &Path) -> Result<(), CliError> {
    let mut m = Manifest::new("assemble", cfg);
    let bytes = read(groups)?;
    m.input("groups", &bytes);
    let groups: Vec<Group> = dataset::read_groups(bytes.as_slice()).map_err(dataset_error)?;
    let policy = cfg.split_policy()?;
    out_dir(out)?;
    let a = dataset::assemble(&groups, &policy, cfg.seed()?).map_err(dataset_error)?;
    check_assembly(&a, policy.balanced_cap)?;
    for s in Split::ALL {
        let items: Vec<&NLIInstance> = a.split(s).collect();
        m.emit(out, &format!("{s}.jsonl"), &to_jsonl(items))?;
        m.count(format!("{s}_instances"), a.split(s).count());
    }
    let mut json = serde_json::to_string_pretty(&a.stats).expect("stats serialize");
    json.push('\n');
    m.emit(out, "stats.json", json.as_bytes())?;
    m.emit(out, "stats.txt", a.stats.table().as_bytes())?;
    m.count("groups", groups.len());
    for (k, n) in &a.stats.split(Split::Train).negatives {
        m.count(format!("train_{k}"), *n);
    }
    m.write(out)?;
    print!("{}", a.stats.table());
    Ok(())
}

pub fn stats(cfg: &Config, dir: &Path, groups: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let mut m = Manifest::new("stats", cfg);
    let mut all: Vec<(Split, NLIInstance)> = Vec::new();
    for s in Split::ALL {
        let path = dir.join(format!("{s}.jsonl"));
        if !path.is_file() {
            continue;
        }
        let bytes = read(&path)?;
        m.input(s.as_str(), &bytes);
        let items = dataset::read_instances(bytes.as_slice()).map_err(dataset_error)?;
        all.extend(items.into_iter().map(|i| (s, i)));
    }
    if all.is_empty() {
        return Err(CliError::Usage(format!("{} holds no train, dev or test file", dir.display())));
    }
    let mut st = DatasetStats::from_instances(all.iter().map(|(s, i)| (*s, i)));
    if let Some(g) = groups {
        let bytes = read(g)?;
        m.input("groups", &bytes);
        let groups = dataset::read_groups(bytes.as_slice()).map_err(dataset_error)?;
        st.applicability = applicability_histogram(&groups);
    }
    let table = st.table();
    print!("{table}");
    if let Some(out) = out {
        out_dir(out)?;
        let mut json = serde_json::to_string_pretty(&st).expect("stats serialize");
        json.push('\n');
        m.emit(out, "stats.json", json.as_bytes())?;
        m.emit(out, "stats.txt", table.as_bytes())?;
        m.count("instances", all.len());
        m.write(out)?;
    }
    Ok(())
}

pub fn eval(cfg: &Config, instances: &Path, predictions: &Path, out: &Path) -> Result<(), CliError> {
    let mut m = Manifest::new("eval", cfg);
    let ib = read(instances)?;
    m.input("instances", &ib);
    let items = dataset::read_instances(ib.as_slice()).map_err(dataset_error)?;
    let pb = read(predictions)?;
    m.input("predictions", &pb);
    let preds = evalharness::read_predictions(pb.as_slice()).map_err(eval_error)?;
    let report = evalharness::evaluate(&items, &preds).map_err(eval_error)?;
    let cons = evalharness::consistency(&items, &preds).map_err(eval_error)?;
    out_dir(out)?;
    let json = serde_json::json!({ "report": report, "consistency": cons });
    let mut text = serde_json::to_string_pretty(&json).expect("report serializes");
    text.push('\n');
    let table = format!("{}\n{}", report.table(), cons.table());
    m.emit(out, "report.json", text.as_bytes())?;
    m.emit(out, "report.txt", table.as_bytes())?;
    m.emit(out, "consistency.svg", cons.svg().as_bytes())?;
    m.count("instances", items.len());
    m.count("groups", cons.per_group.len());
    m.write(out)?;
    print!("{table}");
    Ok(())
}
