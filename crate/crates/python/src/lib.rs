//! Python bindings. Records cross the boundary as JSON lines, the same
//! format the command-line stages read and write.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use mechnli::annotate::EntityPool;
use mechnli::corpus::{load_from_reader, parse_marked, LoadMode};
use mechnli::dataset::{self, Split, SplitPolicy};
use mechnli::evalharness;
use mechnli::extract::{ExtractionResult, PhraseTable, PremiseBounds};
use mechnli::lm;
use mechnli::perturb::{self, PerturbResources, PerturbationKind};
use mechnli::pipeline;

fn jsonl<T: serde::Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for x in items {
        out.push_str(&serde_json::to_string(x).expect("records serialize"));
        out.push('\n');
    }
    out
}

fn parse_lines<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

pub fn extract_text(corpus: &str, lenient: bool) -> Result<String, String> {
    let mode = if lenient { LoadMode::Lenient } else { LoadMode::Strict };
    let loaded = load_from_reader(corpus.as_bytes(), mode).map_err(|e| e.to_string())?;
    let results = pipeline::extract_all(&loaded.abstracts, &PhraseTable::default(), PremiseBounds::default());
    Ok(jsonl(&results))
}

pub fn perturb_text(extracted: &str, seed: u64) -> Result<String, String> {
    let results: Vec<ExtractionResult> = parse_lines(extracted)?;
    let res = PerturbResources::bundled(EntityPool::from_results(&results));
    Ok(jsonl(&pipeline::perturb_all(&results, &res, &PerturbationKind::RULE_BASED, seed)))
}

pub fn apply_text(marked: &str, kind: &str) -> Result<String, String> {
    let c = parse_marked(marked).map_err(|e| e.to_string())?;
    let out = match kind.parse::<PerturbationKind>()? {
        PerturbationKind::Sen => perturb::apply_sen(&c),
        PerturbationKind::Sep => perturb::apply_sep(&c),
        k => return Err(format!("{k} needs instance context; use perturb_jsonl")),
    };
    Ok(out.render())
}

pub fn assemble_text(groups: &str, seed: u64, balanced: bool) -> Result<[String; 3], String> {
    let groups = dataset::read_groups(groups.as_bytes()).map_err(|e| e.to_string())?;
    let mut policy = SplitPolicy::default();
    if balanced {
        policy = policy.balanced();
    }
    let a = dataset::assemble(&groups, &policy, seed).map_err(|e| e.to_string())?;
    Ok(Split::ALL.map(|s| jsonl(&a.split(s).collect::<Vec<_>>())))
}

pub fn evaluate_text(instances: &str, predictions: &str) -> Result<String, String> {
    let items = dataset::read_instances(instances.as_bytes()).map_err(|e| e.to_string())?;
    let preds = evalharness::read_predictions(predictions.as_bytes()).map_err(|e| e.to_string())?;
    let report = evalharness::evaluate(&items, &preds).map_err(|e| e.to_string())?;
    let cons = evalharness::consistency(&items, &preds).map_err(|e| e.to_string())?;
    Ok(serde_json::json!({ "report": report, "consistency": cons }).to_string())
}

fn py<T>(r: Result<T, String>) -> PyResult<T> {
    r.map_err(PyValueError::new_err)
}

/// Extraction results, as JSON lines, for a JSON-lines corpus.
#[pyfunction]
#[pyo3(signature = (corpus, lenient = false))]
fn extract_jsonl(corpus: &str, lenient: bool) -> PyResult<String> {
    py(extract_text(corpus, lenient))
}

/// Groups with every applicable rule-based negative.
#[pyfunction]
#[pyo3(signature = (extracted, seed = 42))]
fn perturb_jsonl(extracted: &str, seed: u64) -> PyResult<String> {
    py(perturb_text(extracted, seed))
}

/// SEN or SEP applied to a marked conclusion.
#[pyfunction]
fn perturb_conclusion(marked: &str, kind: &str) -> PyResult<String> {
    py(apply_text(marked, kind))
}

/// (train, dev, test) instances.
#[pyfunction]
#[pyo3(signature = (groups, seed = 42, balanced = false))]
fn assemble_jsonl(groups: &str, seed: u64, balanced: bool) -> PyResult<(String, String, String)> {
    let [a, b, c] = py(assemble_text(groups, seed, balanced))?;
    Ok((a, b, c))
}

/// Report and consistency as one JSON object.
#[pyfunction]
fn evaluate_json(instances: &str, predictions: &str) -> PyResult<String> {
    py(evaluate_text(instances, predictions))
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    lm::tokenize(text)
}

#[pymodule]
fn pymechnli(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(extract_jsonl, m)?)?;
    m.add_function(wrap_pyfunction!(perturb_jsonl, m)?)?;
    m.add_function(wrap_pyfunction!(perturb_conclusion, m)?)?;
    m.add_function(wrap_pyfunction!(assemble_jsonl, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_json, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mechnli::synth;

    #[test]
    fn stages_chain() {
        let corpus = synth::to_jsonl(&synth::extraction_corpus(10, 8));
        let extracted = extract_text(&corpus, false).unwrap();
        assert_eq!(extracted.lines().count(), 8);
        let groups = perturb_text(&extracted, 42).unwrap();
        assert_eq!(groups.lines().count(), 8);
        let [tr, dv, te] = assemble_text(&groups, 42, false).unwrap();
        assert!(tr.lines().count() + dv.lines().count() + te.lines().count() >= 16);
    }

    #[test]
    fn sen_swaps_the_entities() {
        let out = apply_text("<re> A <er> inhibits <el> B <le>.", "SEN").unwrap();
        assert_eq!(out, "<re> B <er> inhibits <el> A <le>.");
        assert!(apply_text("<re> A <er> inhibits <el> B <le>.", "GEN").is_err());
        assert!(apply_text("no markers", "SEN").is_err());
    }

    #[test]
    fn malformed_input_is_an_error() {
        assert!(perturb_text("{", 1).unwrap_err().starts_with("line 1"));
        assert!(evaluate_text("", "{\"id\":\"x\",\"label\":\"entailed\"}").is_err());
    }
}
