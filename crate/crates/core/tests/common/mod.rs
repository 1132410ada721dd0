#![allow(dead_code)]

use mechnli::annotate::EntityPool;
use mechnli::corpus::{load_from_reader, LoadMode};
use mechnli::extract::{split_abstract, ExtractionResult, PhraseTable, PremiseBounds};
use mechnli::perturb::PerturbResources;

pub const URACIL: &[u8] = include_bytes!("../data/uracil_exit.jsonl");
pub const ABA: &[u8] = include_bytes!("../data/aba_ph.jsonl");

/// Base seed under which the seeded draws match the reference hypotheses.
pub const ABA_SEED: u64 = 9;

const TAIL: &str = " is correlated with and even precedes the induction of RAB-16 mRNA expression and is an \
essential component of the transduction pathway leading from the hormone to gene expression, it is not \
sufficient to cause such expression.";

fn row(head: &str, tail: &str) -> String {
    format!("We conclude that, although the {head}{tail}")
}

pub fn aba_conclusion() -> String {
    row("<el> ABA <le>-induced the <re> pH <er>(i) increase", TAIL)
}

/// (kind, published hypothesis)
pub fn aba_rows() -> Vec<(&'static str, String)> {
    vec![
        ("SEN", row("<el> pH <le>-induced the <re> ABA <er>(i) increase", TAIL)),
        ("SEP", row("<re> pH <er>-induced the <el> ABA <le>(i) increase", TAIL)),
        ("SREO", row("<el> integrin <le>-induced the <re> pH <er>(i) increase", TAIL)),
        (
            "VNeg",
            row(
                "<el> ABA <le>-induced the <re> pH <er>(i) increase",
                &TAIL.replacen(" is correlated", " is not correlated", 1),
            ),
        ),
        ("LPR", row("<el> ABA <le>-induced the <re> pH <er>(i) decrease", TAIL)),
    ]
}

pub fn extract_one(bytes: &[u8]) -> ExtractionResult {
    let corpus = load_from_reader(bytes, LoadMode::Strict).expect("fixture parses");
    split_abstract(&corpus.abstracts[0], &PhraseTable::default(), PremiseBounds::default()).expect("fixture splits")
}

/// Bundled lexicons with the one pool entry the SREO row draws.
pub fn aba_resources() -> PerturbResources {
    PerturbResources::bundled(EntityPool::from_tsv("integrin\tSIMPLE_CHEMICAL\n").unwrap())
}
