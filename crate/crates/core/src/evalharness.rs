//! Scores hard-label predictions against an assembled dataset.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Category, Label, NLIInstance};
use crate::perturb::PerturbationKind;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no prediction for instance {0:?}")]
    MissingPrediction(String),
    #[error("prediction for unknown instance {0:?}")]
    UnknownId(String),
    #[error("instance {0:?} predicted twice")]
    DuplicatePrediction(String),
    #[error("line {line}: {reason}")]
    SchemaViolation { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub id: String,
    pub label: Label,
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<PredictionRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::SchemaViolation {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Resolves every instance to its predicted label, in instance order.
fn resolve<'a>(
    instances: &'a [NLIInstance],
    predictions: &[PredictionRecord],
) -> Result<Vec<(&'a NLIInstance, Label)>, EvalError> {
    let mut by_id: HashMap<&str, Label> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(&p.id, p.label).is_some() {
            return Err(EvalError::DuplicatePrediction(p.id.clone()));
        }
    }
    let known: HashMap<&str, ()> = instances.iter().map(|i| (i.id.as_str(), ())).collect();
    // Report unknown ids in a stable order.
    let mut unknown: Vec<&str> = by_id.keys().copied().filter(|id| !known.contains_key(id)).collect();
    unknown.sort_unstable();
    if let Some(id) = unknown.first() {
        return Err(EvalError::UnknownId(id.to_string()));
    }
    instances
        .iter()
        .map(|i| {
            by_id
                .get(i.id.as_str())
                .map(|l| (i, *l))
                .ok_or_else(|| EvalError::MissingPrediction(i.id.clone()))
        })
        .collect()
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    2.0 * p * r / (p + r)
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub instances: usize,
    pub positive_f1: f64,
    pub negative_f1: f64,
    /// Fraction of each negative category predicted not-entailed.
    pub category_recall: BTreeMap<PerturbationKind, f64>,
    pub category_support: BTreeMap<PerturbationKind, usize>,
    pub rule_based_macro: Option<f64>,
    pub generation_macro: Option<f64>,
    /// Mean of the positive and negative F1.
    pub macro_f1: f64,
}

pub fn evaluate(instances: &[NLIInstance], predictions: &[PredictionRecord]) -> Result<EvalReport, EvalError> {
    let resolved = resolve(instances, predictions)?;
    let (mut tp_pos, mut fp_pos, mut fn_pos) = (0, 0, 0);
    let mut hits: BTreeMap<PerturbationKind, (usize, usize)> = BTreeMap::new();
    for (inst, pred) in &resolved {
        let gold = inst.category.label();
        match (gold, *pred) {
            (Label::Entailed, Label::Entailed) => tp_pos += 1,
            (Label::NotEntailed, Label::Entailed) => fp_pos += 1,
            (Label::Entailed, Label::NotEntailed) => fn_pos += 1,
            (Label::NotEntailed, Label::NotEntailed) => {}
        }
        if let Category::Negative(k) = inst.category {
            let e = hits.entry(k).or_default();
            e.1 += 1;
            if *pred == Label::NotEntailed {
                e.0 += 1;
            }
        }
    }
    let tn_neg: usize = hits.values().map(|(h, _)| h).sum();
    // For the negative class, false positives are positives predicted negative.
    let negative_f1 = f1(tn_neg, fn_pos, fp_pos);
    let positive_f1 = f1(tp_pos, fp_pos, fn_pos);
    let category_recall: BTreeMap<_, _> = hits.iter().map(|(k, (h, n))| (*k, *h as f64 / *n as f64)).collect();
    let category_support = hits.iter().map(|(k, (_, n))| (*k, *n)).collect();
    let block = |rule: bool| {
        mean(
            category_recall
                .iter()
                .filter(|(k, _)| k.is_rule_based() == rule)
                .map(|(_, r)| *r),
        )
    };
    Ok(EvalReport {
        instances: resolved.len(),
        positive_f1,
        negative_f1,
        rule_based_macro: block(true),
        generation_macro: block(false),
        macro_f1: (positive_f1 + negative_f1) / 2.0,
        category_recall,
        category_support,
    })
}

impl EvalReport {
    /// Rows laid out like the per-class results table, two decimals.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let cell = |x: Option<f64>| x.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "{:<24}{:>8}", "class", "score");
        let _ = writeln!(out, "{:<24}{:>8}", "Positive (F1)", cell(Some(self.positive_f1)));
        for k in PerturbationKind::RULE_BASED {
            let _ = writeln!(out, "{:<24}{:>8}", format!("  {k}"), cell(self.category_recall.get(&k).copied()));
        }
        let _ = writeln!(out, "{:<24}{:>8}", "  rule-based macro", cell(self.rule_based_macro));
        for k in [PerturbationKind::GenNd, PerturbationKind::Gen] {
            let _ = writeln!(out, "{:<24}{:>8}", format!("  {k}"), cell(self.category_recall.get(&k).copied()));
        }
        let _ = writeln!(out, "{:<24}{:>8}", "  generation macro", cell(self.generation_macro));
        let _ = writeln!(out, "{:<24}{:>8}", "All negatives (F1)", cell(Some(self.negative_f1)));
        let _ = writeln!(out, "{:<24}{:>8}", "Macro-F1", cell(Some(self.macro_f1)));
        out
    }
}

/// Cumulative thresholds reported by [`Consistency::table`].
pub const THRESHOLDS: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    /// Fraction of each group's instances predicted correctly.
    pub per_group: BTreeMap<String, f64>,
    /// Ten equal-width bins over [0, 1]; the last bin includes 1.0.
    pub histogram: [usize; 10],
}

pub fn consistency(instances: &[NLIInstance], predictions: &[PredictionRecord]) -> Result<Consistency, EvalError> {
    let resolved = resolve(instances, predictions)?;
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (inst, pred) in resolved {
        let e = counts.entry(&inst.group_id).or_default();
        e.1 += 1;
        if inst.category.label() == pred {
            e.0 += 1;
        }
    }
    let per_group: BTreeMap<String, f64> = counts
        .into_iter()
        .map(|(g, (c, n))| (g.to_string(), c as f64 / n as f64))
        .collect();
    let mut histogram = [0usize; 10];
    for f in per_group.values() {
        histogram[((f * 10.0 + EPS).floor() as usize).min(9)] += 1;
    }
    Ok(Consistency { per_group, histogram })
}

impl Consistency {
    /// Fraction of groups whose correct fraction is at least `t`.
    pub fn at_least(&self, t: f64) -> f64 {
        if self.per_group.is_empty() {
            return 0.0;
        }
        let n = self.per_group.values().filter(|f| **f + EPS >= t).count();
        n as f64 / self.per_group.len() as f64
    }

    pub fn table(&self) -> String {
        let mut out = String::from("threshold  groups >= threshold\n");
        for t in THRESHOLDS {
            let _ = writeln!(out, "{t:>9.1}  {:.2}", self.at_least(t));
        }
        out.push_str("\nbin        groups\n");
        for (i, c) in self.histogram.iter().enumerate() {
            let hi = if i == 9 { "]" } else { ")" };
            let _ = writeln!(out, "[{:.1},{:.1}{hi}  {c}", i as f64 / 10.0, (i + 1) as f64 / 10.0);
        }
        out
    }

    /// Cumulative curve as a bar chart.
    pub fn svg(&self) -> String {
        let (w, h, pad) = (440.0, 240.0, 30.0);
        let bar = (w - 2.0 * pad) / THRESHOLDS.len() as f64;
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
        );
        let _ = writeln!(
            out,
            "<line x1=\"{pad}\" y1=\"{y}\" x2=\"{x}\" y2=\"{y}\" stroke=\"black\"/>",
            y = h - pad,
            x = w - pad
        );
        for (i, t) in THRESHOLDS.iter().enumerate() {
            let v = self.at_least(*t);
            let bh = v * (h - 2.0 * pad);
            let x = pad + i as f64 * bar;
            let _ = writeln!(
                out,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"steelblue\"/>",
                x + 2.0,
                h - pad - bh,
                bar - 4.0,
                bh
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{t:.1}</text>",
                x + bar / 2.0,
                h - pad + 14.0
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use PerturbationKind::*;

    fn inst(group: &str, id: &str, category: Category) -> NLIInstance {
        NLIInstance {
            id: id.into(),
            group_id: group.into(),
            premise: "p".into(),
            hypothesis: id.into(),
            label: category.label(),
            category,
            source_abstract_id: group.into(),
        }
    }

    fn pred(id: &str, label: Label) -> PredictionRecord {
        PredictionRecord { id: id.into(), label }
    }

    #[test]
    fn category_recall_definition() {
        let xs: Vec<_> = (0..4).map(|i| inst("g", &format!("s{i}"), Category::Negative(Sen))).collect();
        let ps: Vec<_> = (0..4)
            .map(|i| pred(&format!("s{i}"), if i < 3 { Label::NotEntailed } else { Label::Entailed }))
            .collect();
        let r = evaluate(&xs, &ps).unwrap();
        assert_eq!(r.category_recall[&Sen], 0.75);
        assert_eq!(r.rule_based_macro, Some(0.75));
        assert_eq!(r.generation_macro, None);
    }

    #[test]
    fn positive_f1_harmonic_mean() {
        // One positive predicted entailed, one negative predicted entailed.
        let xs = vec![inst("g", "p", Category::Positive), inst("g", "n", Category::Negative(Sep))];
        let ps = vec![pred("p", Label::Entailed), pred("n", Label::Entailed)];
        let r = evaluate(&xs, &ps).unwrap();
        assert!((r.positive_f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.negative_f1, 0.0);
    }

    #[test]
    fn coverage_errors() {
        let xs = vec![inst("g", "a", Category::Positive), inst("g", "b", Category::Negative(Sen))];
        assert!(matches!(
            evaluate(&xs, &[pred("a", Label::Entailed)]),
            Err(EvalError::MissingPrediction(id)) if id == "b"
        ));
        let ps = vec![pred("a", Label::Entailed), pred("b", Label::Entailed), pred("z", Label::Entailed)];
        assert!(matches!(evaluate(&xs, &ps), Err(EvalError::UnknownId(id)) if id == "z"));
        let ps = vec![pred("a", Label::Entailed), pred("a", Label::Entailed)];
        assert!(matches!(evaluate(&xs, &ps), Err(EvalError::DuplicatePrediction(_))));
    }

    #[test]
    fn consistency_fractions() {
        let mut xs = vec![inst("g", "p", Category::Positive)];
        xs.extend((0..4).map(|i| inst("g", &format!("n{i}"), Category::Negative(Sen))));
        let ps: Vec<_> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| pred(&x.id, if i < 3 { x.label } else { Label::Entailed }))
            .collect();
        // p correct, n0 n1 correct, n2 n3 wrong.
        let c = consistency(&xs, &ps).unwrap();
        assert!((c.per_group["g"] - 0.6).abs() < 1e-12);
        assert_eq!(c.histogram[6], 1);
        let all: Vec<_> = xs.iter().map(|x| pred(&x.id, x.label)).collect();
        let c = consistency(&xs, &all).unwrap();
        assert_eq!(c.histogram[9], 1);
        assert_eq!(c.at_least(1.0), 1.0);
        assert!(c.svg().starts_with("<svg"));
    }

    #[test]
    fn report_table_rows() {
        let xs = vec![inst("g", "p", Category::Positive), inst("g", "n", Category::Negative(Gen))];
        let ps: Vec<_> = xs.iter().map(|x| pred(&x.id, x.label)).collect();
        let t = evaluate(&xs, &ps).unwrap().table();
        assert!(t.lines().any(|l| l.starts_with("Positive (F1)") && l.ends_with("1.00")));
        assert!(t.lines().any(|l| l.trim_start().starts_with("GEN ") && l.ends_with("1.00")));
        assert!(t.lines().any(|l| l.trim_start().starts_with("SEN") && l.ends_with('-')));
    }

    fn recount(xs: &[NLIInstance], ps: &[PredictionRecord]) -> (f64, f64, BTreeMap<PerturbationKind, f64>) {
        let label_of = |id: &str| ps.iter().find(|p| p.id == id).unwrap().label;
        let f1_for = |cls: Label| {
            let tp = xs.iter().filter(|x| x.label == cls && label_of(&x.id) == cls).count() as f64;
            let pp = xs.iter().filter(|x| label_of(&x.id) == cls).count() as f64;
            let ap = xs.iter().filter(|x| x.label == cls).count() as f64;
            if tp == 0.0 {
                0.0
            } else {
                2.0 * tp / (pp + ap)
            }
        };
        let mut rec = BTreeMap::new();
        for k in PerturbationKind::ALL {
            let of_k: Vec<_> = xs.iter().filter(|x| x.category == Category::Negative(k)).collect();
            if !of_k.is_empty() {
                let hit = of_k.iter().filter(|x| label_of(&x.id) == Label::NotEntailed).count();
                rec.insert(k, hit as f64 / of_k.len() as f64);
            }
        }
        (f1_for(Label::Entailed), f1_for(Label::NotEntailed), rec)
    }

    proptest::proptest! {
        #[test]
        fn matches_brute_force_recount(
            rows in proptest::collection::vec((0usize..10, 0usize..9, proptest::bool::ANY), 1..100),
            rot in 0usize..100,
        ) {
            let xs: Vec<NLIInstance> = rows
                .iter()
                .enumerate()
                .map(|(i, (cat, g, _))| {
                    let c = if *cat == 9 { Category::Positive } else { Category::Negative(PerturbationKind::ALL[*cat]) };
                    inst(&format!("g{g}"), &format!("i{i}"), c)
                })
                .collect();
            let mut ps: Vec<PredictionRecord> = rows
                .iter()
                .enumerate()
                .map(|(i, (_, _, e))| pred(&format!("i{i}"), if *e { Label::Entailed } else { Label::NotEntailed }))
                .collect();
            let r = evaluate(&xs, &ps).unwrap();
            let (pf, nf, rec) = recount(&xs, &ps);
            proptest::prop_assert!((r.positive_f1 - pf).abs() < 1e-12);
            proptest::prop_assert!((r.negative_f1 - nf).abs() < 1e-12);
            proptest::prop_assert_eq!(&r.category_recall, &rec);
            let n = ps.len();
            ps.rotate_left(rot % n);
            proptest::prop_assert_eq!(evaluate(&xs, &ps).unwrap(), r);
        }
    }
}
