//! Instance groups, split assignment, full and balanced assembly, statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::ExtractionResult;
use crate::perturb::{Perturbation, PerturbationKind};
use crate::seed;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("group {0:?} has no positive hypothesis")]
    EmptyGroup(String),
    #[error("group id {0:?} occurs twice")]
    DuplicateGroup(String),
    #[error("split sizes {given} do not cover {groups} groups")]
    SplitSizeMismatch { given: usize, groups: usize },
    #[error("invalid split ratios")]
    InvalidRatios,
    #[error("line {line}: {reason}")]
    SchemaViolation { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Entailed,
    NotEntailed,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entailed => "entailed",
            Label::NotEntailed => "not_entailed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Category {
    Positive,
    Negative(PerturbationKind),
}

impl Category {
    pub fn label(self) -> Label {
        match self {
            Category::Positive => Label::Entailed,
            Category::Negative(_) => Label::NotEntailed,
        }
    }

    pub fn kind(self) -> Option<PerturbationKind> {
        match self {
            Category::Positive => None,
            Category::Negative(k) => Some(k),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Category::Positive => f.write_str("Positive"),
            Category::Negative(k) => f.write_str(k.as_str()),
        }
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "Positive" {
            Ok(Category::Positive)
        } else {
            s.parse().map(Category::Negative)
        }
    }
}

impl TryFrom<String> for Category {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Category> for String {
    fn from(c: Category) -> Self {
        c.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NLIInstance {
    pub id: String,
    pub group_id: String,
    pub premise: String,
    pub hypothesis: String,
    pub label: Label,
    pub category: Category,
    pub source_abstract_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Negative {
    pub kind: PerturbationKind,
    pub hypothesis: String,
}

/// One source conclusion with every negative derived from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Group {
    pub group_id: String,
    pub source_abstract_id: String,
    pub premise: String,
    pub positive: String,
    pub negatives: Vec<Negative>,
}

impl Group {
    pub fn from_extraction(
        r: &ExtractionResult,
        rule_based: &[Perturbation],
        generated: impl IntoIterator<Item = Negative>,
    ) -> Self {
        let positive = r.conclusion.render();
        let mut negatives: Vec<Negative> = rule_based
            .iter()
            .map(|p| Negative {
                kind: p.kind,
                hypothesis: p.hypothesis.render(),
            })
            .chain(generated)
            .filter(|n| n.hypothesis != positive)
            .collect();
        negatives.sort_by(|a, b| (a.kind, &a.hypothesis).cmp(&(b.kind, &b.hypothesis)));
        negatives.dedup();
        Group {
            group_id: r.abstract_id.clone(),
            source_abstract_id: r.abstract_id.clone(),
            premise: r.premise(),
            positive,
            negatives,
        }
    }

    /// Distinct kinds with at least one negative.
    pub fn applicable(&self) -> BTreeSet<PerturbationKind> {
        self.negatives.iter().map(|n| n.kind).collect()
    }

    fn instance(&self, category: Category, n: usize, hypothesis: &str) -> NLIInstance {
        let id = match category {
            Category::Positive => format!("{}:pos", self.group_id),
            Category::Negative(k) => format!("{}:{}:{}", self.group_id, k, n),
        };
        NLIInstance {
            id,
            group_id: self.group_id.clone(),
            premise: self.premise.clone(),
            hypothesis: hypothesis.to_string(),
            label: category.label(),
            category,
            source_abstract_id: self.source_abstract_id.clone(),
        }
    }

    fn positive_instance(&self) -> NLIInstance {
        self.instance(Category::Positive, 0, &self.positive)
    }

    /// Negatives as instances, numbered within their kind.
    fn negative_instances(&self) -> Vec<NLIInstance> {
        let mut seen: BTreeMap<PerturbationKind, usize> = BTreeMap::new();
        self.negatives
            .iter()
            .filter(|n| n.hypothesis != self.positive)
            .map(|n| {
                let k = seen.entry(n.kind).or_default();
                let inst = self.instance(Category::Negative(n.kind), *k, &n.hypothesis);
                *k += 1;
                inst
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SplitSizes {
    /// Relative weights; rounded to whole groups, test takes the remainder.
    Ratios { train: f64, dev: f64, test: f64 },
    /// Exact group counts; must sum to the number of groups.
    Counts { train: usize, dev: usize, test: usize },
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes::Ratios {
            train: 8489.0,
            dev: 3000.0,
            test: 2000.0,
        }
    }
}

impl SplitSizes {
    pub fn counts(&self, n: usize) -> Result<[usize; 3], DatasetError> {
        match *self {
            SplitSizes::Counts { train, dev, test } => {
                if train + dev + test != n {
                    return Err(DatasetError::SplitSizeMismatch {
                        given: train + dev + test,
                        groups: n,
                    });
                }
                Ok([train, dev, test])
            }
            SplitSizes::Ratios { train, dev, test } => {
                let sum = train + dev + test;
                if [train, dev, test].iter().any(|r| !(*r >= 0.0)) || !(sum > 0.0) {
                    return Err(DatasetError::InvalidRatios);
                }
                let tr = ((n as f64) * train / sum).round() as usize;
                let dv = (((n as f64) * dev / sum).round() as usize).min(n - tr.min(n));
                let tr = tr.min(n);
                Ok([tr, dv, n - tr - dv])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPolicy {
    pub sizes: SplitSizes,
    /// Per-category cap on rule-based train negatives.
    pub balanced_cap: Option<usize>,
}

pub const DEFAULT_BALANCED_CAP: usize = 500;

impl Default for SplitPolicy {
    fn default() -> Self {
        SplitPolicy {
            sizes: SplitSizes::default(),
            balanced_cap: None,
        }
    }
}

impl SplitPolicy {
    pub fn balanced(mut self) -> Self {
        self.balanced_cap = Some(DEFAULT_BALANCED_CAP);
        self
    }
}

/// Assigns each group a split by ranking groups on a seeded hash of their id.
pub fn assign_splits(
    groups: &[Group],
    sizes: &SplitSizes,
    seed: u64,
) -> Result<Vec<Split>, DatasetError> {
    let [tr, dv, _] = sizes.counts(groups.len())?;
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by_cached_key(|&i| (seed::derive_seed(seed, &["split", &groups[i].group_id]), i));
    let mut out = vec![Split::Test; groups.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < tr {
            Split::Train
        } else if rank < tr + dv {
            Split::Dev
        } else {
            Split::Test
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub positives: usize,
    pub negatives: BTreeMap<PerturbationKind, usize>,
    pub total_negatives: usize,
    /// Distinct groups with at least one negative.
    pub unique_negative_groups: usize,
    pub total: usize,
    pub unique_groups: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub splits: BTreeMap<Split, SplitStats>,
    /// Number of applicable kinds per group, as a fraction of groups.
    pub applicability: BTreeMap<usize, f64>,
}

impl DatasetStats {
    pub fn from_instances<'a>(items: impl IntoIterator<Item = (Split, &'a NLIInstance)>) -> Self {
        let mut splits: BTreeMap<Split, SplitStats> = BTreeMap::new();
        let mut groups: BTreeMap<Split, (BTreeSet<&str>, BTreeSet<&str>)> = BTreeMap::new();
        for (split, inst) in items {
            let s = splits.entry(split).or_default();
            let g = groups.entry(split).or_default();
            g.0.insert(&inst.group_id);
            s.total += 1;
            match inst.category {
                Category::Positive => s.positives += 1,
                Category::Negative(k) => {
                    *s.negatives.entry(k).or_default() += 1;
                    s.total_negatives += 1;
                    g.1.insert(&inst.group_id);
                }
            }
        }
        for (split, (all, neg)) in groups {
            let s = splits.get_mut(&split).expect("entry created above");
            s.unique_groups = all.len();
            s.unique_negative_groups = neg.len();
        }
        DatasetStats {
            splits,
            applicability: BTreeMap::new(),
        }
    }

    pub fn split(&self, s: Split) -> SplitStats {
        self.splits.get(&s).cloned().unwrap_or_default()
    }

    /// Plain-text table: one column per split plus a sum column.
    pub fn table(&self) -> String {
        let cols: Vec<SplitStats> = Split::ALL.iter().map(|s| self.split(*s)).collect();
        let mut out = String::new();
        let row = |out: &mut String, name: &str, vals: Vec<usize>| {
            let sum: usize = vals.iter().sum();
            let _ = write!(out, "{name:<10}");
            for v in vals.iter().chain(std::iter::once(&sum)) {
                let _ = write!(out, "{v:>8}");
            }
            out.push('\n');
        };
        let _ = writeln!(out, "{:<10}{:>8}{:>8}{:>8}{:>8}", "", "train", "dev", "test", "sum");
        row(&mut out, "+", cols.iter().map(|c| c.positives).collect());
        for k in PerturbationKind::ALL {
            let name = format!("- {k}");
            row(&mut out, &name, cols.iter().map(|c| c.negatives.get(&k).copied().unwrap_or(0)).collect());
        }
        row(&mut out, "- total", cols.iter().map(|c| c.total_negatives).collect());
        row(&mut out, "- unique", cols.iter().map(|c| c.unique_negative_groups).collect());
        row(&mut out, "total", cols.iter().map(|c| c.total).collect());
        row(&mut out, "unique", cols.iter().map(|c| c.unique_groups).collect());
        if !self.applicability.is_empty() {
            out.push_str("\napplicable kinds  fraction of groups\n");
            for (k, f) in &self.applicability {
                let _ = writeln!(out, "{k:>16}  {f:.4}");
            }
        }
        out
    }
}

/// Fraction of groups by number of applicable kinds.
pub fn applicability_histogram(groups: &[Group]) -> BTreeMap<usize, f64> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for g in groups {
        *counts.entry(g.applicable().len()).or_default() += 1;
    }
    let n = groups.len() as f64;
    counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    /// Sorted by (split, group_id, category, id).
    pub instances: Vec<(Split, NLIInstance)>,
    pub stats: DatasetStats,
}

impl Assembly {
    pub fn split(&self, s: Split) -> impl Iterator<Item = &NLIInstance> {
        self.instances.iter().filter(move |(x, _)| *x == s).map(|(_, i)| i)
    }
}

/// Builds split-tagged instances from groups.
///
/// Train groups keep one seeded rule-based negative plus every generation
/// negative; dev and test groups keep all negatives. With a cap, rule-based
/// train categories are down-sampled to it and train groups left without any
/// negative are dropped.
pub fn assemble(groups: &[Group], policy: &SplitPolicy, seed: u64) -> Result<Assembly, DatasetError> {
    let mut ids = BTreeSet::new();
    for g in groups {
        if g.positive.trim().is_empty() {
            return Err(DatasetError::EmptyGroup(g.group_id.clone()));
        }
        if !ids.insert(g.group_id.as_str()) {
            return Err(DatasetError::DuplicateGroup(g.group_id.clone()));
        }
    }
    let splits = assign_splits(groups, &policy.sizes, seed)?;

    let mut out: Vec<(Split, NLIInstance)> = Vec::new();
    let mut train: Vec<(usize, Vec<NLIInstance>)> = Vec::new();
    for (g, split) in groups.iter().zip(&splits) {
        let negatives = g.negative_instances();
        if *split != Split::Train {
            out.push((*split, g.positive_instance()));
            out.extend(negatives.into_iter().map(|n| (*split, n)));
            continue;
        }
        let (rule, generated): (Vec<_>, Vec<_>) = negatives
            .into_iter()
            .partition(|n| n.category.kind().is_some_and(|k| k.is_rule_based()));
        let mut kept = generated;
        if !rule.is_empty() {
            let mut rng = seed::rng(seed::derive_seed(seed, &["train", &g.group_id]));
            let pick = index::sample(&mut rng, rule.len(), 1).index(0);
            kept.push(rule[pick].clone());
        }
        train.push((out.len(), kept));
        out.push((Split::Train, g.positive_instance()));
    }

    if let Some(cap) = policy.balanced_cap {
        let mut by_kind: BTreeMap<PerturbationKind, Vec<(usize, usize)>> = BTreeMap::new();
        for (gi, (_, negs)) in train.iter().enumerate() {
            for (ni, n) in negs.iter().enumerate() {
                if let Some(k) = n.category.kind().filter(|k| k.is_rule_based()) {
                    by_kind.entry(k).or_default().push((gi, ni));
                }
            }
        }
        let mut drop: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (k, slots) in by_kind {
            if slots.len() <= cap {
                continue;
            }
            let mut rng = seed::rng(seed::derive_seed(seed, &["balance", k.as_str()]));
            let keep: BTreeSet<usize> = index::sample(&mut rng, slots.len(), cap).into_iter().collect();
            drop.extend(slots.iter().enumerate().filter(|(i, _)| !keep.contains(i)).map(|(_, s)| *s));
        }
        let mut dropped_positives = BTreeSet::new();
        for (gi, (pos_at, negs)) in train.iter_mut().enumerate() {
            let mut ni = 0;
            negs.retain(|_| {
                let keep = !drop.contains(&(gi, ni));
                ni += 1;
                keep
            });
            if negs.is_empty() {
                dropped_positives.insert(*pos_at);
            }
        }
        let mut i = 0;
        out.retain(|_| {
            let keep = !dropped_positives.contains(&i);
            i += 1;
            keep
        });
    }
    for (_, negs) in train {
        out.extend(negs.into_iter().map(|n| (Split::Train, n)));
    }

    out.sort_by(|a, b| {
        (a.0, &a.1.group_id, a.1.category, &a.1.id).cmp(&(b.0, &b.1.group_id, b.1.category, &b.1.id))
    });
    let mut stats = DatasetStats::from_instances(out.iter().map(|(s, i)| (*s, i)));
    stats.applicability = applicability_histogram(groups);
    Ok(Assembly { instances: out, stats })
}

fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DatasetError::SchemaViolation {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

fn write_jsonl<'a, T: Serialize + 'a, W: Write>(
    mut w: W,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<usize, DatasetError> {
    let mut n = 0;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        n += 1;
    }
    Ok(n)
}

pub fn read_groups<R: BufRead>(reader: R) -> Result<Vec<Group>, DatasetError> {
    read_jsonl(reader)
}

pub fn write_groups<'a, W: Write>(w: W, groups: impl IntoIterator<Item = &'a Group>) -> Result<usize, DatasetError> {
    write_jsonl(w, groups)
}

pub fn read_instances<R: BufRead>(reader: R) -> Result<Vec<NLIInstance>, DatasetError> {
    let items: Vec<NLIInstance> = read_jsonl(reader)?;
    for (i, inst) in items.iter().enumerate() {
        if inst.category.label() != inst.label {
            return Err(DatasetError::SchemaViolation {
                line: i + 1,
                reason: format!("label {} contradicts category {}", inst.label.as_str(), inst.category),
            });
        }
    }
    Ok(items)
}

pub fn write_instances<'a, W: Write>(
    w: W,
    items: impl IntoIterator<Item = &'a NLIInstance>,
) -> Result<usize, DatasetError> {
    write_jsonl(w, items)
}
