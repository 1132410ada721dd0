//! Flat `key = value` configuration with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use mechnli::dataset::{SplitPolicy, SplitSizes};
use mechnli::extract::PremiseBounds;
use mechnli::genfilter::FilterConfig;
use mechnli::neurologic::DecoderConfig;
use mechnli::perturb::PerturbationKind;

use crate::CliError;

/// (key, default, description). An empty default means "unset".
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "42", "base seed for every seeded stage"),
    ("jobs", "0", "worker threads, 0 for one per core; never changes output"),
    ("lenient", "false", "skip malformed corpus records instead of failing"),
    ("phrases", "", "conclusion phrase file, one per line; built-in table if unset"),
    ("premise_min", "3", "fewest supporting sentences kept"),
    ("premise_max", "15", "most supporting sentences kept"),
    ("lexicon", "", "entity type lexicon, surface<TAB>label; bundled if unset"),
    ("pool", "", "out-of-text entity pool, surface<TAB>label; built from the input if unset"),
    ("negation", "", "negation rules, phrase<TAB>negated; bundled if unset"),
    ("antonyms", "", "antonym lexicon, term<TAB>antonym; bundled if unset"),
    ("relations", "", "relation keyword table, stem<TAB>label; bundled if unset"),
    ("kinds", "SEN,SEP,SRE,SREO,VNeg,SN,LPR", "rule-based kinds to emit"),
    ("lm_order", "3", "n-gram order of the generator"),
    ("lm_discount", "0.4", "absolute discount of the generator"),
    ("decoder", "desk", "decoder preset: desk or paper"),
    ("beam_size", "", "overrides the preset beam size"),
    ("prune_factor", "", "overrides the preset pruning width"),
    ("min_len", "", "overrides the preset minimum length"),
    ("max_len", "", "overrides the preset maximum length"),
    ("per_run", "1", "candidates kept per decoding run"),
    ("lambda", "0.45", "upper bound on GEN quality"),
    ("delta", "0.9", "lower bound on GEN-ND similarity"),
    ("split_ratios", "8489:3000:2000", "train:dev:test weights over groups"),
    ("split_counts", "", "exact train:dev:test group counts; overrides ratios"),
    ("balanced", "false", "cap rule-based train categories"),
    ("balanced_cap", "500", "per-category cap in balanced mode"),
];

/// Keys that name files which must exist.
const PATH_KEYS: [&str; 6] = ["phrases", "lexicon", "pool", "negation", "antonyms", "relations"];

pub fn help_table() -> String {
    let mut out = String::from("Configuration keys (file lines `key = value`, or `--set key=value`):\n");
    for (k, d, desc) in KEYS {
        let d = if d.is_empty() { "unset" } else { d };
        out.push_str(&format!("  {k:<14} [default: {d}]  {desc}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            values: KEYS.iter().map(|(k, d, _)| (k.to_string(), d.to_string())).collect(),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl Config {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.trim().to_string();
                Ok(())
            }
            None => Err(usage(format!("unknown config key {key:?}"))),
        }
    }

    /// Applies `key=value` text; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("{origin}:{}: expected key = value", i + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| usage(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn apply_override(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects key=value, got {pair:?}")))?;
        self.set(k.trim(), v)
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        self.raw(key)
            .parse()
            .map_err(|_| usage(format!("{key} = {:?} is not valid", self.raw(key))))
    }

    fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let v = self.raw(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    /// Every configured file must exist before any stage runs.
    pub fn check_paths(&self) -> Result<(), CliError> {
        for k in PATH_KEYS {
            if let Some(p) = self.path(k) {
                if !p.is_file() {
                    return Err(usage(format!("{k}: no such file {}", p.display())));
                }
            }
        }
        Ok(())
    }

    /// Parses every key so a bad value fails before any stage runs.
    pub fn validate(&self) -> Result<(), CliError> {
        self.check_paths()?;
        self.seed()?;
        self.jobs()?;
        self.lenient()?;
        self.bounds()?;
        self.kinds()?;
        self.lm()?;
        self.decoder()?;
        self.per_run()?;
        self.filter()?;
        self.split_policy()?;
        Ok(())
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.parse("seed")
    }

    pub fn jobs(&self) -> Result<usize, CliError> {
        self.parse("jobs")
    }

    pub fn lenient(&self) -> Result<bool, CliError> {
        self.parse("lenient")
    }

    pub fn bounds(&self) -> Result<PremiseBounds, CliError> {
        let b = PremiseBounds {
            min: self.parse("premise_min")?,
            max: self.parse("premise_max")?,
        };
        if b.min > b.max {
            return Err(usage("premise_min exceeds premise_max"));
        }
        Ok(b)
    }

    pub fn kinds(&self) -> Result<Vec<PerturbationKind>, CliError> {
        let mut out = Vec::new();
        for s in self.raw("kinds").split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let k: PerturbationKind = s.parse().map_err(usage)?;
            if !k.is_rule_based() {
                return Err(usage(format!("kinds: {k} is not rule-based")));
            }
            out.push(k);
        }
        Ok(out)
    }

    pub fn lm(&self) -> Result<(usize, f64), CliError> {
        Ok((self.parse("lm_order")?, self.parse("lm_discount")?))
    }

    pub fn decoder(&self) -> Result<DecoderConfig, CliError> {
        let mut d = match self.raw("decoder") {
            "desk" => DecoderConfig::desk(),
            "paper" => DecoderConfig::paper(),
            other => return Err(usage(format!("decoder preset {other:?} is neither desk nor paper"))),
        };
        if let Some(x) = self.optional("beam_size")? {
            d.beam_size = x;
        }
        if let Some(x) = self.optional("prune_factor")? {
            d.prune_factor = x;
        }
        if let Some(x) = self.optional("min_len")? {
            d.min_len = x;
        }
        if let Some(x) = self.optional("max_len")? {
            d.max_len = x;
        }
        d.validate().map_err(|e| usage(e.to_string()))?;
        Ok(d)
    }

    pub fn per_run(&self) -> Result<usize, CliError> {
        self.parse("per_run")
    }

    pub fn filter(&self) -> Result<FilterConfig, CliError> {
        let f = FilterConfig {
            lambda: self.parse("lambda")?,
            delta: self.parse("delta")?,
        };
        f.validate().map_err(|e| usage(e.to_string()))?;
        Ok(f)
    }

    fn triple<T: FromStr>(&self, key: &str) -> Result<[T; 3], CliError> {
        let parts: Vec<T> = self
            .raw(key)
            .split(':')
            .map(|p| p.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| usage(format!("{key} expects three numbers a:b:c")))?;
        parts
            .try_into()
            .map_err(|_| usage(format!("{key} expects three numbers a:b:c")))
    }

    pub fn split_policy(&self) -> Result<SplitPolicy, CliError> {
        let sizes = if self.raw("split_counts").is_empty() {
            let [train, dev, test] = self.triple::<f64>("split_ratios")?;
            SplitSizes::Ratios { train, dev, test }
        } else {
            let [train, dev, test] = self.triple::<usize>("split_counts")?;
            SplitSizes::Counts { train, dev, test }
        };
        let balanced_cap = if self.parse("balanced")? {
            Some(self.parse("balanced_cap")?)
        } else {
            None
        };
        Ok(SplitPolicy { sizes, balanced_cap })
    }

    /// Every key except `jobs`, which cannot change any artifact.
    pub fn recorded(&self) -> BTreeMap<String, String> {
        self.values
            .iter()
            .filter(|(k, _)| k.as_str() != "jobs")
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.recorded() {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        hex(&h.finalize())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
