//! One line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use mechnli::annotate::EntityPool;
use mechnli::corpus::{Abstract, EntityMention, Role, Sentence, Span};
use mechnli::dataset::{assemble, write_instances, Category, Group, Label, NLIInstance, Negative, Split, SplitPolicy};
use mechnli::evalharness::{consistency, evaluate, PredictionRecord};
use mechnli::extract::{find_conclusion, split_abstract, PhraseTable, PremiseBounds};
use mechnli::genfilter::{filter_gen, filter_gnd, FilterConfig, FilterError, GndScheme, RelationPredictor, SimilarityScorer};
use mechnli::lm::{FnScorer, SequenceScorer, TokenId, Vocab};
use mechnli::neurologic::{build_sre_constraints, decode, Clause, ConstraintSet, DecodeError, DecoderConfig, Literal};
use mechnli::perturb::{perturb_instance, PerturbResources, PerturbationKind};
use mechnli::seed::{derive_seed, rng};
use mechnli::synth::{abstract_with, extraction_corpus, Features};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

// Golden fidelity

fn golden() -> Outcome {
    let start = Instant::now();
    let r = extract_one(ABA);
    ensure(r.conclusion.render() == aba_conclusion(), || "conclusion differs".into())?;
    let got = perturb_instance(&r, &aba_resources(), &PerturbationKind::RULE_BASED, ABA_SEED);
    for (kind, want) in aba_rows() {
        let k: PerturbationKind = kind.parse().unwrap();
        let h = got.iter().find(|p| p.kind == k).map(|p| p.hypothesis.render());
        ensure(h.as_deref() == Some(want.as_str()), || format!("{kind}: got {h:?}"))?;
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("5 rows byte-identical in {:?}", start.elapsed()))
}

// Extraction

const PUBLISHED_PHRASES: [&str; 13] = [
    "we conclude that",
    "it is concluded that",
    "it was concluded that",
    "we concluded that",
    "we have concluded that",
    "it has been concluded that",
    "it may be concluded that",
    "it was therefore concluded that",
    "we therefore conclude that",
    "we conclude",
    "we thus conclude that",
    "it is therefore concluded that",
    "we further conclude that",
];

fn extraction() -> Outcome {
    let table = PhraseTable::default();
    ensure(table.phrases() == PUBLISHED_PHRASES, || "default table differs from the published list".into())?;
    for (i, p) in PUBLISHED_PHRASES.iter().enumerate() {
        let a = abstract_with(i, Some(p), &Features::default());
        let last = a.sentences.last().unwrap().text.to_lowercase();
        let expected = PUBLISHED_PHRASES.iter().find(|q| last.contains(*q)).copied();
        let got = find_conclusion(&a, &table).map(|(idx, q)| (idx, q.to_string()));
        ensure(got == expected.map(|q| (a.sentences.len() - 1, q.to_string())), || format!("{p:?}: {got:?}"))?;
    }
    let corpus = extraction_corpus(100, 91);
    let got: Vec<String> = corpus
        .iter()
        .filter_map(|a| split_abstract(a, &table, PremiseBounds::default()))
        .map(|r| r.abstract_id)
        .collect();
    let want: Vec<String> = corpus[..91].iter().map(|a| a.id.clone()).collect();
    ensure(got == want, || format!("{} extracted", got.len()))?;
    Ok(format!("13/13 phrases matched; {}/100 abstracts extracted", got.len()))
}

// Applicability floor

fn surface() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9]{0,5}(-[0-9]{1,2})?"
}

fn random_abstract() -> impl Strategy<Value = (Abstract, u8)> {
    (
        surface(),
        surface(),
        0..PUBLISHED_PHRASES.len(),
        any::<bool>(),
        3usize..8,
        0u8..128,
        0.0..100.0f64,
    )
        .prop_map(|(reg, regd, p, regulated_first, n_support, bits, num)| {
            let f = Features::from_bits(bits);
            let mut sentences: Vec<String> = (0..n_support)
                .map(|k| match k % 3 {
                    0 => format!("{reg} was measured in cells."),
                    1 => format!("Levels reached {num:.1} mM."),
                    _ => "Controls were unchanged.".to_string(),
                })
                .collect();
            let (first, second) = if regulated_first { (&regd, &reg) } else { (&reg, &regd) };
            let verb = if f.vneg { "is required for" } else { "drives" };
            let noun = if f.lpr { "increase" } else { "level" };
            let head = format!("{} ", PUBLISHED_PHRASES[p]);
            let mid = format!(" {verb} the {noun} of ");
            sentences.push(format!("{head}{first}{mid}{second} at {num:.0} mM."));
            let start1 = head.chars().count();
            let end1 = start1 + first.chars().count();
            let start2 = end1 + mid.chars().count();
            let span1 = Span::new(start1, end1);
            let span2 = Span::new(start2, start2 + second.chars().count());
            let (reg_span, regd_span) = if regulated_first { (span2, span1) } else { (span1, span2) };
            let idx = sentences.len() - 1;
            let mention = |surface: &str, role, span| EntityMention {
                surface: surface.to_string(),
                type_label: "SIMPLE_CHEMICAL".into(),
                role,
                sentence_index: idx,
                span,
            };
            let mut mentions = vec![mention(&reg, Role::Regulator, reg_span), mention(&regd, Role::Regulated, regd_span)];
            mentions.sort_by_key(|m| m.span.start);
            let a = Abstract {
                id: "rand".into(),
                sentences: sentences
                    .into_iter()
                    .enumerate()
                    .map(|(index, text)| Sentence { index, text })
                    .collect(),
                mentions,
            };
            (a, bits)
        })
}

fn applicability_floor() -> Outcome {
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 1000,
            failure_persistence: None,
            ..Config::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let pool = EntityPool::from_tsv("integrin\tSIMPLE_CHEMICAL\nglucose\tSIMPLE_CHEMICAL\n").unwrap();
    let res = PerturbResources::bundled(pool);
    let floor: BTreeSet<PerturbationKind> = [PerturbationKind::Sen, PerturbationKind::Sep].into();
    let counter = std::cell::Cell::new((0usize, 0usize));
    runner
        .run(&random_abstract(), |(a, bits)| {
            prop_assert_eq!(a.validate(), Ok(()));
            let (mut e, mut s) = counter.get();
            match split_abstract(&a, &PhraseTable::default(), PremiseBounds::default()) {
                Some(r) => {
                    e += 1;
                    let ps = perturb_instance(&r, &res, &PerturbationKind::RULE_BASED, bits as u64);
                    let g = Group::from_extraction(&r, &ps, std::iter::empty());
                    prop_assert!(g.applicable().is_superset(&floor), "{:?}", g.applicable());
                }
                None => {
                    prop_assert_eq!(
                        a.mentions[0].surface.as_str(),
                        a.mentions[1].surface.as_str(),
                        "only identical names are skipped"
                    );
                    s += 1;
                }
            }
            counter.set((e, s));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let (extracted, skipped) = counter.get();
    ensure(extracted + skipped == 1000 && extracted >= 990, || format!("only {extracted} groups extracted"))?;
    Ok(format!("{extracted} random groups all contain SEN and SEP ({skipped} identical-name abstracts skipped)"))
}

// Decoder oracle

fn toy_scorer(v: usize, seed: u64) -> impl SequenceScorer {
    let vocab = Vocab::new((0..v).map(|i| if i == 0 { "</s>".to_string() } else { format!("w{i}") }).collect());
    FnScorer::new(vocab, 0, move |prefix: &[TokenId]| {
        let key: Vec<String> = prefix.iter().map(|t| t.to_string()).collect();
        let mut r = rng(derive_seed(seed, &[&key.join(" ")]));
        (0..v).map(|_| r.gen_range(0.02..1.0)).collect()
    })
}

fn random_constraints(v: usize, r: &mut impl Rng) -> ConstraintSet {
    let phrase = |r: &mut dyn rand::RngCore| {
        let n = r.gen_range(1..=2);
        (0..n).map(|_| format!("w{}", r.gen_range(1..v))).collect::<Vec<_>>().join(" ")
    };
    let clauses = (0..r.gen_range(0..=3))
        .map(|_| {
            if r.gen_bool(0.35) {
                Clause(vec![Literal::must_not_appear(&phrase(r)).unwrap()])
            } else {
                Clause((0..r.gen_range(1..=2)).map(|_| Literal::must_appear(&phrase(r)).unwrap()).collect())
            }
        })
        .collect();
    ConstraintSet(clauses)
}

/// Best score over every sequence that satisfies `cs` and contains no forbidden phrase.
fn brute_force(m: &dyn SequenceScorer, cs: &ConstraintSet, min_len: usize, max_len: usize) -> Option<f64> {
    let v = m.vocab().len() as TokenId;
    let mut best: Option<f64> = None;
    let mut stack: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    while let Some((seq, score)) = stack.pop() {
        let lp = m.logprobs(&seq).unwrap();
        if seq.len() >= min_len {
            let words = m.vocab().decode(&seq);
            if cs.evaluate(&words).fully_satisfied() {
                let s = score + lp[0];
                best = Some(best.map_or(s, |b: f64| b.max(s)));
            }
        }
        if seq.len() < max_len {
            for t in 1..v {
                let mut next = seq.clone();
                next.push(t);
                stack.push((next, score + lp[t as usize]));
            }
        }
    }
    best
}

fn decoder_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(20_240_601);
    let mut with_solution = 0;
    for case in 0..200 {
        let v = r.gen_range(3..=6);
        let max_len = r.gen_range(1..=5);
        let min_len = r.gen_range(1..=max_len);
        let m = toy_scorer(v, r.gen());
        let cs = random_constraints(v, &mut r);
        let all = (v - 1).pow(max_len as u32) + 1;
        let cfg = DecoderConfig {
            beam_size: all,
            prune_factor: all * v,
            sat_tolerance: cs.clauses().len() + 1,
            beta: 2.0,
            length_penalty: 0.0,
            ngram_block: max_len + 1,
            min_len,
            max_len,
        };
        let oracle = brute_force(&m, &cs, min_len, max_len);
        let out = match decode(&m, &cs, &cfg, &[]) {
            Ok(out) => out,
            Err(DecodeError::NoHypothesis) => Vec::new(),
            Err(e) => return Err(format!("case {case}: {e}")),
        };
        for h in &out {
            let words = m.vocab().decode(&h.tokens);
            ensure(!cs.evaluate(&words).violated, || format!("case {case}: forbidden phrase in {words:?}"))?;
        }
        let best = out.iter().find(|h| h.fully_satisfied).map(|h| h.model_score);
        match (oracle, best) {
            (None, None) => {}
            (Some(o), Some(b)) if (o - b).abs() < 1e-9 => with_solution += 1,
            _ => return Err(format!("case {case}: oracle {oracle:?}, decoder {best:?}")),
        }
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "200/200 cases equal the exhaustive optimum ({with_solution} satisfiable), 0 violations, {:?}",
        start.elapsed()
    ))
}

// Filter thresholds

struct Fixed(f64);

impl SimilarityScorer for Fixed {
    fn score(&self, _: &str, _: &str) -> Result<f64, FilterError> {
        Ok(self.0)
    }
}

/// Labels every text containing "blocks" as inhibits, anything else as activates.
struct Keyword;

impl RelationPredictor for Keyword {
    fn labels(&self) -> Vec<String> {
        vec!["activates".into(), "inhibits".into()]
    }
    fn predict(&self, text: &str, _: &str, _: &str) -> Result<String, FilterError> {
        Ok(if text.contains("blocks") { "inhibits" } else { "activates" }.into())
    }
}

fn filters() -> Outcome {
    let gold = mechnli::corpus::parse_marked("<re> insulin <er> raises <el> GLUT4 <le> levels").unwrap();
    let cfg = FilterConfig::default();
    let mut checked = 0;
    for q in [0.449, 0.450, 0.451] {
        for (text, wrong) in [("insulin blocks GLUT4", true), ("insulin raises GLUT4", false)] {
            let got = filter_gen(text, &gold, &Fixed(q), &Keyword, &cfg).map_err(|e| e.to_string())?;
            let want = q < 0.45 && wrong;
            ensure(got == want, || format!("gen q={q} wrong={wrong}: {got}"))?;
            checked += 1;
        }
    }
    let cs = build_sre_constraints(&gold, "leptin", Role::Regulator).map_err(|e| e.to_string())?;
    for s in [0.899, 0.900, 0.901] {
        for (text, satisfied) in [
            ("<re> leptin <er> raises <el> GLUT4 <le> levels", true),
            ("<re> leptin <er> raises GLUT4 levels", false),
        ] {
            let got = filter_gnd(text, &gold, GndScheme::Sre, &cs, &Fixed(s), &cfg).map_err(|e| e.to_string())?;
            let want = satisfied && s < 0.9;
            ensure(got == want, || format!("gnd s={s} satisfied={satisfied}: {got}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} boundary cases at lambda 0.45 and delta 0.9"))
}

// Balanced assembly

fn capped_groups(n: usize) -> Vec<Group> {
    let mut r = rng(77);
    (0..n)
        .map(|i| {
            let negatives = PerturbationKind::ALL
                .into_iter()
                .filter(|k| matches!(k, PerturbationKind::Sen | PerturbationKind::Sep) || r.gen_bool(0.3))
                .map(|kind| Negative {
                    kind,
                    hypothesis: format!("{kind} hypothesis {i}"),
                })
                .collect();
            Group {
                group_id: format!("g{i:05}"),
                source_abstract_id: format!("a{i:05}"),
                premise: format!("premise {i}"),
                positive: format!("positive {i}"),
                negatives,
            }
        })
        .collect()
}

fn balanced() -> Outcome {
    let gs = capped_groups(13489);
    let policy = SplitPolicy::default().balanced();
    let run = || -> Result<(Vec<u8>, mechnli::dataset::SplitStats), String> {
        let a = assemble(&gs, &policy, 42).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        write_instances(&mut buf, a.instances.iter().map(|(_, i)| i)).map_err(|e| e.to_string())?;
        Ok((buf, a.stats.split(Split::Train)))
    };
    let (first, train) = run()?;
    let (second, _) = run()?;
    let worst = train
        .negatives
        .iter()
        .filter(|(k, _)| k.is_rule_based())
        .map(|(_, n)| *n)
        .max()
        .unwrap_or(0);
    ensure(worst <= 500, || format!("a rule-based train category has {worst}"))?;
    ensure(first == second, || "two runs differ".into())?;
    Ok(format!("largest rule-based train category {worst}; {} bytes identical across runs", first.len()))
}

// Metrics

fn instance(group: usize, n: usize, category: Category) -> NLIInstance {
    NLIInstance {
        id: format!("g{group}:{n}"),
        group_id: format!("g{group}"),
        premise: String::new(),
        hypothesis: format!("h{group}:{n}"),
        label: category.label(),
        category,
        source_abstract_id: format!("a{group}"),
    }
}

fn flip(l: Label) -> Label {
    match l {
        Label::Entailed => Label::NotEntailed,
        Label::NotEntailed => Label::Entailed,
    }
}

/// Reference premise+hypothesis recall cells for the full distribution, second biomedical model.
const RECALL_CELLS: [(&str, &str); 9] = [
    ("SEN", "0.97"),
    ("SEP", "0.98"),
    ("SRE", "0.50"),
    ("SREO", "0.99"),
    ("VNeg", "0.86"),
    ("SN", "0.81"),
    ("LPR", "0.59"),
    ("GEN-ND", "0.56"),
    ("GEN", "0.57"),
];

fn metrics() -> Outcome {
    let mut instances = Vec::new();
    let mut preds = Vec::new();
    for (c, (kind, cell)) in RECALL_CELLS.iter().enumerate() {
        let k: PerturbationKind = kind.parse().unwrap();
        let hits = (cell.parse::<f64>().unwrap() * 100.0).round() as usize;
        for n in 0..100 {
            let inst = instance(c, n, Category::Negative(k));
            let label = if n < hits { inst.label } else { flip(inst.label) };
            preds.push(PredictionRecord { id: inst.id.clone(), label });
            instances.push(inst);
        }
    }
    for n in 0..100 {
        let inst = instance(99, n, Category::Positive);
        preds.push(PredictionRecord { id: inst.id.clone(), label: inst.label });
        instances.push(inst);
    }
    let report = evaluate(&instances, &preds).map_err(|e| e.to_string())?;
    for (kind, cell) in RECALL_CELLS {
        let got = report.category_recall.get(&kind.parse().unwrap()).map(|r| format!("{r:.2}"));
        ensure(got.as_deref() == Some(cell), || format!("{kind}: {got:?}, published {cell}"))?;
    }

    let mut instances = Vec::new();
    let mut preds = Vec::new();
    for g in 0..100 {
        let correct = if g < 30 { 7 + g % 4 } else { g % 7 };
        for n in 0..10 {
            let cat = if n == 0 {
                Category::Positive
            } else {
                Category::Negative(PerturbationKind::RULE_BASED[n % 7])
            };
            let inst = instance(g, n, cat);
            let label = if n < correct { inst.label } else { flip(inst.label) };
            preds.push(PredictionRecord { id: inst.id.clone(), label });
            instances.push(inst);
        }
    }
    let c = consistency(&instances, &preds).map_err(|e| e.to_string())?;
    let share = format!("{:.2}", c.at_least(0.7));
    ensure(share == "0.30", || format!("consistency at 0.7 is {share}"))?;
    Ok(format!("{} category cells match; {share} of groups at >= 0.7 correct", RECALL_CELLS.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("golden-example fidelity", golden),
        ("extraction", extraction),
        ("applicability floor", applicability_floor),
        ("decoder oracle equivalence", decoder_oracle),
        ("filter thresholds", filters),
        ("balanced assembly", balanced),
        ("metrics", metrics),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", 7 - failed, 7);
    if failed > 0 {
        std::process::exit(1);
    }
}
