//! Construction of adversarial natural-language-inference datasets from
//! entity-annotated scientific abstracts.
//!
//! The pipeline runs in stages: [`extract`] pulls (premise, conclusion) pairs
//! out of abstracts, [`perturb`] and [`neurologic`] produce counterfactual
//! hypotheses, [`genfilter`] keeps the generated ones that qualify,
//! [`dataset`] assembles splits, and [`evalharness`] scores classifier output.

pub mod annotate;
pub mod bridge;
pub mod conformance;
pub mod corpus;
pub mod dataset;
pub mod evalharness;
pub mod extract;
pub mod genfilter;
pub mod lm;
pub mod neurologic;
pub mod perturb;
pub mod pipeline;
pub mod seed;
pub mod synth;
