//! Cross-document event coreference with argument-centric causal debiasing.
//!
//! The pipeline scores mention pairs with a cross-encoder, estimates the
//! trigger-only bias of each pair through a counterfactual input variant,
//! adds an argument-only enhancement score, combines the three into a
//! debiased decision, and clusters the surviving pairs into coreference
//! chains. A discrete structural-causal-model lab and a synthetic
//! confounded-corpus generator make the debiasing behavior testable at desk
//! scale, and the standard coreference metrics (MUC, B-cubed, CEAFe, LEA,
//! CoNLL F1) are implemented with exact cluster alignment.

pub mod clustering;
pub mod corpus;
pub mod encoding;
pub mod experiment;
pub mod lemma;
pub mod manifest;
pub mod metrics;
pub mod nn;
pub mod plot;
pub mod pairgen;
pub mod scm;
pub mod scoring;
pub mod synth;
pub mod training;
