//! Genomic language-modeling toolkit.

pub mod analytics;
pub mod design;
pub mod ingest;
pub mod lm;
pub mod recover;
pub mod rng;
pub mod sample;
pub mod seq;
pub mod tokenize;
pub mod vep;
