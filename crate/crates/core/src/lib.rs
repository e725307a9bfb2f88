//! Sequence labeling of genomic variant mentions: domain tokenization,
//! character and word representations, residual stacked BiLSTMs, a
//! linear-chain CRF, and exact-match entity evaluation.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod crf;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod network;
pub mod numerics;
pub mod par;
pub mod rng;
pub mod synthetic;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
