//! Mining toolkit for query-based multi-document summarization (qMDS) datasets.
//!
//! Given a question-answering corpus (queries paired with multi-sentence long
//! answers) and a document corpus, the miner matches every answer sentence
//! against the corpus by unit-embedding dot product, aggregates sentence
//! matches into document scores, and emits (query, summary, input documents)
//! triplets in conjugate abstractive and extractive variants. The crate also
//! ships the diagnostics (coverage/density, n-gram overlap, ROUGE) and the
//! TextRank / query-filter baselines used to characterize a mined dataset.
//!
//! Modules map onto pipeline stages:
//!
//! - [`corpus`], [`segment`], [`tokenize`] — ingestion, sentence
//!   segmentation, metric tokenization, dataset serialization
//! - [`embedding`] — unit-normalized sentence vectors (hashing baseline or
//!   precomputed)
//! - [`index`] — spill-tree threshold range queries with a brute-force oracle
//! - [`miner`] — match sets, document scoring, recall gating, extractive
//!   substitution, split assignment
//! - [`metrics`] — extractive fragments, coverage/density, clipped n-gram
//!   precision, ROUGE, dataset statistics
//! - [`baselines`] — TextRank and the query paragraph pre-filter
//! - [`pipeline`] / [`config`] — sharded deterministic end-to-end runs

pub mod baselines;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod fixture;
pub mod hash;
pub mod index;
pub mod metrics;
pub mod miner;
pub mod pipeline;
pub mod segment;
pub mod tokenize;

pub use error::{Error, Result};
