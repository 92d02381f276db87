//! Few-shot neural reranking with prompt-based learning and pre-finetuning.
//!
//! The pipeline, stage by stage:
//!
//! * [`corpus`] loads collections, queries, TREC qrels and runs.
//! * [`bm25`] builds an inverted index and produces first-stage candidates.
//! * [`partition`] samples few-shot training splits, dev sets and folds.
//! * [`prompting`] renders `(query, document)` pairs through templates and maps
//!   labels to label words.
//! * [`model`] scores rendered inputs with a label-word softmax read from the
//!   first decoder token (or a `[MASK]` position), backed by a small
//!   encoder-decoder transformer with its own reverse-mode autodiff.
//! * [`training`] runs pre-finetuning, ranking fine-tuning and prompt tuning.
//! * [`evaluation`] reranks, computes MRR/NDCG and paired significance.
//! * [`analysis`] dumps decision-token embeddings and score distributions.
//! * [`experiment`] wires everything into the few-shot transfer experiment.

#![forbid(unsafe_code)]

pub mod analysis;
pub mod bm25;
pub mod cli;
pub mod corpus;
mod error;
pub mod evaluation;
pub mod experiment;
pub mod model;
pub mod partition;
pub mod prompting;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
