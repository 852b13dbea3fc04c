//! Comparative multi-document summarization with a chunked recurrent model.
//!
//! The crate is split along the pipeline:
//!
//! - [`corpus`]: tokenization, vocabulary, key-element extraction, chunking,
//!   dataset ingestion and a synthetic corpus generator.
//! - [`model`]: parameters, the gated recurrent cell, the attention memory that
//!   carries information across chunks, the forward pass and decoding.
//! - [`training`]: generation and contrastive losses, exact backpropagation,
//!   a finite-difference checker, Adam, and the two training stages.
//! - [`metrics`]: ROUGE-1/2/L, G-Score and dataset-level reports.

pub mod corpus;
pub mod metrics;
pub mod model;
pub mod training;

pub use corpus::{PaperDocument, PaperSet, TokenId, Vocabulary};
pub use model::{AblationFlags, Checkpoint, ModelParams};
