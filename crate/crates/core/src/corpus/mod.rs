//! Data model, tokenization, vocabulary, key-element extraction, chunking,
//! dataset files and the synthetic corpus generator.

mod chunk;
mod dataset;
mod keys;
mod synth;
mod tokenize;
mod vocab;

use std::path::PathBuf;

use thiserror::Error;

pub use chunk::{chunk, concat_chunks, Chunk};
pub use dataset::{
    encode_record, load_dataset, read_records, records_to_jsonl, split_dataset, token_streams,
    DatasetRecord, PaperRecord,
};
pub use keys::{extract_key_elements, sentence_spans};
pub use synth::{generate_synthetic_corpus, KEY_FACT_PREFIX};
pub use tokenize::tokenize;
pub use vocab::{
    build_vocab, Vocabulary, BOS, EOS, KEY_MARK, PAD, RESERVED, SEP_DOC, SEP_SUM, UNK,
};

pub type TokenId = u32;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty input")]
    EmptyInput,
    #[error("chunk length must be positive")]
    ZeroChunkLength,
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("vocabulary: {0}")]
    Vocabulary(String),
}

/// One input paper, already encoded against a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaperDocument {
    pub id: String,
    pub title: String,
    pub body: Vec<TokenId>,
    /// Reference comparative insight for this paper; may be empty.
    pub insight: Vec<TokenId>,
}

/// A group of papers with its reference comparative summary: one example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaperSet {
    pub id: String,
    pub docs: Vec<PaperDocument>,
    /// Reference summary, terminated by [`EOS`].
    pub ref_summary: Vec<TokenId>,
}

impl PaperSet {
    /// Checks the structural invariants against a vocabulary of size `vocab_len`.
    pub fn validate(&self, vocab_len: usize) -> Result<(), String> {
        if self.docs.is_empty() {
            return Err("a paper set needs at least one paper".into());
        }
        if self.ref_summary.last() != Some(&EOS) {
            return Err("ref_summary must end with EOS".into());
        }
        let in_range = |ids: &[TokenId]| ids.iter().all(|&t| (t as usize) < vocab_len);
        for doc in &self.docs {
            if doc.body.is_empty() {
                return Err(format!("paper {} has an empty body", doc.id));
            }
            if !in_range(&doc.body) || !in_range(&doc.insight) {
                return Err(format!("paper {} has out-of-range token ids", doc.id));
            }
        }
        if !in_range(&self.ref_summary) {
            return Err("ref_summary has out-of-range token ids".into());
        }
        Ok(())
    }

    /// Insight sequences of the papers that have one.
    pub fn insights(&self) -> impl Iterator<Item = &[TokenId]> {
        self.docs
            .iter()
            .map(|d| d.insight.as_slice())
            .filter(|i| !i.is_empty())
    }
}

/// How to flatten a [`PaperSet`] into a model context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextOptions {
    /// Sentences extracted per paper when key elements are enabled.
    pub key_k: usize,
    pub use_key_elements: bool,
}

impl Default for ContextOptions {
    fn default() -> Self {
        Self {
            key_k: 1,
            use_key_elements: true,
        }
    }
}

/// Flattens a paper set as
/// `BOS, [KEY_MARK span KEY_MARK]*, body_1, SEP_DOC, .., body_n, SEP_SUM`.
///
/// Sentences end at the `period` token; pass `None` when the vocabulary has
/// no period, in which case every body is a single sentence.
pub fn assemble_context(
    set: &PaperSet,
    period: Option<TokenId>,
    options: ContextOptions,
) -> Vec<TokenId> {
    let mut out = vec![BOS];
    if options.use_key_elements && options.key_k > 0 {
        for doc in &set.docs {
            for span in extract_key_elements(doc, options.key_k, period) {
                out.push(KEY_MARK);
                out.extend_from_slice(&doc.body[span]);
                out.push(KEY_MARK);
            }
        }
    }
    for (i, doc) in set.docs.iter().enumerate() {
        if i > 0 {
            out.push(SEP_DOC);
        }
        out.extend_from_slice(&doc.body);
    }
    out.push(SEP_SUM);
    out
}
