//! ROUGE-1/2/L, G-Score and dataset-level evaluation reports.

mod gscore;
mod report;
mod rouge;

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::model::ModelError;

pub use gscore::{g_score, sentences, GScore, COMPARATIVE_LEXICON, DEFAULT_TAU};
pub use report::{
    evaluate_dataset, evaluate_with, DecodeSettings, EvalReport, ExampleScores, ModelSummarizer,
    Summarizer,
};
pub use rouge::{lcs_len, rouge_l, rouge_n, Prf, RougeScores};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}
