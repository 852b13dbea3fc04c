use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, CorpusError, PaperDocument, PaperSet, Vocabulary, EOS};

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub papers: Vec<PaperRecord>,
    pub ref_summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub id: String,
    pub title: String,
    pub text: String,
    pub insight: String,
}

impl DatasetRecord {
    fn check(&self) -> Result<(), String> {
        if self.papers.is_empty() {
            return Err("papers must contain at least one paper".into());
        }
        for p in &self.papers {
            if tokenize(&p.text).is_empty() {
                return Err(format!("paper {:?} has empty text", p.id));
            }
        }
        if tokenize(&self.ref_summary).is_empty() {
            return Err("ref_summary is empty".into());
        }
        Ok(())
    }
}

/// Reads a line-delimited dataset file. Blank lines are skipped; errors name
/// the 1-based physical line.
pub fn read_records(path: &Path) -> Result<Vec<DatasetRecord>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_records(&text)
}

pub(crate) fn parse_records(text: &str) -> Result<Vec<DatasetRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| CorpusError::Schema {
            line: i + 1,
            message,
        };
        let record: DatasetRecord =
            serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
        record.check().map_err(schema)?;
        out.push(record);
    }
    Ok(out)
}

/// Serializes records one JSON object per line.
pub fn records_to_jsonl(records: &[DatasetRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records always serialize"));
        out.push('\n');
    }
    out
}

pub fn encode_record(record: &DatasetRecord, vocab: &Vocabulary) -> PaperSet {
    let docs = record
        .papers
        .iter()
        .map(|p| PaperDocument {
            id: p.id.clone(),
            title: p.title.clone(),
            body: vocab.encode(&p.text),
            insight: vocab.encode(&p.insight),
        })
        .collect();
    let mut ref_summary = vocab.encode(&record.ref_summary);
    ref_summary.push(EOS);
    PaperSet {
        id: record.id.clone(),
        docs,
        ref_summary,
    }
}

/// Loads and encodes a dataset file, preserving record order.
pub fn load_dataset(path: &Path, vocab: &Vocabulary) -> Result<Vec<PaperSet>, CorpusError> {
    Ok(read_records(path)?
        .iter()
        .map(|r| encode_record(r, vocab))
        .collect())
}

/// Token streams a vocabulary is built from: every paper text and insight and
/// every reference summary.
pub fn token_streams(records: &[DatasetRecord]) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for r in records {
        for p in &r.papers {
            out.push(tokenize(&p.text));
            out.push(tokenize(&p.insight));
        }
        out.push(tokenize(&r.ref_summary));
    }
    out
}

/// Splits examples 80/10/10 into train, validation and test, in order.
pub fn split_dataset<T: Clone>(items: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = items.len();
    let train = n * 8 / 10;
    let val = n / 10;
    (
        items[..train].to_vec(),
        items[train..train + val].to_vec(),
        items[train + val..].to_vec(),
    )
}
