use std::collections::HashMap;
use std::fmt::Write as _;

use super::{CorpusError, TokenId};

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
/// Separates consecutive papers in an assembled context.
pub const SEP_DOC: TokenId = 4;
/// Separates the context from the summary.
pub const SEP_SUM: TokenId = 5;
/// Brackets an extracted key element.
pub const KEY_MARK: TokenId = 6;

/// Surface forms of the reserved tokens, in id order.
pub const RESERVED: [&str; 7] = [
    "<pad>",
    "<bos>",
    "<eos>",
    "<unk>",
    "<sep_doc>",
    "<sep_sum>",
    "<key>",
];

/// Dense bijection between token strings and ids `0..len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Vocabulary holding only the reserved tokens.
    pub fn reserved_only() -> Self {
        Self::from_tokens_unchecked(RESERVED.iter().map(|s| s.to_string()).collect())
    }

    /// Builds a vocabulary from an ordered token list whose first seven entries
    /// must be the reserved tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, CorpusError> {
        if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED.iter()).any(|(a, b)| a != b)
        {
            return Err(CorpusError::Vocabulary(
                "reserved tokens must occupy ids 0..6".into(),
            ));
        }
        let vocab = Self::from_tokens_unchecked(tokens);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(CorpusError::Vocabulary("duplicate token".into()));
        }
        Ok(vocab)
    }

    fn from_tokens_unchecked(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(id, t)| (t.clone(), id as TokenId))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps tokens to ids, substituting [`UNK`] for anything unknown.
    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(UNK))
            .collect()
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        self.encode_tokens(&super::tokenize(text))
    }

    /// Maps ids back to token strings. Out-of-range ids decode as `<unk>`.
    pub fn decode_tokens(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(RESERVED[UNK as usize]).to_string())
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        self.decode_tokens(ids).join(" ")
    }

    /// Serializes as `v1 <V>` followed by one token per line in id order.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "v1 {}", self.tokens.len()).unwrap();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_file_str(text: &str) -> Result<Self, CorpusError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| CorpusError::Vocabulary("missing header".into()))?;
        let count: usize = header
            .strip_prefix("v1 ")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| CorpusError::Vocabulary(format!("bad header {header:?}")))?;
        let tokens: Vec<String> = lines.map(str::to_string).collect();
        if tokens.len() != count {
            return Err(CorpusError::Vocabulary(format!(
                "header declares {count} tokens, file has {}",
                tokens.len()
            )));
        }
        Self::from_tokens(tokens)
    }
}

/// Counts token frequencies and keeps those with at least `min_freq`
/// occurrences, ordered by descending frequency then lexicographically.
pub fn build_vocab<D, S>(corpus: &[D], min_freq: usize) -> Vocabulary
where
    D: AsRef<[S]>,
    S: AsRef<str>,
{
    assert!(min_freq >= 1, "min_freq must be positive");
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        for tok in doc.as_ref() {
            *counts.entry(tok.as_ref()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_freq && !RESERVED.contains(&t))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
    Vocabulary::from_tokens_unchecked(tokens)
}
