use super::{CorpusError, TokenId};

/// A contiguous span of the flattened context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    /// 1-based position in the chunk sequence.
    pub index: usize,
    pub tokens: Vec<TokenId>,
    /// Offset of the first token in the flattened context.
    pub source_offset: usize,
}

/// Partitions `tokens` into `ceil(len / l_chunk)` consecutive chunks; every
/// chunk but the last holds exactly `l_chunk` tokens.
pub fn chunk(tokens: &[TokenId], l_chunk: usize) -> Result<Vec<Chunk>, CorpusError> {
    if l_chunk == 0 {
        return Err(CorpusError::ZeroChunkLength);
    }
    if tokens.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    Ok(tokens
        .chunks(l_chunk)
        .enumerate()
        .map(|(i, span)| Chunk {
            index: i + 1,
            tokens: span.to_vec(),
            source_offset: i * l_chunk,
        })
        .collect())
}

pub fn concat_chunks(chunks: &[Chunk]) -> Vec<TokenId> {
    chunks
        .iter()
        .flat_map(|c| c.tokens.iter().copied())
        .collect()
}
