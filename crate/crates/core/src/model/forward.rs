use std::ops::Range;

use super::memory::MemoryUpdate;
use super::tensor::softmax;
use super::{cell_step, memory_step, AblationFlags, CellStep, ModelError, ModelParams};
use crate::corpus::{Chunk, TokenId, EOS};

/// Everything a forward pass computed, sufficient for exact backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// The processed input stream.
    pub tokens: Vec<TokenId>,
    /// Segment boundaries in `tokens`: the context chunks, then the summary.
    pub segments: Vec<Range<usize>>,
    /// One entry per input position.
    pub steps: Vec<CellStep>,
    /// Memory added to the inputs of each segment; `None` means zero memory.
    pub segment_memory: Vec<Option<Vec<f64>>>,
    /// The update that produced each segment's memory.
    pub memory_updates: Vec<Option<MemoryUpdate>>,
    /// Input position whose hidden state yields the first logit row.
    pub first_prediction: usize,
    /// One row over the vocabulary per predicted position.
    pub logits: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
    pub flags: AblationFlags,
    pub d: usize,
    pub vocab: usize,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn hidden(&self, t: usize) -> &[f64] {
        &self.steps[t].h
    }

    /// Input position feeding logit row `j`.
    pub fn prediction_position(&self, j: usize) -> usize {
        self.first_prediction + j
    }

    /// Attention weights of the update that produced segment `i`'s memory.
    pub fn attention_weights(&self, i: usize) -> Option<&[f64]> {
        self.memory_updates[i]
            .as_ref()
            .map(|u| u.weights.as_slice())
    }
}

pub(crate) fn output_logits(params: &ModelParams, h: &[f64]) -> Vec<f64> {
    let mut out = params.b_o.data().to_vec();
    params.w_o.matvec_add(h, &mut out);
    out
}

pub(crate) fn check_tokens(params: &ModelParams, tokens: &[TokenId]) -> Result<(), ModelError> {
    let vocab = params.vocab_size();
    match tokens.iter().find(|&&t| t as usize >= vocab) {
        Some(&token) => Err(ModelError::TokenOutOfRange { token, vocab }),
        None => Ok(()),
    }
}

/// Runs the recurrence over `tokens` split into `segments` and emits
/// `predictions` logit rows starting at input position `first_prediction`.
pub(crate) fn run_segments(
    params: &ModelParams,
    tokens: &[TokenId],
    segments: Vec<Range<usize>>,
    first_prediction: usize,
    predictions: usize,
    flags: AblationFlags,
) -> Result<ForwardTrace, ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    check_tokens(params, tokens)?;
    debug_assert!(predictions == 0 || first_prediction + predictions <= tokens.len());
    let d = params.d();

    let mut steps: Vec<CellStep> = Vec::with_capacity(tokens.len());
    let mut segment_memory: Vec<Option<Vec<f64>>> = Vec::with_capacity(segments.len());
    let mut memory_updates = Vec::with_capacity(segments.len());
    let mut h = vec![0.0; d];

    for (i, seg) in segments.iter().enumerate() {
        let (update, mem) = if i == 0 || flags.disable_memory {
            (None, None)
        } else {
            let prev_seg = &segments[i - 1];
            let prev_mem = segment_memory[i - 1]
                .clone()
                .unwrap_or_else(|| vec![0.0; d]);
            let hiddens: Vec<&[f64]> = steps[prev_seg.clone()]
                .iter()
                .map(|s| s.h.as_slice())
                .collect();
            let up = memory_step(params, &prev_mem, &hiddens)?;
            let next = up.next.clone();
            (Some(up), Some(next))
        };
        for &tok in &tokens[seg.clone()] {
            let mut x = params.embedding.row(tok as usize).to_vec();
            if let Some(m) = &mem {
                for (xi, mi) in x.iter_mut().zip(m) {
                    *xi += mi;
                }
            }
            let step = cell_step(params, &h, x);
            h.clone_from(&step.h);
            steps.push(step);
        }
        memory_updates.push(update);
        segment_memory.push(mem);
    }

    let logits: Vec<Vec<f64>> = (first_prediction..first_prediction + predictions)
        .map(|t| output_logits(params, &steps[t].h))
        .collect();
    let probs = logits.iter().map(|l| softmax(l)).collect();

    Ok(ForwardTrace {
        tokens: tokens.to_vec(),
        segments,
        steps,
        segment_memory,
        memory_updates,
        first_prediction,
        logits,
        probs,
        flags,
        d,
        vocab: params.vocab_size(),
    })
}

fn chunk_ranges(chunks: &[Chunk]) -> Result<Vec<Range<usize>>, ModelError> {
    let mut ranges = Vec::with_capacity(chunks.len());
    let mut offset = 0;
    for (i, c) in chunks.iter().enumerate() {
        if c.tokens.is_empty() {
            return Err(ModelError::InvalidChunks(format!(
                "chunk {} is empty",
                c.index
            )));
        }
        if c.index != i + 1 || c.source_offset != offset {
            return Err(ModelError::InvalidChunks(format!(
                "chunk {} is out of sequence",
                c.index
            )));
        }
        ranges.push(offset..offset + c.tokens.len());
        offset += c.tokens.len();
    }
    Ok(ranges)
}

/// Teacher-forced pass over a chunked context followed by `target`.
///
/// Logit row `j` is the distribution over `target[j]` given the context and
/// `target[..j]`. The target prefix runs as one segment after the last chunk,
/// so it sees the memory refreshed from that chunk.
pub fn forward(
    params: &ModelParams,
    context: &[Chunk],
    target: &[TokenId],
    flags: AblationFlags,
) -> Result<ForwardTrace, ModelError> {
    if context.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    match target.last() {
        None => return Err(ModelError::InvalidTarget("target is empty".into())),
        Some(&t) if t != EOS => {
            return Err(ModelError::InvalidTarget("target must end with EOS".into()))
        }
        _ => {}
    }
    check_tokens(params, target)?;
    let mut segments = chunk_ranges(context)?;
    let ctx_len = segments.last().map_or(0, |r| r.end);
    let mut tokens: Vec<TokenId> = context
        .iter()
        .flat_map(|c| c.tokens.iter().copied())
        .collect();
    tokens.extend_from_slice(&target[..target.len() - 1]);
    if tokens.len() > ctx_len {
        segments.push(ctx_len..tokens.len());
    }
    run_segments(params, &tokens, segments, ctx_len - 1, target.len(), flags)
}

/// Next-token pass over a whole stream chunked by `l_chunk`: logit row `t`
/// predicts `stream[t + 1]`.
pub fn forward_stream(
    params: &ModelParams,
    stream: &[TokenId],
    l_chunk: usize,
    flags: AblationFlags,
) -> Result<ForwardTrace, ModelError> {
    if stream.len() < 2 {
        return Err(ModelError::EmptyInput);
    }
    if l_chunk == 0 {
        return Err(ModelError::InvalidChunks(
            "chunk length must be positive".into(),
        ));
    }
    let input = &stream[..stream.len() - 1];
    let segments = (0..input.len())
        .step_by(l_chunk)
        .map(|s| s..(s + l_chunk).min(input.len()))
        .collect();
    run_segments(params, input, segments, 0, input.len(), flags)
}

/// Memory-free single-segment pass; returns the mean hidden state and the trace.
pub fn encode_traced(
    params: &ModelParams,
    tokens: &[TokenId],
) -> Result<(Vec<f64>, ForwardTrace), ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let flags = AblationFlags {
        disable_memory: true,
        ..Default::default()
    };
    let trace = run_segments(
        params,
        tokens,
        std::iter::once(0..tokens.len()).collect(),
        0,
        0,
        flags,
    )?;
    let mut mean = vec![0.0; params.d()];
    for s in &trace.steps {
        for (m, h) in mean.iter_mut().zip(&s.h) {
            *m += h;
        }
    }
    let n = tokens.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    Ok((mean, trace))
}

/// Mean hidden state of a memory-free pass over `tokens`.
pub fn encode_sequence(params: &ModelParams, tokens: &[TokenId]) -> Result<Vec<f64>, ModelError> {
    encode_traced(params, tokens).map(|(v, _)| v)
}
